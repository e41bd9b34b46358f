//! Classical multidimensional scaling of distance matrices and the cluster
//! structure function over the embedded points.
//!
//! Embedding is Torgerson's construction: square the distances, double-center
//! (B = -1/2 J D^2 J with J the centering projector), eigendecompose B, and
//! scale the top K eigenvectors by the square roots of their eigenvalues.
//! Distances that are not exactly Euclidean produce negative eigenvalues;
//! those are dropped and their total magnitude reported as a quality
//! diagnostic. Eigenpairs are ordered by descending eigenvalue and each
//! eigenvector's sign is fixed by its first significant component, so the
//! output is deterministic for identical input.
//!
//! The cluster structure function scores a labeled partition. The geometric
//! form is each point's distance to its own cluster centroid; the
//! compression form is delta(Y, y) = Z(Y) + ln|Y| - Z(y), with Z(Y) the
//! compressed size of the cluster's time-axis concatenation. Both report
//! per-item values, per-cluster means, and overall mean/std aggregated over
//! items and over clusters.

use crate::ncd::{concat_time, Compressor, DistanceMatrix, NcdError, NcdItem, SizeCache};
use crate::stats::mean_std;
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("distance matrix is asymmetric: |d[{i},{j}] - d[{j},{i}]| = {delta}")]
    Asymmetric { i: usize, j: usize, delta: f64 },
    #[error("distance matrix entries must be finite")]
    NonFinite,
    #[error("embedding dimension {k} outside 1..={max} for {n} items")]
    BadK { k: usize, max: usize, n: usize },
    #[error("labels: expected {expected} entries, got {got}")]
    LabelCount { expected: usize, got: usize },
    #[error("{distinct} distinct labels but the embedding kept {k} of {requested} requested dimensions")]
    LabelDimensionMismatch {
        distinct: usize,
        k: usize,
        requested: usize,
    },
    #[error("embeddings do not cover the same ids (first mismatch: {0})")]
    IdMismatch(String),
    #[error("cluster {label} needs {needed} bytes concatenated, over the {budget} byte budget; use the geometric formulation instead")]
    ByteBudget {
        label: String,
        needed: usize,
        budget: usize,
    },
    #[error(transparent)]
    Ncd(#[from] NcdError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {detail}")]
    Parse { path: String, detail: String },
}

/// Points from classical MDS of a distance matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub item_ids: Vec<String>,
    /// Row-major n x k coordinates; column means are 0 by construction.
    pub points: Vec<f64>,
    pub n: usize,
    /// Retained dimensions; less than `requested_k` when the matrix had
    /// fewer positive eigenvalues.
    pub k: usize,
    pub requested_k: usize,
    /// Retained eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// Sum of |lambda| over discarded negative eigenvalues.
    pub discarded_negative_mass: f64,
}

impl Embedding {
    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.k..(i + 1) * self.k]
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.point(i)
            .iter()
            .zip(self.point(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Rows for the given ids, in the given order.
    pub fn select(&self, ids: &[String]) -> Result<Embedding, EmbedError> {
        let mut points = Vec::with_capacity(ids.len() * self.k);
        for id in ids {
            let row = self
                .item_ids
                .iter()
                .position(|x| x == id)
                .ok_or_else(|| EmbedError::IdMismatch(id.clone()))?;
            points.extend_from_slice(self.point(row));
        }
        Ok(Embedding {
            item_ids: ids.to_vec(),
            points,
            n: ids.len(),
            k: self.k,
            requested_k: self.requested_k,
            eigenvalues: self.eigenvalues.clone(),
            discarded_negative_mass: self.discarded_negative_mass,
        })
    }

    /// CSV of (item_id, label, k1..kK). Pass an empty slice to omit labels.
    pub fn save_csv(&self, path: &Path, labels: &[String]) -> Result<(), EmbedError> {
        if !labels.is_empty() && labels.len() != self.n {
            return Err(EmbedError::LabelCount {
                expected: self.n,
                got: labels.len(),
            });
        }
        let mut s = String::from("item_id,label");
        for d in 1..=self.k {
            s.push_str(&format!(",k{d}"));
        }
        s.push('\n');
        for i in 0..self.n {
            s.push_str(&self.item_ids[i]);
            s.push(',');
            if !labels.is_empty() {
                s.push_str(&labels[i]);
            }
            for v in self.point(i) {
                s.push_str(&format!(",{v}"));
            }
            s.push('\n');
        }
        std::fs::write(path, s).map_err(|e| EmbedError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    /// Read back a [`save_csv`](Self::save_csv) file. Eigenvalues are not
    /// stored in the CSV, so the result carries an empty eigenvalue list and
    /// zero discarded mass; `requested_k` is the column count.
    pub fn load_csv(path: &Path) -> Result<(Embedding, Vec<String>), EmbedError> {
        let text = std::fs::read_to_string(path).map_err(|e| EmbedError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let bad = |msg: &str| EmbedError::Parse {
            path: path.display().to_string(),
            detail: msg.to_string(),
        };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty file"))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 3 || cols[0] != "item_id" || cols[1] != "label" {
            return Err(bad("expected header item_id,label,k1.."));
        }
        let k = cols.len() - 2;
        let mut item_ids = Vec::new();
        let mut labels = Vec::new();
        let mut points = Vec::new();
        for line in lines {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != k + 2 {
                return Err(bad(&format!("row with {} fields", fields.len())));
            }
            item_ids.push(fields[0].to_string());
            labels.push(fields[1].to_string());
            for f in &fields[2..] {
                points.push(f.parse::<f64>().map_err(|e| bad(&e.to_string()))?);
            }
        }
        let n = item_ids.len();
        if n == 0 {
            return Err(bad("no rows"));
        }
        Ok((
            Embedding {
                item_ids,
                points,
                n,
                k,
                requested_k: k,
                eigenvalues: Vec::new(),
                discarded_negative_mass: 0.0,
            },
            labels,
        ))
    }
}

/// Classical (Torgerson) MDS with deterministic eigen-ordering.
pub fn embed(d: &DistanceMatrix, k: usize) -> Result<Embedding, EmbedError> {
    let n = d.n;
    if k < 1 || k > n.saturating_sub(1) {
        return Err(EmbedError::BadK { k, max: n - 1, n });
    }
    for i in 0..n {
        for j in 0..n {
            let v = d.at(i, j);
            if !v.is_finite() {
                return Err(EmbedError::NonFinite);
            }
            let delta = (v - d.at(j, i)).abs();
            if delta > 1e-9 {
                return Err(EmbedError::Asymmetric { i, j, delta });
            }
        }
    }

    // B = -1/2 J D^2 J, J = I - 11'/n
    let d2 = DMatrix::from_fn(n, n, |i, j| d.at(i, j).powi(2));
    let j = DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
    let b = -0.5 * (&j * d2 * &j);
    // symmetrize against rounding before the symmetric solver
    let b = 0.5 * (&b + b.transpose());

    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &c| eig.eigenvalues[c].total_cmp(&eig.eigenvalues[a]));

    let lambda_max = eig.eigenvalues[order[0]].max(0.0);
    let tol = 1e-9 * lambda_max;
    let mut negative_mass = 0.0;
    for &i in &order {
        let l = eig.eigenvalues[i];
        if l < 0.0 {
            negative_mass += -l;
        }
    }
    let positive: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&i| eig.eigenvalues[i] > tol && eig.eigenvalues[i] > 0.0)
        .collect();
    let kept = k.min(positive.len());

    let mut points = vec![0.0; n * kept];
    let mut eigenvalues = Vec::with_capacity(kept);
    for (col, &ei) in positive[..kept].iter().enumerate() {
        let l = eig.eigenvalues[ei];
        eigenvalues.push(l);
        let v = eig.eigenvectors.column(ei);
        // sign fixed by the first significant component
        let sign = v
            .iter()
            .find(|x| x.abs() > 1e-12)
            .map(|x| x.signum())
            .unwrap_or(1.0);
        let scale = l.sqrt() * sign;
        for i in 0..n {
            points[i * kept + col] = scale * v[i];
        }
    }

    Ok(Embedding {
        item_ids: d.item_ids.clone(),
        points,
        n,
        k: kept,
        requested_k: k,
        eigenvalues,
        discarded_negative_mass: negative_mass,
    })
}

/// Which formulation produced a cluster structure report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CsfFormulation {
    Rkhs,
    Compression,
}

/// Optimality deficiencies of a labeled partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsfReport {
    pub formulation: CsfFormulation,
    pub item_ids: Vec<String>,
    pub labels: Vec<String>,
    pub per_item: Vec<f64>,
    /// Distinct labels in sorted order, aligned with `per_cluster_mean`.
    pub cluster_labels: Vec<String>,
    pub per_cluster_mean: Vec<f64>,
    /// Mean/std of per-item deficiencies.
    pub items_mean: f64,
    pub items_std: f64,
    /// Mean/std of per-cluster mean deficiencies.
    pub clusters_mean: f64,
    pub clusters_std: f64,
}

impl CsfReport {
    pub fn save_json(&self, path: &Path) -> Result<(), EmbedError> {
        let json = serde_json::to_string_pretty(self).expect("report serializes");
        std::fs::write(path, json).map_err(|e| EmbedError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    fn from_items(
        formulation: CsfFormulation,
        item_ids: Vec<String>,
        labels: Vec<String>,
        per_item: Vec<f64>,
    ) -> CsfReport {
        let mut groups: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for (label, &d) in labels.iter().zip(&per_item) {
            groups.entry(label).or_default().push(d);
        }
        let cluster_labels: Vec<String> = groups.keys().map(|s| s.to_string()).collect();
        let per_cluster_mean: Vec<f64> = groups
            .values()
            .map(|v| v.iter().sum::<f64>() / v.len() as f64)
            .collect();
        let (items_mean, items_std) = mean_std(&per_item);
        let (clusters_mean, clusters_std) = mean_std(&per_cluster_mean);
        CsfReport {
            formulation,
            item_ids,
            labels,
            per_item,
            cluster_labels,
            per_cluster_mean,
            items_mean,
            items_std,
            clusters_mean,
            clusters_std,
        }
    }
}

fn check_labels(n: usize, labels: &[String]) -> Result<usize, EmbedError> {
    if labels.len() != n {
        return Err(EmbedError::LabelCount {
            expected: n,
            got: labels.len(),
        });
    }
    let distinct: std::collections::BTreeSet<&str> =
        labels.iter().map(|s| s.as_str()).collect();
    Ok(distinct.len())
}

/// Geometric cluster structure function: each item's Euclidean distance to
/// its own cluster centroid in the embedded space. The embedding must have
/// been requested with K equal to the number of distinct labels.
pub fn csf_rkhs(e: &Embedding, labels: &[String]) -> Result<CsfReport, EmbedError> {
    let distinct = check_labels(e.n, labels)?;
    if distinct != e.requested_k {
        return Err(EmbedError::LabelDimensionMismatch {
            distinct,
            k: e.k,
            requested: e.requested_k,
        });
    }
    let mut centroids: BTreeMap<&str, (Vec<f64>, usize)> = BTreeMap::new();
    for (i, label) in labels.iter().enumerate() {
        let entry = centroids
            .entry(label)
            .or_insert_with(|| (vec![0.0; e.k], 0));
        for (c, v) in entry.0.iter_mut().zip(e.point(i)) {
            *c += v;
        }
        entry.1 += 1;
    }
    for (c, count) in centroids.values_mut() {
        for v in c.iter_mut() {
            *v /= *count as f64;
        }
    }
    let per_item: Vec<f64> = labels
        .iter()
        .enumerate()
        .map(|(i, label)| {
            let (c, _) = &centroids[label.as_str()];
            e.point(i)
                .iter()
                .zip(c)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    Ok(CsfReport::from_items(
        CsfFormulation::Rkhs,
        e.item_ids.clone(),
        labels.to_vec(),
        per_item,
    ))
}

/// Compression cluster structure function: delta(Y, y) = Z(Y) + ln|Y| - Z(y)
/// with Y the item's cluster and Z(Y) the compressed size of the cluster's
/// time-axis concatenation. Guarded by a per-cluster byte budget since the
/// whole cluster must be concatenated in memory.
pub fn csf_compression(
    items: &[NcdItem],
    labels: &[String],
    c: &dyn Compressor,
    byte_budget: usize,
) -> Result<CsfReport, EmbedError> {
    check_labels(items.len(), labels)?;
    let cache = SizeCache::new();
    let mut clusters: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, label) in labels.iter().enumerate() {
        clusters.entry(label).or_default().push(i);
    }
    let mut cluster_z: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for (label, members) in &clusters {
        let needed: usize = members
            .iter()
            .map(|&i| items[i].payload.bytes.len())
            .sum();
        if needed > byte_budget {
            return Err(EmbedError::ByteBudget {
                label: label.to_string(),
                needed,
                budget: byte_budget,
            });
        }
        let mut y = items[members[0]].payload.clone();
        for &i in &members[1..] {
            let (merged, _) = concat_time(&y, &items[i].payload)?;
            y = merged;
        }
        let z_y = cache.size(c, &y)? as f64;
        cluster_z.insert(label, (z_y, members.len()));
    }
    let per_item = items
        .iter()
        .zip(labels)
        .map(|(item, label)| {
            let (z_y, size) = cluster_z[label.as_str()];
            let z_i = cache.size(c, &item.payload)? as f64;
            Ok(z_y + (size as f64).ln() - z_i)
        })
        .collect::<Result<Vec<f64>, EmbedError>>()?;
    Ok(CsfReport::from_items(
        CsfFormulation::Compression,
        items.iter().map(|i| i.id.clone()).collect(),
        labels.to_vec(),
        per_item,
    ))
}

/// Per-id Euclidean displacement between two embeddings over the same ids
/// (rows of one joint embedding, split by condition).
pub fn paired_shift_distances(
    pre: &Embedding,
    post: &Embedding,
) -> Result<Vec<(String, f64)>, EmbedError> {
    if pre.k != post.k {
        return Err(EmbedError::IdMismatch(format!(
            "dimension mismatch {} vs {}",
            pre.k, post.k
        )));
    }
    let aligned = post.select(&pre.item_ids)?;
    if pre.item_ids.len() != post.item_ids.len() {
        return Err(EmbedError::IdMismatch(format!(
            "{} ids vs {}",
            pre.item_ids.len(),
            post.item_ids.len()
        )));
    }
    Ok(pre
        .item_ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let d = pre
                .point(i)
                .iter()
                .zip(aligned.point(i))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            (id.clone(), d)
        })
        .collect())
}
