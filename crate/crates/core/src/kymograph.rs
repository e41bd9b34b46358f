//! Sparse (x, y, time) kymographs of per-centroid values, their projections
//! and downsampling, and shared 8-bit cohort quantization.
//!
//! A kymograph voxel is 0 exactly where no centroid wrote, so zero is a
//! reserved "no cell" code throughout. Real-valued kymographs round-trip
//! through a `.kymo` raw f32 file with a JSON sidecar; quantized ones reuse
//! the `.vol` container with the bin edges and cohort statistics recorded in
//! the metadata, keeping 0 reserved and signal in [1, 255].
//!
//! Quantization is cohort-wide: all non-zero values across the cohort form
//! one multiset whose mean and standard deviation fix 254 linearly spaced bin
//! boundaries on (mean - std, mean + std). Every member is then quantized
//! with those same edges, so byte patterns are comparable across members.

use crate::volume::{
    sidecar_path, Dims5, ElementType, QuantizationMeta, Volume, VolumeError, VolumeMeta,
};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{Read as _, Write as _};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KymoError {
    #[error("record at ({x}, {y}, t={t}) outside kymograph {nx}x{ny}x{nt}")]
    OutOfBounds {
        x: usize,
        y: usize,
        t: usize,
        nx: usize,
        ny: usize,
        nt: usize,
    },
    #[error("cohort has no non-zero voxels; nothing to quantize")]
    EmptySignal,
    #[error("downsampling requires min cell radius > 2 px, got {0}")]
    DownsampleGuard(f64),
    #[error("kymograph dims must be non-zero, got {0}x{1}x{2}")]
    EmptyDims(usize, usize, usize),
    #[error("payload holds {actual} bytes, metadata implies {expected}")]
    PayloadSize { expected: usize, actual: usize },
    #[error("quantized kymograph requires u8 volume with quantization metadata")]
    NotQuantized,
    #[error("volume dims {0:?} are not a single-channel (x, y, 1, 1, t) kymograph")]
    NotKymoShaped(Dims5),
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("metadata for {path}: {source}")]
    Meta {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> KymoError {
    KymoError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// What kind of scalar a kymograph voxel carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Ssf,
    Velocity,
    /// Per-centroid uniform noise (benchmark control channel).
    Random,
    /// Proportional companion to the velocity channel (paired corpora).
    Coupled,
}

/// Where a kymograph's values came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub kind: ValueKind,
}

/// One centroid value destined for a kymograph voxel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KymoRecord {
    pub x: usize,
    pub y: usize,
    pub z: usize,
    pub t: usize,
    pub value: f64,
}

/// Sidecar for the `.kymo` raw f32 payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct KymoMeta {
    nx: usize,
    ny: usize,
    nt: usize,
    channel: String,
    provenance: Vec<Provenance>,
    collisions: u64,
}

/// Real-valued sparse kymograph with axes (x, y, time).
#[derive(Debug, Clone, PartialEq)]
pub struct Kymograph {
    pub nx: usize,
    pub ny: usize,
    pub nt: usize,
    /// x-fastest, then y, then t.
    pub data: Vec<f64>,
    pub channel: String,
    pub provenance: Vec<Provenance>,
    /// Writes that landed on an already written voxel.
    pub collisions: u64,
}

impl Kymograph {
    pub fn zeros(nx: usize, ny: usize, nt: usize, channel: &str) -> Result<Self, KymoError> {
        if nx == 0 || ny == 0 || nt == 0 {
            return Err(KymoError::EmptyDims(nx, ny, nt));
        }
        Ok(Kymograph {
            nx,
            ny,
            nt,
            data: vec![0.0; nx * ny * nt],
            channel: channel.to_string(),
            provenance: Vec::new(),
            collisions: 0,
        })
    }

    pub fn index(&self, x: usize, y: usize, t: usize) -> usize {
        debug_assert!(x < self.nx && y < self.ny && t < self.nt);
        x + self.nx * (y + self.ny * t)
    }

    pub fn at(&self, x: usize, y: usize, t: usize) -> f64 {
        self.data[self.index(x, y, t)]
    }

    pub fn nonzero_count(&self) -> usize {
        self.data.iter().filter(|v| **v != 0.0).count()
    }

    /// Write the `.kymo` payload (raw little-endian f32) and its sidecar.
    pub fn save(&self, path: &Path) -> Result<(), KymoError> {
        let mut bytes = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            bytes.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        let mut f = fs::File::create(path).map_err(|e| io_err(path, e))?;
        f.write_all(&bytes).map_err(|e| io_err(path, e))?;
        let meta = KymoMeta {
            nx: self.nx,
            ny: self.ny,
            nt: self.nt,
            channel: self.channel.clone(),
            provenance: self.provenance.clone(),
            collisions: self.collisions,
        };
        let side = sidecar_path(path);
        let json = serde_json::to_string_pretty(&meta).map_err(|e| KymoError::Meta {
            path: side.display().to_string(),
            source: e,
        })?;
        fs::write(&side, json).map_err(|e| io_err(&side, e))
    }

    pub fn load(path: &Path) -> Result<Self, KymoError> {
        let side = sidecar_path(path);
        let json = fs::read_to_string(&side).map_err(|e| io_err(&side, e))?;
        let meta: KymoMeta = serde_json::from_str(&json).map_err(|e| KymoError::Meta {
            path: side.display().to_string(),
            source: e,
        })?;
        let mut bytes = Vec::new();
        fs::File::open(path)
            .map_err(|e| io_err(path, e))?
            .read_to_end(&mut bytes)
            .map_err(|e| io_err(path, e))?;
        let n = meta.nx * meta.ny * meta.nt;
        if bytes.len() != n * 4 {
            return Err(KymoError::PayloadSize {
                expected: n * 4,
                actual: bytes.len(),
            });
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        Ok(Kymograph {
            nx: meta.nx,
            ny: meta.ny,
            nt: meta.nt,
            data,
            channel: meta.channel,
            provenance: meta.provenance,
            collisions: meta.collisions,
        })
    }
}

/// Write per-centroid values into a zeroed (x, y, time) array.
///
/// Records land in input order; a voxel written twice keeps the last value
/// and increments the collision counter. Records must be 2-D (z = 0); run
/// [`project_z`] first for 3-D movies.
pub fn build_kymograph(
    records: &[KymoRecord],
    nx: usize,
    ny: usize,
    nt: usize,
    channel: &str,
    provenance: Vec<Provenance>,
) -> Result<Kymograph, KymoError> {
    let mut k = Kymograph::zeros(nx, ny, nt, channel)?;
    k.provenance = provenance;
    let mut written = vec![false; k.data.len()];
    for r in records {
        if r.x >= nx || r.y >= ny || r.t >= nt || r.z != 0 {
            return Err(KymoError::OutOfBounds {
                x: r.x,
                y: r.y,
                t: r.t,
                nx,
                ny,
                nt,
            });
        }
        let i = k.index(r.x, r.y, r.t);
        if written[i] {
            k.collisions += 1;
        }
        written[i] = true;
        k.data[i] = r.value;
    }
    Ok(k)
}

/// Collapse z by keeping, per (x, y, t) column, the value of maximal
/// magnitude (signed value retained). Ties keep the earlier record.
pub fn project_z(records: &[KymoRecord]) -> Vec<KymoRecord> {
    let mut best: Vec<KymoRecord> = Vec::new();
    let mut seen: std::collections::BTreeMap<(usize, usize, usize), usize> =
        std::collections::BTreeMap::new();
    for r in records {
        let key = (r.t, r.y, r.x);
        match seen.get(&key) {
            Some(&i) => {
                if r.value.abs() > best[i].value.abs() {
                    best[i] = KymoRecord { z: 0, ..*r };
                }
            }
            None => {
                seen.insert(key, best.len());
                best.push(KymoRecord { z: 0, ..*r });
            }
        }
    }
    best.sort_by_key(|r| (r.t, r.y, r.x));
    best
}

/// Halve both spatial extents (ceiling) by 2x2 max-magnitude reduction.
///
/// The guard radius is the smallest cell radius in pixels; downsampling a
/// kymograph whose cells could occlude each other (radius <= 2 px) is a
/// configuration error. Newly merged non-zero voxels add to the collision
/// counter.
pub fn downsample_xy(k: &Kymograph, min_radius_px: f64) -> Result<Kymograph, KymoError> {
    if !(min_radius_px > 2.0) {
        return Err(KymoError::DownsampleGuard(min_radius_px));
    }
    let (nx, ny) = (k.nx.div_ceil(2), k.ny.div_ceil(2));
    let mut out = Kymograph::zeros(nx, ny, k.nt, &k.channel)?;
    out.provenance = k.provenance.clone();
    out.collisions = k.collisions;
    for t in 0..k.nt {
        for y in 0..ny {
            for x in 0..nx {
                let mut v = 0.0f64;
                let mut nonzero = 0u64;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let (sx, sy) = (2 * x + dx, 2 * y + dy);
                        if sx >= k.nx || sy >= k.ny {
                            continue;
                        }
                        let s = k.at(sx, sy, t);
                        if s != 0.0 {
                            nonzero += 1;
                            if s.abs() > v.abs() {
                                v = s;
                            }
                        }
                    }
                }
                if nonzero > 1 {
                    out.collisions += nonzero - 1;
                }
                let i = out.index(x, y, t);
                out.data[i] = v;
            }
        }
    }
    Ok(out)
}

/// Shared quantization parameters fit on a cohort's non-zero values.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortQuantizer {
    pub mean: f64,
    pub std: f64,
    pub count: u64,
    pub degenerate: bool,
}

impl CohortQuantizer {
    /// Fit on every non-zero voxel across the cohort (population spread).
    pub fn fit<'a, I>(kymos: I) -> Result<Self, KymoError>
    where
        I: IntoIterator<Item = &'a Kymograph>,
    {
        let mut count = 0u64;
        let mut mean = 0.0f64;
        let mut m2 = 0.0f64;
        for k in kymos {
            for &v in &k.data {
                if v == 0.0 {
                    continue;
                }
                count += 1;
                let d = v - mean;
                mean += d / count as f64;
                m2 += d * (v - mean);
            }
        }
        if count == 0 {
            return Err(KymoError::EmptySignal);
        }
        let std = (m2 / count as f64).sqrt();
        Ok(CohortQuantizer {
            mean,
            std,
            count,
            degenerate: std == 0.0,
        })
    }

    /// The 254 linearly spaced boundaries on (mean - std, mean + std).
    /// Empty when the spread is degenerate.
    pub fn edges(&self) -> Vec<f64> {
        if self.degenerate {
            return Vec::new();
        }
        let lo = self.mean - self.std;
        let hi = self.mean + self.std;
        (0..254)
            .map(|i| lo + (hi - lo) * i as f64 / 253.0)
            .collect()
    }

    /// Map one voxel value to its 8-bit code. Zero stays the reserved
    /// absence code; non-zero values land in [1, 255].
    pub fn quantize_value(&self, v: f64) -> u8 {
        if v == 0.0 {
            return 0;
        }
        if self.degenerate {
            return 128;
        }
        let lo = self.mean - self.std;
        let hi = self.mean + self.std;
        if v <= lo {
            return 1;
        }
        if v >= hi {
            return 255;
        }
        let bin = 1 + (253.0 * (v - lo) / (hi - lo)).floor() as i64;
        bin.clamp(1, 255) as u8
    }

    pub fn meta(&self) -> QuantizationMeta {
        QuantizationMeta {
            bin_edges: self.edges(),
            mean: self.mean,
            std: self.std,
            count: self.count,
            degenerate: self.degenerate,
        }
    }
}

/// 8-bit kymograph sharing its cohort's bin edges.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedKymograph {
    pub nx: usize,
    pub ny: usize,
    pub nt: usize,
    pub data: Vec<u8>,
    pub channel: String,
    pub provenance: Vec<Provenance>,
    pub collisions: u64,
    pub quantization: QuantizationMeta,
}

impl QuantizedKymograph {
    pub fn index(&self, x: usize, y: usize, t: usize) -> usize {
        x + self.nx * (y + self.ny * t)
    }

    /// Raw payload bytes in (x, y, t) order, one byte per voxel.
    pub fn bytes(&self) -> &[u8] {
        &self.data
    }

    /// Re-wrap as a single-channel u8 volume for `.vol` serialization, with
    /// the quantization parameters carried in the metadata.
    pub fn to_volume(&self) -> Result<Volume, KymoError> {
        let meta = VolumeMeta {
            dims: Dims5::new(self.nx, self.ny, 1, 1, self.nt),
            element_type: ElementType::U8,
            spacing_um: [1.0, 1.0, 1.0],
            channel_names: vec![self.channel.clone()],
            quantization: Some(self.quantization.clone()),
        };
        let mut vol = Volume::zeros(meta)?;
        for (i, &b) in self.data.iter().enumerate() {
            vol.data[i] = b as f32 / 255.0;
        }
        Ok(vol)
    }

    pub fn from_volume(vol: &Volume) -> Result<Self, KymoError> {
        let quantization = vol.meta.quantization.clone().ok_or(KymoError::NotQuantized)?;
        if vol.meta.element_type != ElementType::U8 {
            return Err(KymoError::NotQuantized);
        }
        let d = vol.meta.dims;
        if d.z != 1 || d.c != 1 {
            return Err(KymoError::NotKymoShaped(d));
        }
        let data = vol
            .data
            .iter()
            .map(|v| (v * 255.0).round() as u8)
            .collect();
        Ok(QuantizedKymograph {
            nx: d.x,
            ny: d.y,
            nt: d.t,
            data,
            channel: vol
                .meta
                .channel_names
                .first()
                .cloned()
                .unwrap_or_default(),
            provenance: Vec::new(),
            collisions: 0,
            quantization,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), KymoError> {
        Ok(self.to_volume()?.save(path)?)
    }

    pub fn load(path: &Path) -> Result<Self, KymoError> {
        Self::from_volume(&Volume::load(path)?)
    }
}

/// Quantize a cohort with shared edges fit across all members.
pub fn quantize_cohort(kymos: &[Kymograph]) -> Result<Vec<QuantizedKymograph>, KymoError> {
    let q = CohortQuantizer::fit(kymos.iter())?;
    Ok(kymos
        .iter()
        .map(|k| QuantizedKymograph {
            nx: k.nx,
            ny: k.ny,
            nt: k.nt,
            data: k.data.iter().map(|&v| q.quantize_value(v)).collect(),
            channel: k.channel.clone(),
            provenance: k.provenance.clone(),
            collisions: k.collisions,
            quantization: q.meta(),
        })
        .collect())
}

/// Render a (time, x) max-magnitude projection over y as a binary PGM image
/// for quick visual inspection. Rows are timepoints, columns x positions;
/// pixel value is the quantized code of the winning voxel.
pub fn render_time_x_pgm(k: &QuantizedKymograph) -> Vec<u8> {
    let mut img = vec![0u8; k.nt * k.nx];
    for t in 0..k.nt {
        for x in 0..k.nx {
            let mut best = 0u8;
            let mut best_mag = -1i32;
            for y in 0..k.ny {
                let b = k.data[k.index(x, y, t)];
                let mag = if b == 0 { -1 } else { (b as i32 - 128).abs() };
                if b != 0 && mag > best_mag {
                    best = b;
                    best_mag = mag;
                }
            }
            img[t * k.nx + x] = best;
        }
    }
    let mut out = format!("P5\n{} {}\n255\n", k.nx, k.nt).into_bytes();
    out.extend_from_slice(&img);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(x: usize, y: usize, t: usize, value: f64) -> KymoRecord {
        KymoRecord { x, y, z: 0, t, value }
    }

    fn prov() -> Vec<Provenance> {
        vec![Provenance {
            source: "movie_a.vol".into(),
            kind: ValueKind::Ssf,
        }]
    }

    #[test]
    fn empty_records_build_an_all_zero_kymograph() {
        let k = build_kymograph(&[], 4, 5, 6, "erk", prov()).unwrap();
        assert_eq!(k.data.len(), 4 * 5 * 6);
        assert!(k.data.iter().all(|v| *v == 0.0));
        assert_eq!(k.collisions, 0);
    }

    #[test]
    fn single_record_writes_exactly_one_voxel() {
        let k = build_kymograph(&[rec(3, 4, 2, 0.7)], 8, 8, 4, "erk", prov()).unwrap();
        assert_eq!(k.nonzero_count(), 1);
        assert_eq!(k.at(3, 4, 2), 0.7);
    }

    #[test]
    fn colliding_records_keep_the_last_value_and_count() {
        let k = build_kymograph(
            &[rec(1, 1, 0, 0.2), rec(1, 1, 0, -0.5)],
            4,
            4,
            2,
            "erk",
            prov(),
        )
        .unwrap();
        assert_eq!(k.at(1, 1, 0), -0.5);
        assert_eq!(k.collisions, 1);
    }

    #[test]
    fn out_of_bounds_record_is_an_error() {
        let e = build_kymograph(&[rec(4, 0, 0, 1.0)], 4, 4, 2, "erk", prov());
        assert!(matches!(e, Err(KymoError::OutOfBounds { x: 4, .. })));
    }

    #[test]
    fn index_is_x_fastest_then_y_then_t() {
        let k = Kymograph::zeros(3, 4, 5, "c").unwrap();
        assert_eq!(k.index(1, 0, 0), 1);
        assert_eq!(k.index(0, 1, 0), 3);
        assert_eq!(k.index(0, 0, 1), 12);
        assert_eq!(k.index(2, 3, 4), 2 + 3 * (3 + 4 * 4));
    }

    #[test]
    fn projection_of_a_single_slice_is_identity() {
        let rs = vec![rec(1, 2, 0, 0.4), rec(5, 5, 1, -0.2)];
        assert_eq!(project_z(&rs), rs);
    }

    #[test]
    fn projection_keeps_the_signed_value_of_max_magnitude() {
        let rs = vec![
            KymoRecord { x: 1, y: 2, z: 0, t: 0, value: 0.2 },
            KymoRecord { x: 1, y: 2, z: 3, t: 0, value: -0.6 },
        ];
        let p = project_z(&rs);
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].value, -0.6);
        assert_eq!(p[0].z, 0);
    }

    #[test]
    fn projection_orders_by_time_then_y_then_x() {
        let rs = vec![rec(5, 1, 1, 0.1), rec(0, 0, 0, 0.2), rec(1, 3, 0, 0.3)];
        let p = project_z(&rs);
        let order: Vec<(usize, usize, usize)> = p.iter().map(|r| (r.t, r.y, r.x)).collect();
        assert_eq!(order, vec![(0, 0, 0), (0, 3, 1), (1, 1, 5)]);
    }

    #[test]
    fn downsample_preserves_a_lone_voxel() {
        let k = build_kymograph(&[rec(3, 1, 0, 0.8)], 4, 4, 2, "erk", prov()).unwrap();
        let d = downsample_xy(&k, 3.0).unwrap();
        assert_eq!((d.nx, d.ny, d.nt), (2, 2, 2));
        assert_eq!(d.nonzero_count(), 1);
        assert_eq!(d.at(1, 0, 0), 0.8);
        assert_eq!(d.collisions, 0);
    }

    #[test]
    fn downsample_merges_blocks_by_magnitude_and_counts_collisions() {
        let k = build_kymograph(
            &[rec(0, 0, 0, 0.3), rec(1, 1, 0, -0.9)],
            4,
            4,
            1,
            "erk",
            prov(),
        )
        .unwrap();
        let d = downsample_xy(&k, 2.5).unwrap();
        assert_eq!(d.at(0, 0, 0), -0.9);
        assert_eq!(d.collisions, 1);
    }

    #[test]
    fn downsample_halves_odd_extents_with_ceiling() {
        let k = build_kymograph(&[rec(4, 4, 0, 0.5)], 5, 5, 1, "erk", prov()).unwrap();
        let d = downsample_xy(&k, 2.1).unwrap();
        assert_eq!((d.nx, d.ny), (3, 3));
        assert_eq!(d.at(2, 2, 0), 0.5);
    }

    #[test]
    fn downsample_guard_rejects_small_radii() {
        let k = Kymograph::zeros(4, 4, 1, "c").unwrap();
        assert!(matches!(
            downsample_xy(&k, 2.0),
            Err(KymoError::DownsampleGuard(_))
        ));
        assert!(matches!(
            downsample_xy(&k, 1.5),
            Err(KymoError::DownsampleGuard(_))
        ));
    }

    #[test]
    fn all_zero_downsample_stays_all_zero() {
        let k = Kymograph::zeros(6, 6, 3, "c").unwrap();
        let d = downsample_xy(&k, 3.0).unwrap();
        assert!(d.data.iter().all(|v| *v == 0.0));
    }

    fn cohort_of_one(values: &[(usize, f64)]) -> Kymograph {
        let recs: Vec<KymoRecord> = values.iter().map(|&(x, v)| rec(x, 0, 0, v)).collect();
        build_kymograph(&recs, 64, 1, 1, "erk", prov()).unwrap()
    }

    #[test]
    fn cohort_mean_lands_near_bin_128() {
        // values symmetric around 0.5 with spread
        let k = cohort_of_one(&[(0, 0.3), (1, 0.7), (2, 0.5), (3, 0.4), (4, 0.6)]);
        let q = CohortQuantizer::fit([&k]).unwrap();
        assert!((q.mean - 0.5).abs() < 1e-12);
        let b = q.quantize_value(0.5);
        assert!((127..=129).contains(&b), "bin {b}");
    }

    #[test]
    fn out_of_range_values_clip_to_1_and_255() {
        let k = cohort_of_one(&[(0, 0.4), (1, 0.6), (2, 0.5)]);
        let q = CohortQuantizer::fit([&k]).unwrap();
        assert_eq!(q.quantize_value(q.mean - q.std), 1);
        assert_eq!(q.quantize_value(q.mean - 5.0 * q.std), 1);
        assert_eq!(q.quantize_value(q.mean + q.std), 255);
        assert_eq!(q.quantize_value(q.mean + 5.0 * q.std), 255);
    }

    #[test]
    fn zero_always_maps_to_zero() {
        let k = cohort_of_one(&[(0, 0.4), (1, 0.6)]);
        let q = CohortQuantizer::fit([&k]).unwrap();
        assert_eq!(q.quantize_value(0.0), 0);
    }

    #[test]
    fn edges_are_254_strictly_increasing_spanning_one_sigma() {
        let k = cohort_of_one(&[(0, 0.2), (1, 0.9), (2, 0.55)]);
        let q = CohortQuantizer::fit([&k]).unwrap();
        let e = q.edges();
        assert_eq!(e.len(), 254);
        assert!((e[0] - (q.mean - q.std)).abs() < 1e-12);
        assert!((e[253] - (q.mean + q.std)).abs() < 1e-12);
        assert!(e.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn all_zero_cohort_is_an_empty_signal_error() {
        let k = Kymograph::zeros(4, 4, 4, "c").unwrap();
        assert!(matches!(
            CohortQuantizer::fit([&k]),
            Err(KymoError::EmptySignal)
        ));
        assert!(matches!(quantize_cohort(&[k]), Err(KymoError::EmptySignal)));
    }

    #[test]
    fn degenerate_spread_maps_all_signal_to_128() {
        let k = cohort_of_one(&[(0, 0.4), (1, 0.4), (2, 0.4)]);
        let qs = quantize_cohort(&[k]).unwrap();
        assert!(qs[0].quantization.degenerate);
        assert!(qs[0].quantization.bin_edges.is_empty());
        let nz: Vec<u8> = qs[0].data.iter().copied().filter(|b| *b != 0).collect();
        assert_eq!(nz.len(), 3);
        assert!(nz.iter().all(|b| *b == 128));
    }

    #[test]
    fn cohort_members_share_identical_edges() {
        let a = cohort_of_one(&[(0, 0.1), (1, 0.5)]);
        let b = cohort_of_one(&[(0, 0.9), (1, 0.3)]);
        let qs = quantize_cohort(&[a, b]).unwrap();
        assert_eq!(qs[0].quantization, qs[1].quantization);
    }

    #[test]
    fn identical_kymographs_quantize_identically() {
        let a = cohort_of_one(&[(0, 0.1), (1, 0.5), (2, 0.85)]);
        let qs = quantize_cohort(&[a.clone(), a]).unwrap();
        assert_eq!(qs[0].data, qs[1].data);
    }

    #[test]
    fn quantize_cohort_differs_from_per_member_fit() {
        // shared edges come from the pooled multiset, not each member alone
        let a = cohort_of_one(&[(0, 0.1), (1, 0.2)]);
        let b = cohort_of_one(&[(0, 0.8), (1, 0.9)]);
        let shared = quantize_cohort(&[a.clone(), b]).unwrap();
        let alone = quantize_cohort(&[a]).unwrap();
        assert_ne!(shared[0].data, alone[0].data);
    }

    #[test]
    fn kymo_file_round_trip_is_exact() {
        let mut k = build_kymograph(
            &[rec(0, 0, 0, -0.25), rec(3, 2, 1, 0.125), rec(7, 7, 3, 1.0)],
            8,
            8,
            4,
            "erk",
            prov(),
        )
        .unwrap();
        k.collisions = 2;
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.kymo");
        k.save(&p).unwrap();
        let back = Kymograph::load(&p).unwrap();
        assert_eq!(back, k);
        assert!(sidecar_path(&p).exists());
    }

    #[test]
    fn quantized_volume_round_trip_preserves_codes_and_metadata() {
        let a = cohort_of_one(&[(0, 0.1), (5, 0.5), (9, 0.9)]);
        let qs = quantize_cohort(&[a]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.vol");
        qs[0].save(&p).unwrap();
        let back = QuantizedKymograph::load(&p).unwrap();
        assert_eq!(back.data, qs[0].data);
        assert_eq!(back.quantization, qs[0].quantization);
        assert_eq!(back.channel, "erk");
        assert_eq!((back.nx, back.ny, back.nt), (64, 1, 1));
    }

    #[test]
    fn plain_volume_does_not_load_as_quantized() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("plain.vol");
        let meta = VolumeMeta {
            dims: Dims5::new(4, 4, 1, 1, 2),
            element_type: ElementType::U8,
            spacing_um: [1.0, 1.0, 1.0],
            channel_names: vec!["c".into()],
            quantization: None,
        };
        Volume::zeros(meta).unwrap().save(&p).unwrap();
        assert!(matches!(
            QuantizedKymograph::load(&p),
            Err(KymoError::NotQuantized)
        ));
    }

    #[test]
    fn sparse_quantized_kymograph_recovers_coord_bin_pairs() {
        // collision-free records: every (coord, bin) pair must be readable
        // back off the quantized array
        let recs = vec![
            rec(1, 2, 0, 0.31),
            rec(5, 0, 1, 0.62),
            rec(3, 3, 2, 0.45),
            rec(0, 1, 2, 0.58),
        ];
        let k = build_kymograph(&recs, 8, 4, 3, "erk", prov()).unwrap();
        assert_eq!(k.collisions, 0);
        let q = CohortQuantizer::fit([&k]).unwrap();
        let qk = &quantize_cohort(&[k]).unwrap()[0];
        let mut got: Vec<(usize, usize, usize, u8)> = Vec::new();
        for t in 0..qk.nt {
            for y in 0..qk.ny {
                for x in 0..qk.nx {
                    let b = qk.data[qk.index(x, y, t)];
                    if b != 0 {
                        got.push((x, y, t, b));
                    }
                }
            }
        }
        let mut want: Vec<(usize, usize, usize, u8)> = recs
            .iter()
            .map(|r| (r.x, r.y, r.t, q.quantize_value(r.value)))
            .collect();
        want.sort_unstable();
        got.sort_unstable();
        assert_eq!(got, want);
    }

    #[test]
    fn pgm_render_has_header_and_one_byte_per_cell() {
        let a = cohort_of_one(&[(0, 0.1), (5, 0.5), (9, 0.9)]);
        let qs = quantize_cohort(&[a]).unwrap();
        let pgm = render_time_x_pgm(&qs[0]);
        let header = b"P5\n64 1\n255\n";
        assert_eq!(&pgm[..header.len()], header);
        assert_eq!(pgm.len(), header.len() + 64);
    }

    proptest! {
        #[test]
        fn quantization_is_monotone_and_zero_preserving(
            values in proptest::collection::vec(-1.0f64..=1.0, 2..40),
        ) {
            let recs: Vec<KymoRecord> = values
                .iter()
                .enumerate()
                .map(|(i, &v)| rec(i, 0, 0, v))
                .collect();
            let k = build_kymograph(&recs, 40, 1, 1, "c", vec![]).unwrap();
            match CohortQuantizer::fit([&k]) {
                Ok(q) => {
                    let mut nz: Vec<f64> =
                        values.iter().copied().filter(|v| *v != 0.0).collect();
                    nz.sort_by(f64::total_cmp);
                    for w in nz.windows(2) {
                        prop_assert!(q.quantize_value(w[0]) <= q.quantize_value(w[1]));
                    }
                    for &v in &nz {
                        let b = q.quantize_value(v);
                        prop_assert!((1..=255).contains(&b));
                    }
                    prop_assert_eq!(q.quantize_value(0.0), 0);
                }
                Err(KymoError::EmptySignal) => {
                    prop_assert!(values.iter().all(|v| *v == 0.0));
                }
                Err(e) => return Err(TestCaseError::fail(format!("{e}"))),
            }
        }
    }
}
