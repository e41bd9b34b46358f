//! File-based pipeline stages and the batch orchestrator.
//!
//! Every stage reads and writes the documented artifact formats (`.vol`,
//! `.kymo`, CSV, JSON, SVG), so stages can be scripted individually and a
//! `run_all` invocation is nothing more than the stages chained over one
//! output directory. All artifacts are byte-deterministic for a fixed
//! config: maps are ordered, floats print in shortest round-trip form, and
//! no timestamps are emitted. The run manifest lists every artifact with a
//! sha256 digest so reruns can be verified wholesale.

use crate::embedding::{csf_rkhs, embed, paired_shift_distances, CsfReport, Embedding};
use crate::kymograph::{
    build_kymograph, downsample_xy, project_z, quantize_cohort, KymoRecord, Kymograph,
    Provenance, QuantizedKymograph, ValueKind,
};
use crate::ncd::{
    pairwise_matrix, Bzip2Compressor, Compressor, DeflateCompressor, DistanceMatrix,
    ExternalCompressor, ExternalCompressorSpec, NcdItem, PairwiseOptions, StoreCompressor,
};
use crate::plot::scatter_svg;
use crate::stats::{pearson, wilcoxon_signed_rank};
use crate::synthbench::{
    generate_benchmark, generate_paired_shift_corpus, CorpusManifest, ManifestEntry,
    PairedShiftSpec, SynthSpec,
};
use crate::tracking::{detect_volume, link_tracks, track_velocities, DetectConfig};
use crate::volume::{radius_to_pixels_axes, Volume};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    /// Rejected before any compute; maps to exit code 2.
    #[error("config: {0}")]
    Validation(String),
    /// A stage aborted; partial artifacts are left in place. Exit code 3.
    #[error("stage {stage} failed on {item}: {detail}")]
    Stage {
        stage: String,
        item: String,
        detail: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn stage_err(stage: &str, item: &str, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Stage {
        stage: stage.to_string(),
        item: item.to_string(),
        detail: e.to_string(),
    }
}

fn io_err(path: &Path, source: std::io::Error) -> PipelineError {
    PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let out = h.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        write!(s, "{b:02x}").expect("hex write");
    }
    s
}

pub fn file_digest(path: &Path) -> Result<String, PipelineError> {
    Ok(sha256_hex(&fs::read(path).map_err(|e| io_err(path, e))?))
}

/// Compressor selection, JSON-configurable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CompressorConfig {
    Bzip2 { level: u32 },
    Deflate { level: u32 },
    Store,
    External { spec: ExternalCompressorSpec },
}

impl Default for CompressorConfig {
    fn default() -> Self {
        CompressorConfig::Bzip2 { level: 9 }
    }
}

impl CompressorConfig {
    pub fn build(&self) -> Box<dyn Compressor> {
        match self {
            CompressorConfig::Bzip2 { level } => Box::new(Bzip2Compressor { level: *level }),
            CompressorConfig::Deflate { level } => Box::new(DeflateCompressor { level: *level }),
            CompressorConfig::Store => Box::new(StoreCompressor),
            CompressorConfig::External { spec } => {
                Box::new(ExternalCompressor::new(spec.clone()))
            }
        }
    }

    fn validate(&self) -> Result<(), PipelineError> {
        match self {
            CompressorConfig::Bzip2 { level } | CompressorConfig::Deflate { level } => {
                if !(1..=9).contains(level) {
                    return Err(PipelineError::Validation(format!(
                        "compressor level {level} outside 1..=9"
                    )));
                }
            }
            CompressorConfig::External { spec } => {
                if !Path::new(&spec.program).exists() {
                    return Err(PipelineError::Validation(format!(
                        "external compressor program not found: {}",
                        spec.program
                    )));
                }
            }
            CompressorConfig::Store => {}
        }
        Ok(())
    }
}

/// One movie in a volume manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeItem {
    pub id: String,
    pub path: PathBuf,
    #[serde(default)]
    pub label: Option<String>,
    /// Channel carrying the nuclear marker used for detection.
    pub nuclear_channel: usize,
    /// Reporter channels whose per-centroid values become kymographs.
    #[serde(default)]
    pub signal_channels: Vec<usize>,
}

/// Input inventory for the volumes pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeManifest {
    pub items: Vec<VolumeItem>,
}

impl VolumeManifest {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        serde_json::from_str(&text).map_err(|e| {
            PipelineError::Validation(format!("{}: {e}", path.display()))
        })
    }
}

/// What the pipeline consumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputConfig {
    /// Real movies listed in a manifest file.
    Volumes { manifest: PathBuf },
    /// The labeled synthetic benchmark corpus.
    Synthetic { spec: SynthSpec },
    /// Matched pre/post corpus with planted velocity shifts.
    PairedSynthetic { spec: PairedShiftSpec },
}

fn default_radii() -> Vec<f64> {
    crate::tracking::default_radii_um()
}
fn default_threshold() -> f64 {
    0.01
}
fn default_true() -> bool {
    true
}
fn default_gate() -> f64 {
    10.0
}
fn default_k() -> usize {
    3
}

/// Whole-run configuration; one JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: InputConfig,
    #[serde(default = "default_radii")]
    pub radii_um: Vec<f64>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_true")]
    pub normalize: bool,
    #[serde(default = "default_gate")]
    pub gate_px: f64,
    #[serde(default)]
    pub downsample: bool,
    #[serde(default)]
    pub compressor: CompressorConfig,
    #[serde(default = "default_k")]
    pub embedding_k: usize,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub workers: Option<usize>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path)
            .map_err(|e| PipelineError::Validation(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| PipelineError::Validation(format!("{}: {e}", path.display())))
    }

    /// Full validation before any compute: value ranges, referenced files,
    /// and the downsampling occlusion guard.
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.radii_um.is_empty() || self.radii_um.iter().any(|r| !(*r > 0.0)) {
            return Err(PipelineError::Validation(
                "radii_um must be non-empty and positive".into(),
            ));
        }
        if !self.threshold.is_finite() {
            return Err(PipelineError::Validation("threshold must be finite".into()));
        }
        if !(self.gate_px > 0.0) || !self.gate_px.is_finite() {
            return Err(PipelineError::Validation(format!(
                "gate_px must be positive, got {}",
                self.gate_px
            )));
        }
        if self.embedding_k == 0 {
            return Err(PipelineError::Validation("embedding_k must be >= 1".into()));
        }
        if self.workers == Some(0) {
            return Err(PipelineError::Validation("workers must be >= 1".into()));
        }
        self.compressor.validate()?;
        match &self.input {
            InputConfig::Volumes { manifest } => {
                let m = VolumeManifest::load(manifest)?;
                if m.items.len() < 2 {
                    return Err(PipelineError::Validation(
                        "volume manifest needs at least 2 items".into(),
                    ));
                }
                let mut ids: Vec<&str> = m.items.iter().map(|i| i.id.as_str()).collect();
                ids.sort_unstable();
                ids.dedup();
                if ids.len() != m.items.len() {
                    return Err(PipelineError::Validation(
                        "volume manifest ids must be distinct".into(),
                    ));
                }
                for item in &m.items {
                    if !item.path.exists() {
                        return Err(PipelineError::Validation(format!(
                            "input file missing: {}",
                            item.path.display()
                        )));
                    }
                }
            }
            InputConfig::Synthetic { spec } => {
                spec.validate()
                    .map_err(|e| PipelineError::Validation(e.to_string()))?;
                if self.downsample {
                    // synthetic tracks are single voxels, far below the
                    // min-radius > 2 px occlusion guard
                    return Err(PipelineError::Validation(
                        "downsampling requires cell radii above 2 px; synthetic corpora have single-voxel centroids".into(),
                    ));
                }
            }
            InputConfig::PairedSynthetic { spec } => {
                if spec.shifts.len() != spec.n_pairs {
                    return Err(PipelineError::Validation(format!(
                        "{} shifts for {} pairs",
                        spec.shifts.len(),
                        spec.n_pairs
                    )));
                }
                if self.downsample {
                    return Err(PipelineError::Validation(
                        "downsampling requires cell radii above 2 px; synthetic corpora have single-voxel centroids".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// One row of the track table: a tracked centroid with its per-channel
/// values. `ssf_signal` is aligned with the table's `signal_channels`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackRow {
    pub track_id: usize,
    pub t: usize,
    pub x: usize,
    pub y: usize,
    pub z: usize,
    pub radius_px: f64,
    pub ssf_h2b: f64,
    pub velocity_norm: f64,
    pub ssf_signal: Vec<f64>,
}

/// Tracked centroids as written by the detect stage.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackTable {
    pub signal_channels: Vec<usize>,
    pub rows: Vec<TrackRow>,
    /// Detections that never linked; they carry no velocity and are dropped.
    pub dropped_singletons: usize,
}

impl TrackTable {
    pub fn save_csv(&self, path: &Path) -> Result<(), PipelineError> {
        let mut s = String::from("track_id,t,x,y,z,radius_px,ssf_h2b,velocity_norm");
        for c in &self.signal_channels {
            write!(s, ",ssf_c{c}").expect("header write");
        }
        s.push('\n');
        for r in &self.rows {
            write!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.track_id, r.t, r.x, r.y, r.z, r.radius_px, r.ssf_h2b, r.velocity_norm
            )
            .expect("row write");
            for v in &r.ssf_signal {
                write!(s, ",{v}").expect("row write");
            }
            s.push('\n');
        }
        write_file(path, s.as_bytes())
    }

    pub fn load_csv(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let bad = |detail: String| stage_err("tracks", &path.display().to_string(), detail);
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        let fixed = [
            "track_id",
            "t",
            "x",
            "y",
            "z",
            "radius_px",
            "ssf_h2b",
            "velocity_norm",
        ];
        if cols.len() < fixed.len() || cols[..fixed.len()] != fixed {
            return Err(bad(format!("unexpected header {header}")));
        }
        let mut signal_channels = Vec::new();
        for c in &cols[fixed.len()..] {
            let n = c
                .strip_prefix("ssf_c")
                .and_then(|s| s.parse::<usize>().ok())
                .ok_or_else(|| bad(format!("unexpected column {c}")))?;
            signal_channels.push(n);
        }
        let mut rows = Vec::new();
        for line in lines {
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != cols.len() {
                return Err(bad(format!("row with {} fields", f.len())));
            }
            let pu = |s: &str| s.parse::<usize>().map_err(|e| bad(e.to_string()));
            let pf = |s: &str| s.parse::<f64>().map_err(|e| bad(e.to_string()));
            rows.push(TrackRow {
                track_id: pu(f[0])?,
                t: pu(f[1])?,
                x: pu(f[2])?,
                y: pu(f[3])?,
                z: pu(f[4])?,
                radius_px: pf(f[5])?,
                ssf_h2b: pf(f[6])?,
                velocity_norm: pf(f[7])?,
                ssf_signal: f[8..]
                    .iter()
                    .map(|s| pf(s))
                    .collect::<Result<Vec<_>, _>>()?,
            });
        }
        Ok(TrackTable {
            signal_channels,
            rows,
            dropped_singletons: 0,
        })
    }
}

/// Detect, link, and measure one volume: centroids from the nuclear channel,
/// velocities from the linked tracks, and the signed score at every centroid
/// on each requested signal channel. Unlinked single detections are dropped
/// (their velocity is undefined) and counted.
pub fn detect_and_track(
    vol: &Volume,
    item_id: &str,
    nuclear_channel: usize,
    signal_channels: &[usize],
    det: &DetectConfig,
    gate_px: f64,
) -> Result<TrackTable, PipelineError> {
    let dims = vol.meta.dims;
    for &c in signal_channels.iter().chain([&nuclear_channel]) {
        if c >= dims.c {
            return Err(stage_err(
                "detect",
                item_id,
                format!("channel {c} outside 0..{}", dims.c),
            ));
        }
    }
    let centroids =
        detect_volume(vol, nuclear_channel, det).map_err(|e| stage_err("detect", item_id, e))?;
    let tracks = link_tracks(&centroids, gate_px).map_err(|e| stage_err("track", item_id, e))?;

    // signal-channel response fields are built frame by frame; collect the
    // row skeletons first, grouped by timepoint
    let mut rows = Vec::new();
    let mut dropped = 0usize;
    for track in &tracks {
        if track.points.len() < 2 {
            dropped += 1;
            continue;
        }
        let vels =
            track_velocities(track, gate_px).map_err(|e| stage_err("track", item_id, e))?;
        for (p, v) in track.points.iter().zip(vels) {
            rows.push(TrackRow {
                track_id: track.id,
                t: p.t,
                x: p.coord.x,
                y: p.coord.y,
                z: p.coord.z,
                radius_px: p.radius_px,
                ssf_h2b: p.ssf.value,
                velocity_norm: v,
                ssf_signal: vec![0.0; signal_channels.len()],
            });
        }
    }

    if !signal_channels.is_empty() && !rows.is_empty() {
        let dim = if dims.z > 1 { 3 } else { 2 };
        let kernels: Vec<_> = det
            .radii_um
            .iter()
            .map(|&r| {
                crate::logfilter::LogKernel::anisotropic(
                    radius_to_pixels_axes(r, vol.meta.spacing_um),
                    dim,
                )
            })
            .collect::<Result<_, _>>()
            .map_err(|e| stage_err("detect", item_id, e))?;
        let mut by_t: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, r) in rows.iter().enumerate() {
            by_t.entry(r.t).or_default().push(i);
        }
        for (t, row_idx) in by_t {
            for (si, &ch) in signal_channels.iter().enumerate() {
                let frame = vol.frame(ch, t);
                let field = crate::logfilter::max_response(&frame, &kernels)
                    .map_err(|e| stage_err("detect", item_id, e))?;
                for &ri in &row_idx {
                    let coord = crate::volume::VoxelCoord {
                        x: rows[ri].x,
                        y: rows[ri].y,
                        z: rows[ri].z,
                    };
                    let v = crate::ssf::ssf_at_centroid(&field, coord, det.normalize)
                        .map_err(|e| stage_err("detect", item_id, e))?;
                    rows[ri].ssf_signal[si] = v.value;
                }
            }
        }
    }

    Ok(TrackTable {
        signal_channels: signal_channels.to_vec(),
        rows,
        dropped_singletons: dropped,
    })
}

/// Which per-centroid value a kymograph records: a named track-table column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KymoValue {
    Velocity,
    SsfH2b,
    SsfSignal { channel: usize },
}

impl KymoValue {
    pub fn parse(s: &str) -> Result<Self, PipelineError> {
        match s {
            "velocity" => Ok(KymoValue::Velocity),
            "ssf_h2b" => Ok(KymoValue::SsfH2b),
            other => other
                .strip_prefix("ssf_c")
                .and_then(|n| n.parse::<usize>().ok())
                .map(|channel| KymoValue::SsfSignal { channel })
                .ok_or_else(|| {
                    PipelineError::Validation(format!(
                        "unknown kymograph value column {other} (velocity, ssf_h2b, ssf_c<n>)"
                    ))
                }),
        }
    }

    pub fn column_name(&self) -> String {
        match self {
            KymoValue::Velocity => "velocity".into(),
            KymoValue::SsfH2b => "ssf_h2b".into(),
            KymoValue::SsfSignal { channel } => format!("ssf_c{channel}"),
        }
    }

    fn kind(&self) -> ValueKind {
        match self {
            KymoValue::Velocity => ValueKind::Velocity,
            _ => ValueKind::Ssf,
        }
    }
}

/// Build one kymograph from a track table. Values exactly equal to zero are
/// indistinguishable from "no cell" in the kymograph format and vanish.
pub fn kymo_from_table(
    table: &TrackTable,
    source: &str,
    value: &KymoValue,
    nx: usize,
    ny: usize,
    nt: usize,
    downsample_min_radius_px: Option<f64>,
) -> Result<Kymograph, PipelineError> {
    let col = |r: &TrackRow| -> Result<f64, PipelineError> {
        Ok(match value {
            KymoValue::Velocity => r.velocity_norm,
            KymoValue::SsfH2b => r.ssf_h2b,
            KymoValue::SsfSignal { channel } => {
                let i = table
                    .signal_channels
                    .iter()
                    .position(|c| c == channel)
                    .ok_or_else(|| {
                        stage_err(
                            "kymo",
                            source,
                            format!("table has no ssf_c{channel} column"),
                        )
                    })?;
                r.ssf_signal[i]
            }
        })
    };
    let mut records = Vec::with_capacity(table.rows.len());
    for r in &table.rows {
        records.push(KymoRecord {
            x: r.x,
            y: r.y,
            z: r.z,
            t: r.t,
            value: col(r)?,
        });
    }
    let records = project_z(&records);
    let channel = value.column_name();
    let k = build_kymograph(
        &records,
        nx,
        ny,
        nt,
        &channel,
        vec![Provenance {
            source: source.to_string(),
            kind: value.kind(),
        }],
    )
    .map_err(|e| stage_err("kymo", source, e))?;
    match downsample_min_radius_px {
        Some(r) => downsample_xy(&k, r).map_err(|e| stage_err("kymo", source, e)),
        None => Ok(k),
    }
}

/// Quantize a cohort of saved kymographs to `.vol` files in `out_dir`,
/// preserving base names. Returns the written payload paths.
pub fn quantize_stage(
    kymo_paths: &[PathBuf],
    out_dir: &Path,
) -> Result<Vec<PathBuf>, PipelineError> {
    let mut kymos = Vec::with_capacity(kymo_paths.len());
    for p in kymo_paths {
        kymos.push(
            Kymograph::load(p).map_err(|e| stage_err("quantize", &p.display().to_string(), e))?,
        );
    }
    let quantized =
        quantize_cohort(&kymos).map_err(|e| stage_err("quantize", "cohort", e))?;
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let mut out = Vec::with_capacity(quantized.len());
    for (q, src) in quantized.iter().zip(kymo_paths) {
        let stem = src
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| stage_err("quantize", &src.display().to_string(), "bad file name"))?;
        let path = out_dir.join(format!("{stem}.vol"));
        q.save(&path)
            .map_err(|e| stage_err("quantize", &path.display().to_string(), e))?;
        out.push(path);
    }
    Ok(out)
}

/// Load `.vol` files and compute the pairwise NCD matrix. Item ids are the
/// file stems, in input order.
pub fn ncd_stage(
    vol_paths: &[PathBuf],
    compressor: &dyn Compressor,
    opts: &PairwiseOptions,
    out_csv: &Path,
) -> Result<DistanceMatrix, PipelineError> {
    let mut items = Vec::with_capacity(vol_paths.len());
    for p in vol_paths {
        let q = QuantizedKymograph::load(p)
            .map_err(|e| stage_err("ncd", &p.display().to_string(), e))?;
        let stem = p
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| stage_err("ncd", &p.display().to_string(), "bad file name"))?;
        items.push(NcdItem::from_kymograph(stem, &q));
    }
    let matrix = pairwise_matrix(&items, compressor, opts)
        .map_err(|e| stage_err("ncd", "pairwise matrix", e))?;
    if let Some(dir) = out_csv.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    matrix
        .save_csv(out_csv)
        .map_err(|e| stage_err("ncd", &out_csv.display().to_string(), e))?;
    Ok(matrix)
}

/// Embed a saved distance matrix and write the coordinate CSV (and scatter
/// SVG of the first two dimensions when requested). Labels, if given, must
/// cover every item id.
pub fn embed_stage(
    matrix_csv: &Path,
    k: usize,
    labels: Option<&BTreeMap<String, String>>,
    out_csv: &Path,
    out_svg: Option<&Path>,
) -> Result<Embedding, PipelineError> {
    let matrix = DistanceMatrix::load_csv(matrix_csv)
        .map_err(|e| stage_err("embed", &matrix_csv.display().to_string(), e))?;
    let e = embed(&matrix, k).map_err(|e| stage_err("embed", "distance matrix", e))?;
    let label_vec: Vec<String> = match labels {
        Some(map) => {
            let mut v = Vec::with_capacity(e.n);
            for id in &e.item_ids {
                v.push(
                    map.get(id)
                        .cloned()
                        .ok_or_else(|| stage_err("embed", id, "no label for item"))?,
                );
            }
            v
        }
        None => Vec::new(),
    };
    if let Some(dir) = out_csv.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    e.save_csv(out_csv, &label_vec)
        .map_err(|er| stage_err("embed", &out_csv.display().to_string(), er))?;
    if let Some(svg_path) = out_svg {
        let pts: Vec<(f64, f64)> = (0..e.n)
            .map(|i| {
                let row = e.point(i);
                (row[0], if e.k > 1 { row[1] } else { 0.0 })
            })
            .collect();
        let plot_labels = if label_vec.is_empty() {
            vec![String::from("item"); e.n]
        } else {
            label_vec.clone()
        };
        let svg = scatter_svg(
            &pts,
            &plot_labels,
            &format!("{} embedding", stem_of(out_csv)),
            "k1",
            "k2",
        );
        write_file(svg_path, svg.as_bytes())?;
    }
    Ok(e)
}

fn stem_of(p: &Path) -> String {
    p.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("output")
        .to_string()
}

/// Geometric cluster structure function over a saved embedding CSV; labels
/// come from the CSV's label column.
pub fn csf_stage(embedding_csv: &Path, out_json: &Path) -> Result<CsfReport, PipelineError> {
    let (e, labels) = Embedding::load_csv(embedding_csv)
        .map_err(|er| stage_err("csf", &embedding_csv.display().to_string(), er))?;
    if labels.iter().any(|l| l.is_empty()) {
        return Err(stage_err(
            "csf",
            &embedding_csv.display().to_string(),
            "embedding CSV has no labels; rerun the embed stage with labels",
        ));
    }
    let report = csf_rkhs(&e, &labels).map_err(|er| stage_err("csf", "embedding", er))?;
    if let Some(dir) = out_json.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    report
        .save_json(out_json)
        .map_err(|er| stage_err("csf", &out_json.display().to_string(), er))?;
    Ok(report)
}

/// Paired per-item comparison of two deficiency reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedCsfStats {
    pub a_name: String,
    pub b_name: String,
    pub n_items: usize,
    pub a_mean: f64,
    pub a_std: f64,
    pub b_mean: f64,
    pub b_std: f64,
    /// Wilcoxon signed-rank over per-item deficiency pairs; absent when
    /// fewer than 5 non-zero differences exist.
    pub w_plus: Option<f64>,
    pub p_two_sided: Option<f64>,
    pub exact: Option<bool>,
    #[serde(default)]
    pub skipped_reason: Option<String>,
}

/// Wilcoxon comparison of two CSF reports over the same items.
pub fn stats_paired_csf(
    csf_a: &Path,
    csf_b: &Path,
    a_name: &str,
    b_name: &str,
) -> Result<PairedCsfStats, PipelineError> {
    let load = |p: &Path| -> Result<CsfReport, PipelineError> {
        let text = fs::read_to_string(p).map_err(|e| io_err(p, e))?;
        serde_json::from_str(&text).map_err(|e| stage_err("stats", &p.display().to_string(), e))
    };
    let a = load(csf_a)?;
    let b = load(csf_b)?;
    if a.item_ids != b.item_ids {
        return Err(stage_err(
            "stats",
            "csf reports",
            "item id lists differ between the two reports",
        ));
    }
    let pairs: Vec<(f64, f64)> = a
        .per_item
        .iter()
        .zip(&b.per_item)
        .map(|(x, y)| (*x, *y))
        .collect();
    let mut out = PairedCsfStats {
        a_name: a_name.to_string(),
        b_name: b_name.to_string(),
        n_items: pairs.len(),
        a_mean: a.items_mean,
        a_std: a.items_std,
        b_mean: b.items_mean,
        b_std: b.items_std,
        w_plus: None,
        p_two_sided: None,
        exact: None,
        skipped_reason: None,
    };
    match wilcoxon_signed_rank(&pairs) {
        Ok(w) => {
            out.w_plus = Some(w.w_plus);
            out.p_two_sided = Some(w.p_two_sided);
            out.exact = Some(w.exact);
        }
        Err(e) => out.skipped_reason = Some(e.to_string()),
    }
    Ok(out)
}

/// Correlation between per-pair embedding shifts of two channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftCorrelationStats {
    pub pair_ids: Vec<String>,
    pub shifts_a: Vec<f64>,
    pub shifts_b: Vec<f64>,
    pub rho: Option<f64>,
    pub p: Option<f64>,
    #[serde(default)]
    pub skipped_reason: Option<String>,
}

/// From two joint-embedding CSVs whose ids are `pre-<id>` and `post-<id>`,
/// compute per-id shift magnitudes in each and correlate them.
pub fn stats_shift_correlation(
    embed_a_csv: &Path,
    embed_b_csv: &Path,
) -> Result<ShiftCorrelationStats, PipelineError> {
    let shifts_of = |p: &Path| -> Result<Vec<(String, f64)>, PipelineError> {
        let (e, _) = Embedding::load_csv(p)
            .map_err(|er| stage_err("stats", &p.display().to_string(), er))?;
        let mut bare: Vec<String> = e
            .item_ids
            .iter()
            .filter_map(|id| id.strip_prefix("pre-").map(str::to_string))
            .collect();
        bare.sort();
        if bare.is_empty() {
            return Err(stage_err(
                "stats",
                &p.display().to_string(),
                "no pre--prefixed ids in the embedding",
            ));
        }
        let pre_ids: Vec<String> = bare.iter().map(|b| format!("pre-{b}")).collect();
        let post_ids: Vec<String> = bare.iter().map(|b| format!("post-{b}")).collect();
        let mut pre = e
            .select(&pre_ids)
            .map_err(|er| stage_err("stats", &p.display().to_string(), er))?;
        let mut post = e
            .select(&post_ids)
            .map_err(|er| stage_err("stats", &p.display().to_string(), er))?;
        pre.item_ids = bare.clone();
        post.item_ids = bare;
        paired_shift_distances(&pre, &post)
            .map_err(|er| stage_err("stats", &p.display().to_string(), er))
    };
    let a = shifts_of(embed_a_csv)?;
    let b = shifts_of(embed_b_csv)?;
    let ids_a: Vec<String> = a.iter().map(|(id, _)| id.clone()).collect();
    let ids_b: Vec<String> = b.iter().map(|(id, _)| id.clone()).collect();
    if ids_a != ids_b {
        return Err(stage_err(
            "stats",
            "shift lists",
            "pair ids differ between the two channels",
        ));
    }
    let sa: Vec<f64> = a.iter().map(|(_, s)| *s).collect();
    let sb: Vec<f64> = b.iter().map(|(_, s)| *s).collect();
    let mut out = ShiftCorrelationStats {
        pair_ids: ids_a,
        shifts_a: sa.clone(),
        shifts_b: sb.clone(),
        rho: None,
        p: None,
        skipped_reason: None,
    };
    match pearson(&sa, &sb) {
        Ok((rho, p)) => {
            out.rho = Some(rho);
            out.p = Some(p);
        }
        Err(e) => out.skipped_reason = Some(e.to_string()),
    }
    Ok(out)
}

/// Everything the stats stage produced for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct StatsReport {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub paired_csf: Vec<PairedCsfStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift_correlation: Option<ShiftCorrelationStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    /// Path relative to the run's output directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub items: usize,
}

/// Written at the end of a run: the resolved config, its digest, and a
/// digest of every artifact, so a rerun can be verified byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config: PipelineConfig,
    pub config_sha256: String,
    pub stages: Vec<StageRecord>,
    pub artifacts: Vec<ArtifactRecord>,
}

/// Files and labels produced by a corpus materialization stage.
pub struct CorpusFiles {
    /// item id -> class label (or condition side for paired corpora)
    pub labels: BTreeMap<String, String>,
    /// (channel name, kymograph payload paths in item order)
    pub channels: Vec<(String, Vec<PathBuf>)>,
    /// Every file written, sidecars and metadata included.
    pub written: Vec<PathBuf>,
}

fn save_kymo_at(
    out_dir: &Path,
    rel: &str,
    k: &Kymograph,
    written: &mut Vec<PathBuf>,
) -> Result<PathBuf, PipelineError> {
    let path = out_dir.join(rel);
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    k.save(&path)
        .map_err(|e| stage_err("kymo", &path.display().to_string(), e))?;
    written.push(crate::volume::sidecar_path(&path));
    written.push(path.clone());
    Ok(path)
}

/// Materialize the labeled benchmark corpus under `out_dir`: one kymograph
/// per channel per item plus `labels.json` and `corpus_manifest.json`.
/// Item ids are `<label>-<instance>`, also used as file stems.
pub fn write_benchmark_corpus(
    spec: &SynthSpec,
    out_dir: &Path,
) -> Result<CorpusFiles, PipelineError> {
    let corpus =
        generate_benchmark(spec).map_err(|e| stage_err("synth", "benchmark corpus", e))?;
    let ids: Vec<String> = corpus
        .iter()
        .map(|i| format!("{}-{:02}", i.label, i.instance))
        .collect();
    let labels: BTreeMap<String, String> = corpus
        .iter()
        .zip(&ids)
        .map(|(item, id)| (id.clone(), item.label.clone()))
        .collect();
    let mut written = Vec::new();
    let labels_path = out_dir.join("labels.json");
    write_json(&labels_path, &labels)?;
    written.push(labels_path);

    let ch2_name = corpus[0].random.channel.clone();
    let mut manifest = CorpusManifest { entries: Vec::new() };
    let mut vel_paths = Vec::new();
    let mut ch2_paths = Vec::new();
    for (item, id) in corpus.iter().zip(&ids) {
        let vp = save_kymo_at(
            out_dir,
            &format!("kymo/velocity/{id}.kymo"),
            &item.velocity,
            &mut written,
        )?;
        let rp = save_kymo_at(
            out_dir,
            &format!("kymo/{ch2_name}/{id}.kymo"),
            &item.random,
            &mut written,
        )?;
        for (k, p) in [(&item.velocity, &vp), (&item.random, &rp)] {
            manifest.entries.push(ManifestEntry {
                file: p
                    .strip_prefix(out_dir)
                    .unwrap_or(p.as_path())
                    .display()
                    .to_string(),
                label: item.label.clone(),
                channel: k.channel.clone(),
                kind: k.provenance[0].kind,
                seed: item.seed,
            });
        }
        vel_paths.push(vp);
        ch2_paths.push(rp);
    }
    let cm_path = out_dir.join("corpus_manifest.json");
    write_json(&cm_path, &manifest)?;
    written.push(cm_path);
    Ok(CorpusFiles {
        labels,
        channels: vec![("velocity".into(), vel_paths), (ch2_name, ch2_paths)],
        written,
    })
}

/// Materialize a paired pre/post corpus. Item ids are `pre-<pair>` and
/// `post-<pair>`; labels record the condition side.
pub fn write_paired_corpus(
    spec: &PairedShiftSpec,
    out_dir: &Path,
) -> Result<CorpusFiles, PipelineError> {
    let pairs = generate_paired_shift_corpus(spec)
        .map_err(|e| stage_err("synth", "paired corpus", e))?;
    let ch2_name = pairs[0].pre.random.channel.clone();
    let mut labels = BTreeMap::new();
    let mut written = Vec::new();
    let mut manifest = CorpusManifest { entries: Vec::new() };
    let mut vel_paths = Vec::new();
    let mut ch2_paths = Vec::new();
    for p in &pairs {
        for (side, item) in [("pre", &p.pre), ("post", &p.post)] {
            let id = format!("{side}-{}", p.id);
            labels.insert(id.clone(), side.to_string());
            let vp = save_kymo_at(
                out_dir,
                &format!("kymo/velocity/{id}.kymo"),
                &item.velocity,
                &mut written,
            )?;
            let rp = save_kymo_at(
                out_dir,
                &format!("kymo/{ch2_name}/{id}.kymo"),
                &item.random,
                &mut written,
            )?;
            for (k, path) in [(&item.velocity, &vp), (&item.random, &rp)] {
                manifest.entries.push(ManifestEntry {
                    file: path
                        .strip_prefix(out_dir)
                        .unwrap_or(path.as_path())
                        .display()
                        .to_string(),
                    label: side.to_string(),
                    channel: k.channel.clone(),
                    kind: k.provenance[0].kind,
                    seed: item.seed,
                });
            }
            vel_paths.push(vp);
            ch2_paths.push(rp);
        }
    }
    let labels_path = out_dir.join("labels.json");
    write_json(&labels_path, &labels)?;
    written.push(labels_path);
    let cm_path = out_dir.join("corpus_manifest.json");
    write_json(&cm_path, &manifest)?;
    written.push(cm_path);
    Ok(CorpusFiles {
        labels,
        channels: vec![("velocity".into(), vel_paths), (ch2_name, ch2_paths)],
        written,
    })
}

struct RunState {
    out_dir: PathBuf,
    written: Vec<PathBuf>,
    stages: Vec<StageRecord>,
}

impl RunState {
    fn record(&mut self, path: PathBuf) {
        self.written.push(path);
    }
    /// Kymograph-family saves write a JSON sidecar next to the payload.
    fn record_with_sidecar(&mut self, path: PathBuf) {
        self.written.push(crate::volume::sidecar_path(&path));
        self.written.push(path);
    }
    fn stage(&mut self, name: &str, items: usize) {
        self.stages.push(StageRecord {
            stage: name.to_string(),
            items,
        });
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    write_file(path, text.as_bytes())
}

/// Quantize -> NCD -> embed -> CSF for one channel's kymograph files.
/// Returns the CSF JSON path when labels were available.
#[allow(clippy::too_many_arguments)]
fn channel_tail(
    state: &mut RunState,
    channel: &str,
    kymo_paths: &[PathBuf],
    labels: Option<&BTreeMap<String, String>>,
    compressor: &dyn Compressor,
    opts: &PairwiseOptions,
    embedding_k: usize,
    with_csf: bool,
) -> Result<Option<PathBuf>, PipelineError> {
    let quant_dir = state.out_dir.join("quant").join(channel);
    let vols = quantize_stage(kymo_paths, &quant_dir)?;
    for v in &vols {
        state.record_with_sidecar(v.clone());
    }
    state.stage(&format!("quantize/{channel}"), vols.len());

    let matrix_csv = state.out_dir.join("ncd").join(format!("{channel}.csv"));
    ncd_stage(&vols, compressor, opts, &matrix_csv)?;
    state.record(matrix_csv.clone());
    state.stage(&format!("ncd/{channel}"), vols.len());

    let embed_csv = state.out_dir.join("embed").join(format!("{channel}.csv"));
    let embed_svg = state.out_dir.join("embed").join(format!("{channel}.svg"));
    embed_stage(&matrix_csv, embedding_k, labels, &embed_csv, Some(&embed_svg))?;
    state.record(embed_csv.clone());
    state.record(embed_svg);
    state.stage(&format!("embed/{channel}"), kymo_paths.len());

    if with_csf && labels.is_some() {
        let csf_json = state.out_dir.join("csf").join(format!("{channel}.json"));
        csf_stage(&embed_csv, &csf_json)?;
        state.record(csf_json.clone());
        state.stage(&format!("csf/{channel}"), kymo_paths.len());
        return Ok(Some(csf_json));
    }
    Ok(None)
}

fn run_synthetic(
    state: &mut RunState,
    cfg: &PipelineConfig,
    spec: &SynthSpec,
) -> Result<StatsReport, PipelineError> {
    let corpus = write_benchmark_corpus(spec, &state.out_dir)?;
    state.written.extend(corpus.written.iter().cloned());
    state.stage("synth", corpus.channels[0].1.len());

    let compressor = cfg.compressor.build();
    let opts = PairwiseOptions {
        both_orders: false,
        diagonal: true,
        workers: cfg.workers,
    };
    let mut csf_paths = Vec::new();
    for (channel, paths) in &corpus.channels {
        csf_paths.push(channel_tail(
            state,
            channel,
            paths,
            Some(&corpus.labels),
            compressor.as_ref(),
            &opts,
            cfg.embedding_k,
            true,
        )?);
    }

    let mut report = StatsReport::default();
    if let [Some(a), Some(b)] = &csf_paths[..] {
        report.paired_csf.push(stats_paired_csf(
            a,
            b,
            &corpus.channels[0].0,
            &corpus.channels[1].0,
        )?);
    }
    Ok(report)
}

fn run_paired(
    state: &mut RunState,
    cfg: &PipelineConfig,
    spec: &PairedShiftSpec,
) -> Result<StatsReport, PipelineError> {
    let corpus = write_paired_corpus(spec, &state.out_dir)?;
    state.written.extend(corpus.written.iter().cloned());
    state.stage("synth", corpus.channels[0].1.len());

    let compressor = cfg.compressor.build();
    let opts = PairwiseOptions {
        both_orders: false,
        diagonal: true,
        workers: cfg.workers,
    };
    let mut embed_csvs = Vec::new();
    for (channel, paths) in &corpus.channels {
        channel_tail(
            state,
            channel,
            paths,
            Some(&corpus.labels),
            compressor.as_ref(),
            &opts,
            cfg.embedding_k,
            false,
        )?;
        embed_csvs.push(state.out_dir.join("embed").join(format!("{channel}.csv")));
    }

    Ok(StatsReport {
        shift_correlation: Some(stats_shift_correlation(&embed_csvs[0], &embed_csvs[1])?),
        ..StatsReport::default()
    })
}

fn run_volumes(
    state: &mut RunState,
    cfg: &PipelineConfig,
    manifest_path: &Path,
) -> Result<StatsReport, PipelineError> {
    let manifest = VolumeManifest::load(manifest_path)?;
    let det = DetectConfig {
        radii_um: cfg.radii_um.clone(),
        threshold: cfg.threshold,
        normalize: cfg.normalize,
        min_separation_px: None,
    };

    // shared channel layout required so per-channel cohorts line up
    let signal_channels = manifest.items[0].signal_channels.clone();
    for item in &manifest.items {
        if item.signal_channels != signal_channels {
            return Err(PipelineError::Validation(format!(
                "item {} lists different signal channels than the first item",
                item.id
            )));
        }
    }

    let mut tables = Vec::new();
    let mut dims_list = Vec::new();
    let mut spacings = Vec::new();
    for item in &manifest.items {
        let vol = Volume::load(&item.path)
            .map_err(|e| stage_err("detect", &item.path.display().to_string(), e))?;
        let table = detect_and_track(
            &vol,
            &item.id,
            item.nuclear_channel,
            &signal_channels,
            &det,
            cfg.gate_px,
        )?;
        let csv = state.out_dir.join("tracks").join(format!("{}.csv", item.id));
        table.save_csv(&csv)?;
        state.record(csv);
        dims_list.push(vol.meta.dims);
        spacings.push(vol.meta.spacing_um);
        tables.push(table);
    }
    state.stage("detect", manifest.items.len());

    // smallest configured radius at the coarsest in-plane spacing; the
    // downsampling stage enforces its own > 2 px occlusion guard on this
    let downsample_guard = if cfg.downsample {
        let mut min_r_px = f64::INFINITY;
        for sp in &spacings {
            for &r in &cfg.radii_um {
                min_r_px = min_r_px.min(r / sp[0]).min(r / sp[1]);
            }
        }
        Some(min_r_px)
    } else {
        None
    };

    let mut channel_paths: Vec<(String, Vec<PathBuf>)> = Vec::new();
    let mut values = vec![KymoValue::Velocity];
    for &c in &signal_channels {
        values.push(KymoValue::SsfSignal { channel: c });
    }
    for value in &values {
        let channel = value.column_name();
        let mut paths = Vec::new();
        for ((item, table), dims) in manifest.items.iter().zip(&tables).zip(&dims_list) {
            let k = kymo_from_table(
                table,
                &item.id,
                value,
                dims.x,
                dims.y,
                dims.t,
                downsample_guard,
            )?;
            let mut written = Vec::new();
            let path = save_kymo_at(
                &state.out_dir,
                &format!("kymo/{channel}/{}.kymo", item.id),
                &k,
                &mut written,
            )?;
            state.written.extend(written);
            paths.push(path);
        }
        state.stage(&format!("kymo/{channel}"), paths.len());
        channel_paths.push((channel, paths));
    }

    let labels: Option<BTreeMap<String, String>> = {
        let have: Vec<_> = manifest
            .items
            .iter()
            .filter_map(|i| i.label.clone().map(|l| (i.id.clone(), l)))
            .collect();
        if have.len() == manifest.items.len() {
            Some(have.into_iter().collect())
        } else {
            None
        }
    };
    if let Some(map) = &labels {
        let labels_path = state.out_dir.join("labels.json");
        write_json(&labels_path, map)?;
        state.record(labels_path);
    }

    let compressor = cfg.compressor.build();
    let opts = PairwiseOptions {
        both_orders: false,
        diagonal: true,
        workers: cfg.workers,
    };
    let mut csf_paths = Vec::new();
    for (channel, paths) in &channel_paths {
        let csf = channel_tail(
            state,
            channel,
            paths,
            labels.as_ref(),
            compressor.as_ref(),
            &opts,
            cfg.embedding_k,
            true,
        )?;
        csf_paths.push((channel.clone(), csf));
    }

    let mut report = StatsReport::default();
    if let Some((vel_name, Some(vel_csf))) = csf_paths.first().cloned() {
        for (name, csf) in csf_paths.iter().skip(1) {
            if let Some(csf) = csf {
                report
                    .paired_csf
                    .push(stats_paired_csf(&vel_csf, csf, &vel_name, name)?);
            }
        }
    }
    Ok(report)
}

/// Validate, execute every configured stage, and write the run manifest.
pub fn run_all(cfg: &PipelineConfig) -> Result<RunManifest, PipelineError> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir).map_err(|e| io_err(&cfg.out_dir, e))?;
    let mut state = RunState {
        out_dir: cfg.out_dir.clone(),
        written: Vec::new(),
        stages: Vec::new(),
    };

    // the echoed config is rooted at the run directory itself so reruns
    // into different locations stay byte-identical
    let mut echo = cfg.clone();
    echo.out_dir = PathBuf::from(".");
    let config_path = state.out_dir.join("config.json");
    write_json(&config_path, &echo)?;
    state.record(config_path);

    let stats = match &cfg.input {
        InputConfig::Synthetic { spec } => run_synthetic(&mut state, cfg, spec)?,
        InputConfig::PairedSynthetic { spec } => run_paired(&mut state, cfg, spec)?,
        InputConfig::Volumes { manifest } => run_volumes(&mut state, cfg, manifest)?,
    };
    let stats_path = state.out_dir.join("stats").join("summary.json");
    write_json(&stats_path, &stats)?;
    state.record(stats_path);
    state.stage("stats", 1);

    let mut artifacts = Vec::with_capacity(state.written.len());
    for path in &state.written {
        let bytes = fs::metadata(path).map_err(|e| io_err(path, e))?.len();
        artifacts.push(ArtifactRecord {
            path: path
                .strip_prefix(&state.out_dir)
                .unwrap_or(path.as_path())
                .display()
                .to_string(),
            bytes,
            sha256: file_digest(path)?,
        });
    }
    artifacts.sort_by(|a, b| a.path.cmp(&b.path));

    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: echo.clone(),
        config_sha256: sha256_hex(
            serde_json::to_string(&echo)
                .expect("config serializes")
                .as_bytes(),
        ),
        stages: state.stages,
        artifacts,
    };
    write_json(&state.out_dir.join("run_manifest.json"), &manifest)?;
    Ok(manifest)
}
