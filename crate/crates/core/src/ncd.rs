//! Normalized compression distance over quantized kymographs.
//!
//! NCD(a, b) = (Z(a||b) - min(Z(a), Z(b))) / max(Z(a), Z(b)), where Z is the
//! compressed size in bytes under a pluggable lossless compressor and || is
//! concatenation along the time axis. The byte stream a compressor sees is
//! the headerless row-major (x fastest, then y, then t) u8 array, so sizes
//! are reproducible across runs and machines.
//!
//! The default compressor is bzip2 at level 9. Its block-sorting transform
//! shares statistics across the whole concatenated pair (up to the 900 KB
//! block size), which is what makes same-source pairs measurably closer than
//! cross-source pairs on sparse kymographs; deflate-family coders with their
//! 32 KB windows cannot see one item from the other at these sizes and push
//! every distance toward 1. Both are provided; so is an adapter that shells
//! out to an arbitrary external codec.
//!
//! Singleton and pair compressed sizes are memoized in a digest-keyed cache,
//! so an N-item matrix costs N singleton compressions plus one compression
//! per distinct pair stream.

use bzip2::write::BzEncoder;
use flate2::write::DeflateEncoder;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::io::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use thiserror::Error;

use crate::kymograph::QuantizedKymograph;

#[derive(Debug, Error)]
pub enum NcdError {
    #[error("items {a} and {b} have different spatial extents {a_dims:?} vs {b_dims:?}")]
    Shape {
        a: String,
        b: String,
        a_dims: (usize, usize),
        b_dims: (usize, usize),
    },
    #[error("item {0} is empty; NCD needs non-empty inputs")]
    EmptyItem(String),
    #[error("payload length {len} does not match dims {nx}x{ny}x{nt}")]
    PayloadDims {
        len: usize,
        nx: usize,
        ny: usize,
        nt: usize,
    },
    #[error("pairwise matrix needs at least 2 items, got {0}")]
    TooFewItems(usize),
    #[error("compressing {item}: {detail}")]
    CompressorFailed { item: String, detail: String },
    #[error("external compressor executable {0} not found")]
    MissingExecutable(String),
    #[error("external compressor {program} exited with {status} on {item}: {stderr}")]
    ExternalFailed {
        program: String,
        status: String,
        item: String,
        stderr: String,
    },
    #[error("matrix file {path}: {detail}")]
    MatrixFormat { path: String, detail: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> NcdError {
    NcdError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// A byte stream plus the 3-D dims it encodes, for container-aware codecs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Payload {
    pub bytes: Vec<u8>,
    pub nx: usize,
    pub ny: usize,
    pub nt: usize,
}

impl Payload {
    pub fn new(bytes: Vec<u8>, nx: usize, ny: usize, nt: usize) -> Result<Self, NcdError> {
        if bytes.len() != nx * ny * nt {
            return Err(NcdError::PayloadDims {
                len: bytes.len(),
                nx,
                ny,
                nt,
            });
        }
        Ok(Payload { bytes, nx, ny, nt })
    }

    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update((self.nx as u64).to_le_bytes());
        h.update((self.ny as u64).to_le_bytes());
        h.update(&self.bytes);
        h.finalize().into()
    }
}

/// Headerless row-major (x fastest, then y, then t) u8 serialization.
pub fn serialize_for_compression(k: &QuantizedKymograph) -> Payload {
    Payload {
        bytes: k.data.clone(),
        nx: k.nx,
        ny: k.ny,
        nt: k.nt,
    }
}

/// Inverse of [`serialize_for_compression`] given known dims.
pub fn parse_serialized(
    bytes: &[u8],
    nx: usize,
    ny: usize,
    nt: usize,
) -> Result<Vec<u8>, NcdError> {
    if bytes.len() != nx * ny * nt {
        return Err(NcdError::PayloadDims {
            len: bytes.len(),
            nx,
            ny,
            nt,
        });
    }
    Ok(bytes.to_vec())
}

/// How a pair stream was assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConcatInfo {
    /// Zero frames appended to the first item to equalize time extents.
    pub padded_frames_a: usize,
    /// Zero frames appended to the second item.
    pub padded_frames_b: usize,
}

/// Concatenate two items along time into one 3-D stream.
///
/// Spatial extents must match; the item with fewer timepoints is padded with
/// trailing all-zero frames so both contribute equal depth, and the padding
/// is reported.
pub fn concat_time(a: &Payload, b: &Payload) -> Result<(Payload, ConcatInfo), NcdError> {
    if (a.nx, a.ny) != (b.nx, b.ny) {
        return Err(NcdError::Shape {
            a: "first".into(),
            b: "second".into(),
            a_dims: (a.nx, a.ny),
            b_dims: (b.nx, b.ny),
        });
    }
    let frame = a.nx * a.ny;
    let nt = a.nt.max(b.nt);
    let mut bytes = Vec::with_capacity(frame * nt * 2);
    bytes.extend_from_slice(&a.bytes);
    bytes.resize(frame * nt, 0);
    bytes.extend_from_slice(&b.bytes);
    bytes.resize(frame * nt * 2, 0);
    Ok((
        Payload {
            bytes,
            nx: a.nx,
            ny: a.ny,
            nt: nt * 2,
        },
        ConcatInfo {
            padded_frames_a: nt - a.nt,
            padded_frames_b: nt - b.nt,
        },
    ))
}

/// Deterministic byte-stream to compressed-byte-count function.
pub trait Compressor: Send + Sync {
    fn name(&self) -> String;
    fn compressed_size(&self, payload: &Payload) -> Result<u64, NcdError>;
}

/// Block-sorting compressor; the default. Level 1..=9 selects the block
/// size (100 KB per level), and statistics are shared across the whole
/// stream within a block.
#[derive(Debug, Clone)]
pub struct Bzip2Compressor {
    pub level: u32,
}

impl Default for Bzip2Compressor {
    fn default() -> Self {
        Bzip2Compressor { level: 9 }
    }
}

impl Compressor for Bzip2Compressor {
    fn name(&self) -> String {
        format!("bzip2-{}", self.level)
    }

    fn compressed_size(&self, payload: &Payload) -> Result<u64, NcdError> {
        let mut enc = BzEncoder::new(Vec::new(), bzip2::Compression::new(self.level));
        enc.write_all(&payload.bytes)
            .and_then(|_| enc.finish())
            .map(|v| v.len() as u64)
            .map_err(|e| NcdError::CompressorFailed {
                item: format!("{} byte stream", payload.bytes.len()),
                detail: e.to_string(),
            })
    }
}

/// Deflate (raw, no container) at a fixed level. Its 32 KB window limits
/// cross-item sharing on large items; kept for small payloads and as the
/// family named by the distance-matrix format.
#[derive(Debug, Clone)]
pub struct DeflateCompressor {
    pub level: u32,
}

impl Default for DeflateCompressor {
    fn default() -> Self {
        DeflateCompressor { level: 9 }
    }
}

impl Compressor for DeflateCompressor {
    fn name(&self) -> String {
        format!("deflate-{}", self.level)
    }

    fn compressed_size(&self, payload: &Payload) -> Result<u64, NcdError> {
        let mut enc = DeflateEncoder::new(Vec::new(), flate2::Compression::new(self.level));
        enc.write_all(&payload.bytes)
            .and_then(|_| enc.finish())
            .map(|v| v.len() as u64)
            .map_err(|e| NcdError::CompressorFailed {
                item: format!("{} byte stream", payload.bytes.len()),
                detail: e.to_string(),
            })
    }
}

/// Identity "compressor": Z(x) = |x|. Makes NCD exactly 1 everywhere, which
/// pins the formula in tests.
#[derive(Debug, Clone, Default)]
pub struct StoreCompressor;

impl Compressor for StoreCompressor {
    fn name(&self) -> String {
        "store".into()
    }

    fn compressed_size(&self, payload: &Payload) -> Result<u64, NcdError> {
        Ok(payload.bytes.len() as u64)
    }
}

/// Container handed to an external codec.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Container {
    /// Headerless bytes, exactly the serialized stream.
    Raw,
    /// Binary PGM with all time frames stacked vertically (width nx,
    /// height ny*nt), so image codecs accept the 3-D stream.
    PgmStack,
}

/// Descriptor for shelling out to an external codec.
///
/// The argument template receives `{input}` and `{output}` placeholders;
/// Z is the byte size of the produced output file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternalCompressorSpec {
    pub name: String,
    pub program: String,
    pub args: Vec<String>,
    pub container: Container,
}

pub struct ExternalCompressor {
    spec: ExternalCompressorSpec,
}

impl ExternalCompressor {
    pub fn new(spec: ExternalCompressorSpec) -> Self {
        ExternalCompressor { spec }
    }

    fn container_bytes(&self, payload: &Payload) -> Vec<u8> {
        match self.spec.container {
            Container::Raw => payload.bytes.clone(),
            Container::PgmStack => {
                let mut out =
                    format!("P5\n{} {}\n255\n", payload.nx, payload.ny * payload.nt).into_bytes();
                out.extend_from_slice(&payload.bytes);
                out
            }
        }
    }
}

impl Compressor for ExternalCompressor {
    fn name(&self) -> String {
        self.spec.name.clone()
    }

    fn compressed_size(&self, payload: &Payload) -> Result<u64, NcdError> {
        let dir = tempfile::tempdir().map_err(|e| io_err(Path::new("tempdir"), e))?;
        let input = dir.path().join("in.bin");
        let output = dir.path().join("out.bin");
        std::fs::write(&input, self.container_bytes(payload)).map_err(|e| io_err(&input, e))?;
        let args: Vec<String> = self
            .spec
            .args
            .iter()
            .map(|a| {
                a.replace("{input}", &input.display().to_string())
                    .replace("{output}", &output.display().to_string())
            })
            .collect();
        let run = std::process::Command::new(&self.spec.program)
            .args(&args)
            .output();
        let out = match run {
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(NcdError::MissingExecutable(self.spec.program.clone()))
            }
            Err(e) => {
                return Err(NcdError::CompressorFailed {
                    item: self.spec.program.clone(),
                    detail: e.to_string(),
                })
            }
            Ok(out) => out,
        };
        if !out.status.success() {
            return Err(NcdError::ExternalFailed {
                program: self.spec.program.clone(),
                status: out.status.to_string(),
                item: format!("{} byte stream", payload.bytes.len()),
                stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
            });
        }
        let meta = std::fs::metadata(&output).map_err(|e| io_err(&output, e))?;
        Ok(meta.len())
    }
}

/// Digest-keyed memo of compressed sizes, safe to share across workers.
#[derive(Default)]
pub struct SizeCache {
    map: Mutex<HashMap<[u8; 32], u64>>,
    /// Unique streams actually compressed (cache misses).
    misses: AtomicU64,
}

impl SizeCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    /// Look up the payload's size, compressing on a miss.
    pub fn size(&self, c: &dyn Compressor, payload: &Payload) -> Result<u64, NcdError> {
        let key = payload.digest();
        if let Some(&z) = self.map.lock().unwrap().get(&key) {
            return Ok(z);
        }
        let z = c.compressed_size(payload)?;
        let mut map = self.map.lock().unwrap();
        if map.insert(key, z).is_none() {
            self.misses.fetch_add(1, Ordering::Relaxed);
        }
        Ok(z)
    }
}

/// An identified item ready for distance computation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NcdItem {
    pub id: String,
    pub payload: Payload,
}

impl NcdItem {
    pub fn from_kymograph(id: &str, k: &QuantizedKymograph) -> Self {
        NcdItem {
            id: id.to_string(),
            payload: serialize_for_compression(k),
        }
    }
}

/// (Z(a||b) - min(Z(a), Z(b))) / max(Z(a), Z(b)).
pub fn ncd_from_sizes(za: u64, zb: u64, zab: u64) -> f64 {
    (zab as f64 - za.min(zb) as f64) / za.max(zb) as f64
}

/// One normalized compression distance; singleton sizes are memoized in the
/// cache so repeated calls only pay for the pair stream.
pub fn ncd(
    a: &NcdItem,
    b: &NcdItem,
    c: &dyn Compressor,
    cache: &SizeCache,
) -> Result<f64, NcdError> {
    if a.payload.bytes.is_empty() {
        return Err(NcdError::EmptyItem(a.id.clone()));
    }
    if b.payload.bytes.is_empty() {
        return Err(NcdError::EmptyItem(b.id.clone()));
    }
    let za = cache.size(c, &a.payload)?;
    let zb = cache.size(c, &b.payload)?;
    let (pair, _) = concat_time(&a.payload, &b.payload).map_err(|e| match e {
        NcdError::Shape { a_dims, b_dims, .. } => NcdError::Shape {
            a: a.id.clone(),
            b: b.id.clone(),
            a_dims,
            b_dims,
        },
        other => other,
    })?;
    let zab = cache.size(c, &pair)?;
    Ok(ncd_from_sizes(za, zb, zab))
}

/// Controls for [`pairwise_matrix`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseOptions {
    /// Compress both a||b and b||a and average; default computes one order
    /// per pair and mirrors it.
    pub both_orders: bool,
    /// Compute ncd(a, a) on the diagonal (needed to record the self-NCD
    /// bound); zero diagonal when disabled.
    pub diagonal: bool,
    /// Bound on parallel workers; library default when unset.
    pub workers: Option<usize>,
}

impl Default for PairwiseOptions {
    fn default() -> Self {
        PairwiseOptions {
            both_orders: false,
            diagonal: true,
            workers: None,
        }
    }
}

/// Symmetric full matrix of pairwise NCD values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    pub n: usize,
    /// Row-major n*n values.
    pub values: Vec<f64>,
    pub item_ids: Vec<String>,
    pub compressor: String,
    /// Largest diagonal entry (0 when the diagonal was skipped).
    pub self_ncd_bound: f64,
    /// Largest |ncd(a,b) - ncd(b,a)| seen; 0 unless both orders ran.
    pub max_asymmetry: f64,
    /// Singleton streams compressed.
    pub singleton_compressions: u64,
    /// Distinct off-diagonal pair streams compressed.
    pub pair_compressions: u64,
    /// Diagonal self-pair streams compressed.
    pub self_pair_compressions: u64,
}

impl DistanceMatrix {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    /// Write as CSV: comment lines with the compressor and recorded bounds,
    /// then an id header row, then one labeled row per item. Floats print in
    /// shortest round-trip form so read-back is bit-exact.
    pub fn save_csv(&self, path: &Path) -> Result<(), NcdError> {
        let mut s = String::new();
        s.push_str(&format!("# compressor: {}\n", self.compressor));
        s.push_str(&format!("# self_ncd_bound: {}\n", self.self_ncd_bound));
        s.push_str(&format!("# max_asymmetry: {}\n", self.max_asymmetry));
        s.push_str("id");
        for id in &self.item_ids {
            s.push(',');
            s.push_str(id);
        }
        s.push('\n');
        for i in 0..self.n {
            s.push_str(&self.item_ids[i]);
            for j in 0..self.n {
                s.push(',');
                s.push_str(&format!("{}", self.at(i, j)));
            }
            s.push('\n');
        }
        std::fs::write(path, s).map_err(|e| io_err(path, e))
    }

    pub fn load_csv(path: &Path) -> Result<Self, NcdError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let bad = |detail: &str| NcdError::MatrixFormat {
            path: path.display().to_string(),
            detail: detail.to_string(),
        };
        let mut compressor = String::new();
        let mut self_ncd_bound = 0.0;
        let mut max_asymmetry = 0.0;
        let mut header: Option<Vec<String>> = None;
        let mut rows: Vec<(String, Vec<f64>)> = Vec::new();
        for line in text.lines() {
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if let Some(v) = rest.strip_prefix("compressor:") {
                    compressor = v.trim().to_string();
                } else if let Some(v) = rest.strip_prefix("self_ncd_bound:") {
                    self_ncd_bound = v.trim().parse().map_err(|_| bad("bad self_ncd_bound"))?;
                } else if let Some(v) = rest.strip_prefix("max_asymmetry:") {
                    max_asymmetry = v.trim().parse().map_err(|_| bad("bad max_asymmetry"))?;
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            match &header {
                None => {
                    if cells.first() != Some(&"id") {
                        return Err(bad("missing id header row"));
                    }
                    header = Some(cells[1..].iter().map(|s| s.to_string()).collect());
                }
                Some(ids) => {
                    if cells.len() != ids.len() + 1 {
                        return Err(bad("row width does not match header"));
                    }
                    let vals = cells[1..]
                        .iter()
                        .map(|s| s.parse::<f64>())
                        .collect::<Result<Vec<f64>, _>>()
                        .map_err(|_| bad("non-numeric cell"))?;
                    rows.push((cells[0].to_string(), vals));
                }
            }
        }
        let item_ids = header.ok_or_else(|| bad("empty file"))?;
        let n = item_ids.len();
        if rows.len() != n {
            return Err(bad("row count does not match header"));
        }
        let mut values = Vec::with_capacity(n * n);
        for (i, (id, vals)) in rows.iter().enumerate() {
            if *id != item_ids[i] {
                return Err(bad("row label does not match header order"));
            }
            values.extend_from_slice(vals);
        }
        Ok(DistanceMatrix {
            n,
            values,
            item_ids,
            compressor,
            self_ncd_bound,
            max_asymmetry,
            singleton_compressions: 0,
            pair_compressions: 0,
            self_pair_compressions: 0,
        })
    }
}

/// Compute the full symmetric matrix: singletons first (memoized), then all
/// distinct pairs in parallel, then the diagonal. Entry (i, j) mirrors the
/// single computed order, or the mean of both orders when requested.
pub fn pairwise_matrix(
    items: &[NcdItem],
    c: &dyn Compressor,
    opts: &PairwiseOptions,
) -> Result<DistanceMatrix, NcdError> {
    if items.len() < 2 {
        return Err(NcdError::TooFewItems(items.len()));
    }
    let n = items.len();
    for it in items {
        if it.payload.bytes.is_empty() {
            return Err(NcdError::EmptyItem(it.id.clone()));
        }
    }

    let cache = SizeCache::new();
    for it in items {
        cache.size(c, &it.payload)?;
    }
    let singleton_compressions = cache.misses();

    let mut jobs: Vec<(usize, usize)> = Vec::with_capacity(n * (n - 1) / 2 + n);
    for i in 0..n {
        for j in (i + 1)..n {
            jobs.push((i, j));
        }
    }
    if opts.diagonal {
        for i in 0..n {
            jobs.push((i, i));
        }
    }

    let run = || -> Result<Vec<((usize, usize), f64, f64)>, NcdError> {
        use rayon::prelude::*;
        jobs.par_iter()
            .map(|&(i, j)| {
                let d_ij = ncd(&items[i], &items[j], c, &cache)?;
                if opts.both_orders && i != j {
                    let d_ji = ncd(&items[j], &items[i], c, &cache)?;
                    Ok(((i, j), 0.5 * (d_ij + d_ji), (d_ij - d_ji).abs()))
                } else {
                    Ok(((i, j), d_ij, 0.0))
                }
            })
            .collect()
    };
    let results = match opts.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| NcdError::CompressorFailed {
                item: "worker pool".into(),
                detail: e.to_string(),
            })?
            .install(run),
        None => run(),
    }?;

    let mut values = vec![0.0; n * n];
    let mut self_ncd_bound = 0.0f64;
    let mut max_asymmetry = 0.0f64;
    let mut self_pair_compressions = 0u64;
    for ((i, j), d, asym) in results {
        values[i * n + j] = d;
        values[j * n + i] = d;
        if i == j {
            self_ncd_bound = self_ncd_bound.max(d);
            self_pair_compressions += 1;
        }
        max_asymmetry = max_asymmetry.max(asym);
    }
    let pair_compressions =
        cache.misses() - singleton_compressions - self_pair_compressions;

    Ok(DistanceMatrix {
        n,
        values,
        item_ids: items.iter().map(|it| it.id.clone()).collect(),
        compressor: c.name(),
        self_ncd_bound,
        max_asymmetry,
        singleton_compressions,
        pair_compressions,
        self_pair_compressions,
    })
}
