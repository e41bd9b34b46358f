//! Dense voxel volumes and their raw on-disk format.
//!
//! A [`Volume`] is a 5-D array with axes `(x, y, z, channel, time)`, flattened
//! with x fastest, then y, z, channel, time. Intensities are stored normalized
//! to `[0, 1]` regardless of the source bit depth.
//!
//! On disk a volume is a pair of files: `<name>.vol` holding the raw
//! little-endian payload in the flattening order above, and `<name>.vol.json`
//! holding the metadata sidecar (dims, element type, voxel spacing in
//! micrometers, channel names, and an optional quantization block for
//! quantized kymographs).

use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bad metadata: {source}")]
    Meta {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("dims {dims:?} need {expected} payload bytes, file holds {actual}")]
    PayloadSize {
        dims: Dims5,
        expected: u64,
        actual: u64,
    },
    #[error("dims must be non-zero on every axis, got {0:?}")]
    EmptyDims(Dims5),
    #[error("voxel spacing must be positive and finite, got {0:?}")]
    BadSpacing([f64; 3]),
    #[error("{count} channel names given for {channels} channels")]
    ChannelNames { count: usize, channels: usize },
    #[error("f32 payload element {index} is {value}, outside [0, 1]")]
    IntensityRange { value: f32, index: usize },
}

/// Storage element type of the raw payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementType {
    U8,
    U16,
    F32,
}

impl ElementType {
    pub fn bytes_per_element(self) -> usize {
        match self {
            ElementType::U8 => 1,
            ElementType::U16 => 2,
            ElementType::F32 => 4,
        }
    }

    /// Bit-depth maximum used to normalize intensities into [0, 1].
    pub fn max_value(self) -> f64 {
        match self {
            ElementType::U8 => 255.0,
            ElementType::U16 => 65535.0,
            ElementType::F32 => 1.0,
        }
    }
}

/// Extents of the five axes. Flattening puts x fastest, then y, z, channel, time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims5 {
    pub x: usize,
    pub y: usize,
    pub z: usize,
    pub c: usize,
    pub t: usize,
}

impl Dims5 {
    pub fn new(x: usize, y: usize, z: usize, c: usize, t: usize) -> Self {
        Dims5 { x, y, z, c, t }
    }

    pub fn len(self) -> usize {
        self.x * self.y * self.z * self.c * self.t
    }

    pub fn is_empty(self) -> bool {
        self.len() == 0
    }

    /// Flat index of `(x, y, z, c, t)`.
    #[inline]
    pub fn index(self, x: usize, y: usize, z: usize, c: usize, t: usize) -> usize {
        debug_assert!(x < self.x && y < self.y && z < self.z && c < self.c && t < self.t);
        x + self.x * (y + self.y * (z + self.z * (c + self.c * t)))
    }
}

/// Spatial voxel coordinate within one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoxelCoord {
    pub x: usize,
    pub y: usize,
    pub z: usize,
}

/// Cohort quantization parameters recorded next to a quantized kymograph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizationMeta {
    /// 254 strictly increasing cell boundaries spanning (mean - std, mean + std).
    /// Empty when the cohort was degenerate (zero spread).
    pub bin_edges: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    /// Number of non-zero cohort values the statistics were fit on.
    pub count: u64,
    pub degenerate: bool,
}

/// Metadata sidecar stored as `<name>.vol.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeMeta {
    pub dims: Dims5,
    pub element_type: ElementType,
    /// Micrometers per voxel along x, y, z.
    pub spacing_um: [f64; 3],
    pub channel_names: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantization: Option<QuantizationMeta>,
}

impl VolumeMeta {
    pub fn validate(&self) -> Result<(), VolumeError> {
        if self.dims.is_empty() {
            return Err(VolumeError::EmptyDims(self.dims));
        }
        if self.spacing_um.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(VolumeError::BadSpacing(self.spacing_um));
        }
        if !self.channel_names.is_empty() && self.channel_names.len() != self.dims.c {
            return Err(VolumeError::ChannelNames {
                count: self.channel_names.len(),
                channels: self.dims.c,
            });
        }
        Ok(())
    }
}

/// One spatial frame (single channel, single timepoint) in f64 for filtering.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub data: Vec<f64>,
}

impl Frame {
    pub fn zeros(nx: usize, ny: usize, nz: usize) -> Self {
        Frame {
            nx,
            ny,
            nz,
            data: vec![0.0; nx * ny * nz],
        }
    }

    pub fn is_2d(&self) -> bool {
        self.nz == 1
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        debug_assert!(x < self.nx && y < self.ny && z < self.nz);
        x + self.nx * (y + self.ny * z)
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[self.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, v: f64) {
        let i = self.index(x, y, z);
        self.data[i] = v;
    }
}

/// Dense voxel volume with intensities normalized to [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub meta: VolumeMeta,
    pub data: Vec<f32>,
}

impl Volume {
    pub fn zeros(meta: VolumeMeta) -> Result<Self, VolumeError> {
        meta.validate()?;
        let n = meta.dims.len();
        Ok(Volume {
            meta,
            data: vec![0.0; n],
        })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize, c: usize, t: usize) -> f32 {
        self.data[self.meta.dims.index(x, y, z, c, t)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, c: usize, t: usize, v: f32) {
        let i = self.meta.dims.index(x, y, z, c, t);
        self.data[i] = v;
    }

    /// Extract channel `c` at timepoint `t` as an f64 frame.
    pub fn frame(&self, c: usize, t: usize) -> Frame {
        let d = self.meta.dims;
        assert!(c < d.c && t < d.t, "frame ({c}, {t}) outside dims {d:?}");
        let mut out = Frame::zeros(d.x, d.y, d.z);
        for z in 0..d.z {
            for y in 0..d.y {
                let src = d.index(0, y, z, c, t);
                let dst = out.index(0, y, z);
                for x in 0..d.x {
                    out.data[dst + x] = self.data[src + x] as f64;
                }
            }
        }
        out
    }

    /// Write `<path>` (raw payload) and `<path>.json` (sidecar).
    pub fn save(&self, path: &Path) -> Result<(), VolumeError> {
        self.meta.validate()?;
        let et = self.meta.element_type;
        let mut bytes = Vec::with_capacity(self.data.len() * et.bytes_per_element());
        match et {
            ElementType::U8 => {
                for &v in &self.data {
                    bytes.push((f64::from(v) * 255.0).round().clamp(0.0, 255.0) as u8);
                }
            }
            ElementType::U16 => {
                for &v in &self.data {
                    let q = (f64::from(v) * 65535.0).round().clamp(0.0, 65535.0) as u16;
                    bytes.extend_from_slice(&q.to_le_bytes());
                }
            }
            ElementType::F32 => {
                for &v in &self.data {
                    bytes.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        fs::write(path, &bytes).map_err(|source| VolumeError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let sidecar = sidecar_path(path);
        let json = serde_json::to_vec_pretty(&self.meta).expect("metadata serializes");
        fs::write(&sidecar, json).map_err(|source| VolumeError::Io {
            path: sidecar,
            source,
        })?;
        Ok(())
    }

    /// Read a `<path>` / `<path>.json` pair written by [`Volume::save`].
    pub fn load(path: &Path) -> Result<Self, VolumeError> {
        let sidecar = sidecar_path(path);
        let meta_bytes = fs::read(&sidecar).map_err(|source| VolumeError::Io {
            path: sidecar.clone(),
            source,
        })?;
        let meta: VolumeMeta =
            serde_json::from_slice(&meta_bytes).map_err(|source| VolumeError::Meta {
                path: sidecar,
                source,
            })?;
        meta.validate()?;
        let payload = fs::read(path).map_err(|source| VolumeError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let n = meta.dims.len();
        let expected = (n * meta.element_type.bytes_per_element()) as u64;
        if payload.len() as u64 != expected {
            return Err(VolumeError::PayloadSize {
                dims: meta.dims,
                expected,
                actual: payload.len() as u64,
            });
        }
        let mut data = Vec::with_capacity(n);
        match meta.element_type {
            ElementType::U8 => {
                for &b in &payload {
                    data.push(f32::from(b) / 255.0);
                }
            }
            ElementType::U16 => {
                for ch in payload.chunks_exact(2) {
                    let q = u16::from_le_bytes([ch[0], ch[1]]);
                    data.push(f32::from(q) / 65535.0);
                }
            }
            ElementType::F32 => {
                for (index, ch) in payload.chunks_exact(4).enumerate() {
                    let v = f32::from_le_bytes([ch[0], ch[1], ch[2], ch[3]]);
                    if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                        return Err(VolumeError::IntensityRange { value: v, index });
                    }
                    data.push(v);
                }
            }
        }
        Ok(Volume { meta, data })
    }
}

/// Sidecar path for a payload path: `name.vol` -> `name.vol.json`.
pub fn sidecar_path(payload: &Path) -> PathBuf {
    let mut s = payload.as_os_str().to_os_string();
    s.push(".json");
    PathBuf::from(s)
}

/// Convert a physical radius in micrometers to pixels along one axis.
pub fn radius_to_pixels(radius_um: f64, spacing_um: f64) -> f64 {
    assert!(
        spacing_um.is_finite() && spacing_um > 0.0,
        "spacing must be positive, got {spacing_um}"
    );
    radius_um / spacing_um
}

/// Per-axis pixel radii for anisotropic spacing.
pub fn radius_to_pixels_axes(radius_um: f64, spacing_um: [f64; 3]) -> [f64; 3] {
    [
        radius_to_pixels(radius_um, spacing_um[0]),
        radius_to_pixels(radius_um, spacing_um[1]),
        radius_to_pixels(radius_um, spacing_um[2]),
    ]
}
