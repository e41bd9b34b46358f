//! Nuclear centroid detection and frame-to-frame track linking.
//!
//! Detection runs the multi-radius LoG bank on the nuclear-marker channel and
//! keeps local maxima of the signed (reference-normalized) response above a
//! threshold, then suppresses non-maxima within the smallest configured
//! radius. The sign convention makes a dark nucleus on a bright surround score
//! positive; invert the frame first if the nuclear marker is bright. Detecting
//! on the signed field rather than its magnitude keeps the negative side lobe
//! that rings every blob from spawning spurious centroids. Results are ordered
//! by (t, z, y, x) so downstream stages are reproducible.
//!
//! Linking is greedy mutual-nearest-neighbor between consecutive frames under
//! a distance gate: candidate pairs are taken in order of increasing distance
//! (ties by detection index), each accepted pair removing its endpoints.
//! Unmatched detections open new tracks. Per-centroid speed is the mean of
//! the adjacent frame displacements (one-sided at track ends), normalized by
//! the gate and clipped to [0, 1].

use crate::logfilter::{max_response, FilterError, LogKernel};
use crate::ssf::SsfValue;
use crate::volume::{radius_to_pixels_axes, Frame, Volume, VoxelCoord};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrackError {
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error("channel {channel} outside volume with {channels} channels")]
    BadChannel { channel: usize, channels: usize },
    #[error("detection threshold must be positive and finite, got {0}")]
    BadThreshold(f64),
    #[error("linking gate must be positive and finite, got {0}")]
    BadGate(f64),
    #[error("track {0} has a single point; velocity is undefined")]
    SingletonTrack(usize),
}

/// Detection parameters. Radii are physical; conversion to pixels uses the
/// volume's voxel spacing per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectConfig {
    pub radii_um: Vec<f64>,
    /// Minimum signed response at a kept local maximum.
    pub threshold: f64,
    /// Divide responses by the matched-phantom reference before thresholding.
    pub normalize: bool,
    /// Suppression distance in pixels; the smallest radius when unset.
    pub min_separation_px: Option<f64>,
}

impl Default for DetectConfig {
    fn default() -> Self {
        DetectConfig {
            radii_um: default_radii_um(),
            threshold: 0.01,
            normalize: true,
            min_separation_px: None,
        }
    }
}

/// Default radius bank: 4 to 6 micrometers in half-micrometer steps.
pub fn default_radii_um() -> Vec<f64> {
    vec![4.0, 4.5, 5.0, 5.5, 6.0]
}

/// One detected nuclear centroid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Centroid {
    pub t: usize,
    pub coord: VoxelCoord,
    /// Winning blob radius in x-axis pixels.
    pub radius_px: f64,
    /// Signed score at the centroid on the detection channel.
    pub ssf: SsfValue,
    /// Index within this centroid's frame after (z, y, x) ordering.
    pub det_index: usize,
}

/// Detect centroids on a single frame (t is recorded into the results).
pub fn detect_frame(
    frame: &Frame,
    t: usize,
    spacing_um: [f64; 3],
    cfg: &DetectConfig,
) -> Result<Vec<Centroid>, TrackError> {
    if !cfg.threshold.is_finite() || cfg.threshold <= 0.0 {
        return Err(TrackError::BadThreshold(cfg.threshold));
    }
    if cfg.radii_um.is_empty() {
        return Err(TrackError::Filter(FilterError::NoRadii));
    }
    let dim = if frame.is_2d() { 2 } else { 3 };
    let mut kernels = Vec::with_capacity(cfg.radii_um.len());
    for &r_um in &cfg.radii_um {
        let r_px = radius_to_pixels_axes(r_um, spacing_um);
        kernels.push(LogKernel::anisotropic(r_px, dim)?);
    }
    let field = max_response(frame, &kernels)?;

    let score = |i: usize| -> f64 {
        if cfg.normalize {
            field.normalized(i)
        } else {
            field.response[i]
        }
    };

    // local maxima of the signed score above threshold
    let (nx, ny, nz) = (frame.nx, frame.ny, frame.nz);
    let mut candidates: Vec<(usize, usize, usize)> = Vec::new();
    for z in 0..nz {
        for y in 0..ny {
            'voxel: for x in 0..nx {
                let s = score(field.index(x, y, z));
                if s <= cfg.threshold {
                    continue;
                }
                for dz in -1i64..=1 {
                    for dy in -1i64..=1 {
                        for dx in -1i64..=1 {
                            if dx == 0 && dy == 0 && dz == 0 {
                                continue;
                            }
                            let (ux, uy, uz) = (
                                x as i64 + dx,
                                y as i64 + dy,
                                z as i64 + dz,
                            );
                            if ux < 0
                                || uy < 0
                                || uz < 0
                                || ux >= nx as i64
                                || uy >= ny as i64
                                || uz >= nz as i64
                            {
                                continue;
                            }
                            let u = field.index(ux as usize, uy as usize, uz as usize);
                            if score(u) > s {
                                continue 'voxel;
                            }
                        }
                    }
                }
                candidates.push((x, y, z));
            }
        }
    }

    // strongest first; ties resolved by coordinate order
    candidates.sort_by(|a, b| {
        let sa = score(field.index(a.0, a.1, a.2));
        let sb = score(field.index(b.0, b.1, b.2));
        sb.total_cmp(&sa).then_with(|| (a.2, a.1, a.0).cmp(&(b.2, b.1, b.0)))
    });

    let min_sep = cfg.min_separation_px.unwrap_or_else(|| {
        field
            .radii_px
            .iter()
            .map(|r| r[0])
            .fold(f64::INFINITY, f64::min)
    });
    let min_sep2 = min_sep * min_sep;
    let mut kept: Vec<(usize, usize, usize)> = Vec::new();
    'cand: for c in candidates {
        for k in &kept {
            let d2 = (c.0 as f64 - k.0 as f64).powi(2)
                + (c.1 as f64 - k.1 as f64).powi(2)
                + (c.2 as f64 - k.2 as f64).powi(2);
            if d2 < min_sep2 {
                continue 'cand;
            }
        }
        kept.push(c);
    }

    kept.sort_by_key(|&(x, y, z)| (z, y, x));
    Ok(kept
        .into_iter()
        .enumerate()
        .map(|(det_index, (x, y, z))| {
            let i = field.index(x, y, z);
            Centroid {
                t,
                coord: VoxelCoord { x, y, z },
                radius_px: field.winning_radius(i),
                ssf: SsfValue {
                    value: score(i),
                    radius_px: field.winning_radius(i),
                    normalized: cfg.normalize,
                },
                det_index,
            }
        })
        .collect())
}

/// Detect on every timepoint of one channel of a volume.
pub fn detect_volume(
    vol: &Volume,
    channel: usize,
    cfg: &DetectConfig,
) -> Result<Vec<Centroid>, TrackError> {
    let dims = vol.meta.dims;
    if channel >= dims.c {
        return Err(TrackError::BadChannel {
            channel,
            channels: dims.c,
        });
    }
    let mut out = Vec::new();
    for t in 0..dims.t {
        let frame = vol.frame(channel, t);
        out.extend(detect_frame(&frame, t, vol.meta.spacing_um, cfg)?);
    }
    Ok(out)
}

/// A linked trajectory of centroids at strictly consecutive timepoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub id: usize,
    pub points: Vec<Centroid>,
}

fn dist(a: &Centroid, b: &Centroid) -> f64 {
    ((a.coord.x as f64 - b.coord.x as f64).powi(2)
        + (a.coord.y as f64 - b.coord.y as f64).powi(2)
        + (a.coord.z as f64 - b.coord.z as f64).powi(2))
    .sqrt()
}

/// Greedy mutual-nearest-neighbor linking under a pixel gate.
pub fn link_tracks(centroids: &[Centroid], gate_px: f64) -> Result<Vec<Track>, TrackError> {
    if !gate_px.is_finite() || gate_px <= 0.0 {
        return Err(TrackError::BadGate(gate_px));
    }
    let mut tracks: Vec<Track> = Vec::new();
    if centroids.is_empty() {
        return Ok(tracks);
    }
    let t_max = centroids.iter().map(|c| c.t).max().unwrap();
    let mut frames: Vec<Vec<Centroid>> = vec![Vec::new(); t_max + 1];
    for c in centroids {
        frames[c.t].push(*c);
    }
    for f in &mut frames {
        f.sort_by_key(|c| c.det_index);
    }

    // open[j] = index into tracks of the track whose head is frames[t][j]
    let mut open: Vec<usize> = frames[0]
        .iter()
        .map(|c| {
            tracks.push(Track {
                id: tracks.len(),
                points: vec![*c],
            });
            tracks.len() - 1
        })
        .collect();

    for t in 1..frames.len() {
        let (prev, next) = (frames[t - 1].clone(), frames[t].clone());
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (i, a) in prev.iter().enumerate() {
            for (j, b) in next.iter().enumerate() {
                let d = dist(a, b);
                if d <= gate_px {
                    pairs.push((d, i, j));
                }
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| (a.1, a.2).cmp(&(b.1, b.2))));
        let mut i_used = vec![false; prev.len()];
        let mut j_used = vec![false; next.len()];
        let mut next_open = vec![usize::MAX; next.len()];
        for (_, i, j) in pairs {
            if i_used[i] || j_used[j] {
                continue;
            }
            i_used[i] = true;
            j_used[j] = true;
            let track_idx = open[i];
            tracks[track_idx].points.push(next[j]);
            next_open[j] = track_idx;
        }
        for (j, slot) in next_open.iter_mut().enumerate() {
            if *slot == usize::MAX {
                tracks.push(Track {
                    id: tracks.len(),
                    points: vec![next[j]],
                });
                *slot = tracks.len() - 1;
            }
        }
        open = next_open;
    }
    Ok(tracks)
}

/// Per-point speed normalized by the gate and clipped to [0, 1].
///
/// Interior points average the displacements into and out of the point;
/// endpoints use the single available displacement.
pub fn track_velocities(track: &Track, gate_px: f64) -> Result<Vec<f64>, TrackError> {
    if !gate_px.is_finite() || gate_px <= 0.0 {
        return Err(TrackError::BadGate(gate_px));
    }
    let n = track.points.len();
    if n < 2 {
        return Err(TrackError::SingletonTrack(track.id));
    }
    let steps: Vec<f64> = track
        .points
        .windows(2)
        .map(|w| dist(&w[0], &w[1]))
        .collect();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let v = if k == 0 {
            steps[0]
        } else if k == n - 1 {
            steps[n - 2]
        } else {
            0.5 * (steps[k - 1] + steps[k])
        };
        out.push((v / gate_px).clamp(0.0, 1.0));
    }
    Ok(out)
}
