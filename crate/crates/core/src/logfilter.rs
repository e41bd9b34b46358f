//! Separable scale-normalized Laplacian-of-Gaussian filtering.
//!
//! A blob of radius `r` pixels is matched by Gaussian scale `sigma = r / sqrt(d)`
//! in `d` dimensions. The d-dimensional kernel
//!
//! ```text
//! LoG(p) = (sum_i (p_i / sigma_i)^2 - d) * G(p)
//! ```
//!
//! decomposes into a sum of separable passes, one 1-D second-derivative factor
//! per axis multiplied by plain Gaussians along the remaining axes:
//!
//! ```text
//! LoG = L(x) G(y) G(z) + L(y) G(x) G(z) + L(z) G(x) G(y)
//! ```
//!
//! Discrete taps are sampled at integer offsets over a support of
//! `ceil(4 sigma)` per axis, the Gaussian factors are normalized to sum to one
//! and the second-derivative factors to sum to zero, so the assembled kernel
//! sums to zero and a constant image yields a zero response. At image
//! boundaries the truncated window is renormalized per position to keep those
//! two properties instead of padding.
//!
//! Sign convention: a dark blob against a bright surround at the matched
//! radius gives a positive center response.

use crate::volume::Frame;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("radius {0:.3} px is below the 1 px resolution floor")]
    ResolutionTooCoarse(f64),
    #[error("radius {0} is not a positive finite number")]
    BadRadius(f64),
    #[error("kernel dimensionality must be 2 or 3, got {0}")]
    BadDim(usize),
    #[error("{dim}-D kernel applied to frame with nz = {nz}")]
    DimMismatch { dim: usize, nz: usize },
    #[error("at least one radius is required")]
    NoRadii,
}

/// Separable LoG kernel taps for one blob radius.
#[derive(Debug, Clone)]
pub struct LogKernel {
    pub dim: usize,
    /// Blob radius in pixels per axis; `radius_px[2]` is unused when `dim == 2`.
    pub radius_px: [f64; 3],
    pub sigma: [f64; 3],
    support: [usize; 3],
    gauss: [Vec<f64>; 3],
    deriv: [Vec<f64>; 3],
}

impl LogKernel {
    /// Isotropic kernel: the same pixel radius along every axis.
    pub fn new(radius_px: f64, dim: usize) -> Result<Self, FilterError> {
        Self::anisotropic([radius_px; 3], dim)
    }

    /// Per-axis pixel radii, for anisotropic voxel spacing.
    pub fn anisotropic(radius_px: [f64; 3], dim: usize) -> Result<Self, FilterError> {
        if dim != 2 && dim != 3 {
            return Err(FilterError::BadDim(dim));
        }
        let mut sigma = [0.0; 3];
        let mut support = [0usize; 3];
        let mut gauss: [Vec<f64>; 3] = Default::default();
        let mut deriv: [Vec<f64>; 3] = Default::default();
        for a in 0..dim {
            let r = radius_px[a];
            if !r.is_finite() || r <= 0.0 {
                return Err(FilterError::BadRadius(r));
            }
            if r < 1.0 {
                return Err(FilterError::ResolutionTooCoarse(r));
            }
            let s = r / (dim as f64).sqrt();
            sigma[a] = s;
            let half = (4.0 * s).ceil() as usize;
            support[a] = half;
            let mut g = Vec::with_capacity(2 * half + 1);
            for i in -(half as isize)..=(half as isize) {
                let u = i as f64 / s;
                g.push((-0.5 * u * u).exp());
            }
            let sum: f64 = g.iter().sum();
            for v in &mut g {
                *v /= sum;
            }
            let mut l: Vec<f64> = (-(half as isize)..=(half as isize))
                .zip(g.iter())
                .map(|(i, gv)| {
                    let u = i as f64 / s;
                    (u * u - 1.0) * gv
                })
                .collect();
            let mean = l.iter().sum::<f64>() / l.len() as f64;
            for v in &mut l {
                *v -= mean;
            }
            gauss[a] = g;
            deriv[a] = l;
        }
        Ok(LogKernel {
            dim,
            radius_px,
            sigma,
            support,
            gauss,
            deriv,
        })
    }

    pub fn support(&self) -> [usize; 3] {
        self.support
    }

    pub fn gauss_taps(&self, axis: usize) -> &[f64] {
        &self.gauss[axis]
    }

    pub fn deriv_taps(&self, axis: usize) -> &[f64] {
        &self.deriv[axis]
    }

    /// Apply the kernel to a frame; the response has the frame's dims.
    pub fn filter(&self, frame: &Frame) -> Result<Frame, FilterError> {
        let frame_dim = if frame.nz == 1 { 2 } else { 3 };
        if frame_dim != self.dim {
            return Err(FilterError::DimMismatch {
                dim: self.dim,
                nz: frame.nz,
            });
        }
        if self.dim == 2 {
            let gx = pass(frame, 0, &self.gauss[0], false);
            let gy = pass(frame, 1, &self.gauss[1], false);
            let mut r = pass(&gy, 0, &self.deriv[0], true);
            let ry = pass(&gx, 1, &self.deriv[1], true);
            for (a, b) in r.data.iter_mut().zip(ry.data.iter()) {
                *a += b;
            }
            Ok(r)
        } else {
            let gz = pass(frame, 2, &self.gauss[2], false);
            let gyz = pass(&gz, 1, &self.gauss[1], false);
            let mut r = pass(&gyz, 0, &self.deriv[0], true);
            let gxz = pass(&gz, 0, &self.gauss[0], false);
            let ry = pass(&gxz, 1, &self.deriv[1], true);
            let gy = pass(frame, 1, &self.gauss[1], false);
            let gxy = pass(&gy, 0, &self.gauss[0], false);
            let rz = pass(&gxy, 2, &self.deriv[2], true);
            for ((a, b), c) in r.data.iter_mut().zip(ry.data.iter()).zip(rz.data.iter()) {
                *a += b + c;
            }
            Ok(r)
        }
    }

    /// Peak response on the matched phantom: a zero-intensity ellipsoid with
    /// the kernel's own radii against a unit background. Used to normalize
    /// responses into [-1, 1].
    ///
    /// By the zero-sum property this equals minus the sum of the assembled
    /// taps inside the ellipsoid, so no convolution is needed.
    pub fn reference_response(&self) -> f64 {
        let sx = self.support[0] as isize;
        let sy = self.support[1] as isize;
        let (rx, ry) = (self.radius_px[0], self.radius_px[1]);
        let mut inside_sum = 0.0;
        if self.dim == 2 {
            for iy in -sy..=sy {
                for ix in -sx..=sx {
                    let e = (ix as f64 / rx).powi(2) + (iy as f64 / ry).powi(2);
                    if e <= 1.0 {
                        inside_sum += self.assembled_tap_2d(ix, iy);
                    }
                }
            }
        } else {
            let sz = self.support[2] as isize;
            let rz = self.radius_px[2];
            for iz in -sz..=sz {
                for iy in -sy..=sy {
                    for ix in -sx..=sx {
                        let e = (ix as f64 / rx).powi(2)
                            + (iy as f64 / ry).powi(2)
                            + (iz as f64 / rz).powi(2);
                        if e <= 1.0 {
                            inside_sum += self.assembled_tap_3d(ix, iy, iz);
                        }
                    }
                }
            }
        }
        -inside_sum
    }

    fn tap(&self, axis: usize, offset: isize) -> (f64, f64) {
        let half = self.support[axis] as isize;
        if offset < -half || offset > half {
            return (0.0, 0.0);
        }
        let i = (offset + half) as usize;
        (self.gauss[axis][i], self.deriv[axis][i])
    }

    /// Single assembled 2-D tap at integer offset, interior (untruncated) case.
    pub fn assembled_tap_2d(&self, ix: isize, iy: isize) -> f64 {
        let (gx, lx) = self.tap(0, ix);
        let (gy, ly) = self.tap(1, iy);
        lx * gy + ly * gx
    }

    /// Single assembled 3-D tap at integer offset, interior (untruncated) case.
    pub fn assembled_tap_3d(&self, ix: isize, iy: isize, iz: isize) -> f64 {
        let (gx, lx) = self.tap(0, ix);
        let (gy, ly) = self.tap(1, iy);
        let (gz, lz) = self.tap(2, iz);
        lx * gy * gz + ly * gx * gz + lz * gx * gy
    }
}

/// One separable pass along `axis`. Near the boundary the truncated window is
/// renormalized per position: Gaussian taps rescale to sum one, derivative
/// taps shift to sum zero.
fn pass(src: &Frame, axis: usize, taps: &[f64], zero_sum: bool) -> Frame {
    let half = (taps.len() - 1) / 2;
    let n = match axis {
        0 => src.nx,
        1 => src.ny,
        _ => src.nz,
    };
    let stride = match axis {
        0 => 1,
        1 => src.nx,
        _ => src.nx * src.ny,
    };
    let (ou, ov, su, sv) = match axis {
        0 => (src.ny, src.nz, src.nx, src.nx * src.ny),
        1 => (src.nx, src.nz, 1, src.nx * src.ny),
        _ => (src.nx, src.ny, 1, src.nx),
    };
    let mut out = Frame::zeros(src.nx, src.ny, src.nz);
    for v in 0..ov {
        for u in 0..ou {
            let base = u * su + v * sv;
            for p in 0..n {
                let lo = -(p.min(half) as isize);
                let hi = (n - 1 - p).min(half) as isize;
                let full = lo == -(half as isize) && hi == half as isize;
                let mut acc = 0.0;
                if full {
                    let start = base + (p - half) * stride;
                    for (k, tp) in taps.iter().enumerate() {
                        acc += tp * src.data[start + k * stride];
                    }
                } else if zero_sum {
                    let count = (hi - lo + 1) as f64;
                    let mut wsum = 0.0;
                    for j in lo..=hi {
                        wsum += taps[(j + half as isize) as usize];
                    }
                    let shift = wsum / count;
                    for j in lo..=hi {
                        let t = taps[(j + half as isize) as usize] - shift;
                        acc += t * src.data[(base as isize + (p as isize + j) * stride as isize) as usize];
                    }
                } else {
                    let mut wsum = 0.0;
                    for j in lo..=hi {
                        wsum += taps[(j + half as isize) as usize];
                    }
                    for j in lo..=hi {
                        let t = taps[(j + half as isize) as usize] / wsum;
                        acc += t * src.data[(base as isize + (p as isize + j) * stride as isize) as usize];
                    }
                }
                out.data[base + p * stride] = acc;
            }
        }
    }
    out
}

/// Signed multi-radius response field: per voxel, the response of maximal
/// absolute value across the radius bank, plus which radius won.
#[derive(Debug, Clone)]
pub struct ResponseField {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub response: Vec<f64>,
    /// Index into `radii_px` of the winning kernel per voxel.
    pub winner: Vec<u16>,
    pub radii_px: Vec<[f64; 3]>,
    /// Matched-phantom peak response per radius, for normalization.
    pub reference: Vec<f64>,
}

impl ResponseField {
    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.nx * (y + self.ny * z)
    }

    /// Winning radius (x-axis pixel radius) at a voxel.
    pub fn winning_radius(&self, i: usize) -> f64 {
        self.radii_px[self.winner[i] as usize][0]
    }

    /// Response at a voxel divided by the winning radius' reference response.
    pub fn normalized(&self, i: usize) -> f64 {
        self.response[i] / self.reference[self.winner[i] as usize]
    }
}

/// Filter with every kernel in the bank and keep, per voxel, the signed
/// response of maximal magnitude. Ties keep the smaller radius index.
pub fn max_response(frame: &Frame, kernels: &[LogKernel]) -> Result<ResponseField, FilterError> {
    if kernels.is_empty() {
        return Err(FilterError::NoRadii);
    }
    let mut field = ResponseField {
        nx: frame.nx,
        ny: frame.ny,
        nz: frame.nz,
        response: vec![0.0; frame.data.len()],
        winner: vec![0; frame.data.len()],
        radii_px: kernels.iter().map(|k| k.radius_px).collect(),
        reference: kernels.iter().map(|k| k.reference_response()).collect(),
    };
    for (ki, kernel) in kernels.iter().enumerate() {
        let resp = kernel.filter(frame)?;
        if ki == 0 {
            field.response = resp.data;
            continue;
        }
        for (i, v) in resp.data.iter().enumerate() {
            if v.abs() > field.response[i].abs() {
                field.response[i] = *v;
                field.winner[i] = ki as u16;
            }
        }
    }
    Ok(field)
}
