//! Cytoplasm-versus-nucleus signaling score and its calibration phantom.
//!
//! The score of a cell is the difference between its local cytoplasmic and
//! nuclear intensities, `H = c - n` with both in [0, 1]. Reporters that
//! translocate out of the nucleus on activation make the score positive when
//! the cell is active. In practice the score is read out as the response of
//! the matched scale-normalized LoG filter at the cell centroid, optionally
//! divided by the filter's matched-phantom peak so values land in [-1, 1].
//!
//! The phantom is a synthetic cell used to calibrate that readout: a dark
//! nuclear disc against a bright surround, with Bernoulli salt-and-pepper
//! noise standing in for partial activation. At activation `a` a fraction
//! `(1 - a) / 2` of nuclear pixels flip to white and the same fraction of
//! surround pixels flip to black, so the expected score equals `a` exactly
//! and a sweep over activation levels should recover a unit slope. The
//! classic cytonuclear intensity ratio `c / n` is computed from the same
//! annuli as a deliberately nonlinear control.

use crate::logfilter::{FilterError, LogKernel, ResponseField};
use crate::rngutil::derive_seed;
use crate::volume::{Frame, VoxelCoord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SsfError {
    #[error("intensity {0} outside [0, 1]")]
    Domain(f64),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error("phantom spec invalid: {0}")]
    BadPhantom(String),
    #[error("coordinate ({0}, {1}, {2}) outside the response field")]
    OutOfField(usize, usize, usize),
    #[error("activation sweep needs at least one level and one trial")]
    EmptySweep,
}

fn check_unit(v: f64) -> Result<f64, SsfError> {
    if !v.is_finite() || !(0.0..=1.0).contains(&v) {
        return Err(SsfError::Domain(v));
    }
    Ok(v)
}

/// Signed scalar score: cytoplasmic minus nuclear intensity.
pub fn ssf_scalar(c: f64, n: f64) -> Result<f64, SsfError> {
    Ok(check_unit(c)? - check_unit(n)?)
}

/// Two-component form: activation magnitude in the first slot when the
/// cytoplasm is brighter, deactivation magnitude in the second when the
/// nucleus is brighter, zero vector at balance.
pub fn ssf_components(c: f64, n: f64) -> Result<(f64, f64), SsfError> {
    let h = ssf_scalar(c, n)?;
    if h > 0.0 {
        Ok((h, 0.0))
    } else if h < 0.0 {
        Ok((0.0, -h))
    } else {
        Ok((0.0, 0.0))
    }
}

/// Score sampled at a centroid of a multi-radius response field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsfValue {
    pub value: f64,
    /// Winning blob radius (x-axis pixels) at the sampled voxel.
    pub radius_px: f64,
    /// Whether `value` was divided by the matched-phantom reference response.
    pub normalized: bool,
}

/// Read the signed score at `coord` from a response field, normalizing by the
/// winning radius' reference response when requested.
pub fn ssf_at_centroid(
    field: &ResponseField,
    coord: VoxelCoord,
    normalized: bool,
) -> Result<SsfValue, SsfError> {
    if coord.x >= field.nx || coord.y >= field.ny || coord.z >= field.nz {
        return Err(SsfError::OutOfField(coord.x, coord.y, coord.z));
    }
    let i = field.index(coord.x, coord.y, coord.z);
    let value = if normalized {
        field.normalized(i)
    } else {
        field.response[i]
    };
    Ok(SsfValue {
        value,
        radius_px: field.winning_radius(i),
        normalized,
    })
}

/// Nuclear intensity floor for the cytonuclear ratio, one 16-bit level.
pub const NUCLEAR_FLOOR: f64 = 1.0 / 65535.0;

/// Synthetic calibration cell: dark nuclear disc on a bright surround.
///
/// The three radii mirror the usual measurement overlay: nuclear intensity is
/// averaged between `inner_radius_px` and `nucleus_radius_px`, cytoplasmic
/// intensity between `nucleus_radius_px` and `outer_radius_px`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub nx: usize,
    pub ny: usize,
    pub nucleus_radius_px: f64,
    pub inner_radius_px: f64,
    pub outer_radius_px: f64,
    /// Ground-truth activation in [0, 1].
    pub activation: f64,
    /// Shot-noise fraction; the construction keeps `activation = 1 - noise_fraction`.
    pub noise_fraction: f64,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            nx: 64,
            ny: 64,
            nucleus_radius_px: 12.0,
            inner_radius_px: 6.0,
            outer_radius_px: 20.0,
            activation: 1.0,
            noise_fraction: 0.0,
            seed: 0,
        }
    }
}

impl PhantomSpec {
    /// Phantom at a given activation level: noise fraction is `1 - activation`.
    pub fn with_activation(activation: f64, seed: u64) -> Self {
        PhantomSpec {
            activation,
            noise_fraction: 1.0 - activation,
            seed,
            ..PhantomSpec::default()
        }
    }

    pub fn validate(&self) -> Result<(), SsfError> {
        let err = |m: String| Err(SsfError::BadPhantom(m));
        if self.nx < 8 || self.ny < 8 {
            return err(format!("frame {}x{} too small", self.nx, self.ny));
        }
        if !(0.0..=1.0).contains(&self.activation) {
            return err(format!("activation {} outside [0, 1]", self.activation));
        }
        if !(0.0..=1.0).contains(&self.noise_fraction) {
            return err(format!("noise fraction {} outside [0, 1]", self.noise_fraction));
        }
        if !(self.inner_radius_px > 0.0
            && self.inner_radius_px < self.nucleus_radius_px
            && self.nucleus_radius_px < self.outer_radius_px)
        {
            return err(format!(
                "radii must satisfy 0 < inner {} < nucleus {} < outer {}",
                self.inner_radius_px, self.nucleus_radius_px, self.outer_radius_px
            ));
        }
        let half = (self.nx.min(self.ny) / 2) as f64;
        if self.outer_radius_px > half {
            return err(format!(
                "outer radius {} exceeds half frame {half}",
                self.outer_radius_px
            ));
        }
        Ok(())
    }

    /// Center of the disc, an integer voxel so the readout lands on it.
    pub fn center(&self) -> (usize, usize) {
        (self.nx / 2, self.ny / 2)
    }
}

/// Render the phantom frame with Bernoulli salt-and-pepper noise.
pub fn make_phantom(spec: &PhantomSpec) -> Result<Frame, SsfError> {
    spec.validate()?;
    let (cx, cy) = spec.center();
    let r2 = spec.nucleus_radius_px * spec.nucleus_radius_px;
    let p = spec.noise_fraction / 2.0;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[spec.nx as u64, spec.ny as u64]));
    let mut f = Frame::zeros(spec.nx, spec.ny, 1);
    for y in 0..spec.ny {
        for x in 0..spec.nx {
            let d2 = (x as f64 - cx as f64).powi(2) + (y as f64 - cy as f64).powi(2);
            let nuclear = d2 <= r2;
            let flip = rng.random::<f64>() < p;
            // nuclear pixels are dark unless flipped white; surround is the mirror
            let v = if nuclear ^ flip { 0.0 } else { 1.0 };
            f.set(x, y, 0, v);
        }
    }
    Ok(f)
}

/// Annulus means and the floored cytonuclear ratio of a phantom frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CnMeasure {
    pub cytoplasm: f64,
    pub nucleus: f64,
    pub ratio: f64,
}

pub fn cytonuclear_ratio(frame: &Frame, spec: &PhantomSpec) -> Result<CnMeasure, SsfError> {
    spec.validate()?;
    let (cx, cy) = spec.center();
    let (mut nsum, mut ncount) = (0.0, 0u64);
    let (mut csum, mut ccount) = (0.0, 0u64);
    let (ri2, rn2, ro2) = (
        spec.inner_radius_px * spec.inner_radius_px,
        spec.nucleus_radius_px * spec.nucleus_radius_px,
        spec.outer_radius_px * spec.outer_radius_px,
    );
    for y in 0..spec.ny {
        for x in 0..spec.nx {
            let d2 = (x as f64 - cx as f64).powi(2) + (y as f64 - cy as f64).powi(2);
            if d2 > ri2 && d2 <= rn2 {
                nsum += frame.at(x, y, 0);
                ncount += 1;
            } else if d2 > rn2 && d2 <= ro2 {
                csum += frame.at(x, y, 0);
                ccount += 1;
            }
        }
    }
    let nucleus = nsum / ncount.max(1) as f64;
    let cytoplasm = csum / ccount.max(1) as f64;
    Ok(CnMeasure {
        cytoplasm,
        nucleus,
        ratio: cytoplasm / nucleus.max(NUCLEAR_FLOOR),
    })
}

/// Normalized LoG score of the phantom at its center, using the kernel
/// matched to the nuclear radius.
pub fn measure_phantom_ssf(frame: &Frame, spec: &PhantomSpec) -> Result<f64, SsfError> {
    let kernel = LogKernel::new(spec.nucleus_radius_px, 2)?;
    let resp = kernel.filter(frame)?;
    let (cx, cy) = spec.center();
    Ok(resp.at(cx, cy, 0) / kernel.reference_response())
}

/// One activation level of a sweep, averaged over trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub activation: f64,
    pub ssf_mean: f64,
    pub ssf_stderr: f64,
    pub cn_ratio_mean: f64,
    pub cn_ratio_stderr: f64,
}

/// Sweep the phantom over activation levels, `trials` fresh noise draws each.
pub fn activation_sweep(
    levels: &[f64],
    trials: u32,
    seed: u64,
) -> Result<Vec<SweepRow>, SsfError> {
    if levels.is_empty() || trials == 0 {
        return Err(SsfError::EmptySweep);
    }
    let mut rows = Vec::with_capacity(levels.len());
    for (li, &activation) in levels.iter().enumerate() {
        let mut ssf = Vec::with_capacity(trials as usize);
        let mut cn = Vec::with_capacity(trials as usize);
        for trial in 0..trials {
            let spec = PhantomSpec::with_activation(
                activation,
                derive_seed(seed, &[li as u64, u64::from(trial)]),
            );
            let frame = make_phantom(&spec)?;
            ssf.push(measure_phantom_ssf(&frame, &spec)?);
            cn.push(cytonuclear_ratio(&frame, &spec)?.ratio);
        }
        let (ssf_mean, ssf_stderr) = mean_stderr(&ssf);
        let (cn_ratio_mean, cn_ratio_stderr) = mean_stderr(&cn);
        rows.push(SweepRow {
            activation,
            ssf_mean,
            ssf_stderr,
            cn_ratio_mean,
            cn_ratio_stderr,
        });
    }
    Ok(rows)
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logfilter::max_response;

    #[test]
    fn scalar_score_is_signed_difference() {
        assert_eq!(ssf_scalar(0.8, 0.3).unwrap(), 0.5);
        assert_eq!(ssf_scalar(0.2, 0.9).unwrap(), -0.7);
        assert!(ssf_scalar(1.2, 0.5).is_err());
        assert!(ssf_scalar(0.5, -0.1).is_err());
        assert!(ssf_scalar(f64::NAN, 0.1).is_err());
    }

    #[test]
    fn component_form_separates_the_sign() {
        assert_eq!(ssf_components(0.9, 0.2).unwrap(), (0.7, 0.0));
        assert_eq!(ssf_components(0.2, 0.9).unwrap(), (0.0, 0.7));
        assert_eq!(ssf_components(0.4, 0.4).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn clean_phantom_is_a_dark_disc_on_bright_surround() {
        let spec = PhantomSpec::with_activation(1.0, 3);
        let f = make_phantom(&spec).unwrap();
        let (cx, cy) = spec.center();
        assert_eq!(f.at(cx, cy, 0), 0.0);
        assert_eq!(f.at(cx + 13, cy, 0), 1.0);
        assert_eq!(f.at(0, 0, 0), 1.0);
    }

    #[test]
    fn phantom_is_deterministic_per_seed() {
        let a = make_phantom(&PhantomSpec::with_activation(0.5, 11)).unwrap();
        let b = make_phantom(&PhantomSpec::with_activation(0.5, 11)).unwrap();
        let c = make_phantom(&PhantomSpec::with_activation(0.5, 12)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn noise_flips_the_expected_fraction() {
        let spec = PhantomSpec::with_activation(0.6, 41); // 40% noise, 20% per compartment
        let f = make_phantom(&spec).unwrap();
        let (cx, cy) = spec.center();
        let r2 = spec.nucleus_radius_px * spec.nucleus_radius_px;
        let (mut nwhite, mut ntotal, mut cblack, mut ctotal) = (0.0, 0.0, 0.0, 0.0);
        for y in 0..spec.ny {
            for x in 0..spec.nx {
                let d2 = (x as f64 - cx as f64).powi(2) + (y as f64 - cy as f64).powi(2);
                if d2 <= r2 {
                    ntotal += 1.0;
                    nwhite += f.at(x, y, 0);
                } else {
                    ctotal += 1.0;
                    cblack += 1.0 - f.at(x, y, 0);
                }
            }
        }
        assert!((nwhite / ntotal - 0.2).abs() < 0.06, "nuclear white fraction");
        assert!((cblack / ctotal - 0.2).abs() < 0.03, "surround black fraction");
    }

    #[test]
    fn fully_activated_phantom_scores_one() {
        let spec = PhantomSpec::with_activation(1.0, 0);
        let f = make_phantom(&spec).unwrap();
        let h = measure_phantom_ssf(&f, &spec).unwrap();
        assert!((h - 1.0).abs() < 0.05, "measured {h}");
    }

    #[test]
    fn zero_activation_phantom_scores_near_zero() {
        let mut vals = Vec::new();
        for seed in 0..10 {
            let spec = PhantomSpec::with_activation(0.0, seed);
            let f = make_phantom(&spec).unwrap();
            vals.push(measure_phantom_ssf(&f, &spec).unwrap());
        }
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        assert!(mean.abs() < 0.05, "mean score at zero activation {mean}");
    }

    #[test]
    fn expected_score_tracks_activation() {
        for (seed, a) in [(5u64, 0.3), (6, 0.7)] {
            let mut vals = Vec::new();
            for trial in 0..20 {
                let spec = PhantomSpec::with_activation(a, derive_seed(seed, &[trial]));
                let f = make_phantom(&spec).unwrap();
                vals.push(measure_phantom_ssf(&f, &spec).unwrap());
            }
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            assert!((mean - a).abs() < 0.05, "activation {a}: mean {mean}");
        }
    }

    #[test]
    fn cytonuclear_ratio_explodes_on_the_clean_phantom() {
        let spec = PhantomSpec::with_activation(1.0, 0);
        let f = make_phantom(&spec).unwrap();
        let m = cytonuclear_ratio(&f, &spec).unwrap();
        assert_eq!(m.nucleus, 0.0);
        assert_eq!(m.cytoplasm, 1.0);
        assert_eq!(m.ratio, 65535.0, "floored nucleus pins the ratio at the cap");
    }

    #[test]
    fn cytonuclear_ratio_is_balanced_at_zero_activation() {
        let spec = PhantomSpec::with_activation(0.0, 9);
        let f = make_phantom(&spec).unwrap();
        let m = cytonuclear_ratio(&f, &spec).unwrap();
        assert!((m.ratio - 1.0).abs() < 0.2, "ratio {}", m.ratio);
    }

    #[test]
    fn sweep_is_deterministic_and_shaped() {
        let rows = activation_sweep(&[0.0, 0.5, 1.0], 5, 17).unwrap();
        let again = activation_sweep(&[0.0, 0.5, 1.0], 5, 17).unwrap();
        assert_eq!(rows, again);
        assert_eq!(rows.len(), 3);
        assert!(rows[2].ssf_mean > rows[0].ssf_mean);
        assert!(rows[1].ssf_stderr > 0.0);
        assert!(activation_sweep(&[], 5, 0).is_err());
        assert!(activation_sweep(&[0.5], 0, 0).is_err());
    }

    #[test]
    fn centroid_readout_picks_normalized_or_raw() {
        let spec = PhantomSpec::with_activation(1.0, 0);
        let f = make_phantom(&spec).unwrap();
        let kernels = vec![
            LogKernel::new(10.0, 2).unwrap(),
            LogKernel::new(12.0, 2).unwrap(),
        ];
        let field = max_response(&f, &kernels).unwrap();
        let (cx, cy) = spec.center();
        let coord = VoxelCoord { x: cx, y: cy, z: 0 };
        let norm = ssf_at_centroid(&field, coord, true).unwrap();
        let raw = ssf_at_centroid(&field, coord, false).unwrap();
        assert!(norm.normalized && !raw.normalized);
        assert_eq!(norm.radius_px, raw.radius_px);
        assert!((norm.value - 1.0).abs() < 0.06);
        assert!(raw.value > 0.0 && raw.value < norm.value);
        assert!(ssf_at_centroid(&field, VoxelCoord { x: 999, y: 0, z: 0 }, true).is_err());
    }

    #[test]
    fn phantom_validation_rejects_bad_geometry() {
        let mut s = PhantomSpec::default();
        s.inner_radius_px = 13.0;
        assert!(matches!(make_phantom(&s), Err(SsfError::BadPhantom(_))));
        let mut s = PhantomSpec::default();
        s.outer_radius_px = 40.0;
        assert!(matches!(make_phantom(&s), Err(SsfError::BadPhantom(_))));
        let mut s = PhantomSpec::default();
        s.activation = 1.5;
        assert!(matches!(make_phantom(&s), Err(SsfError::BadPhantom(_))));
    }
}
