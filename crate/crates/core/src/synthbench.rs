//! Synthetic validation corpora: constant-velocity multi-track kymographs
//! with a paired noise channel, and matched pre/post corpora with planted
//! velocity shifts.
//!
//! Every item is a pure function of (spec, class, instance seed). Each
//! trajectory draws a speed from a clipped Gaussian around its class mean
//! and a uniform direction, both fixed for the trajectory's lifetime;
//! positions reflect at the frame boundary. Channel 1 writes the trajectory
//! speed at every centroid; channel 2 writes either a fresh uniform integer
//! in [1, 255] per centroid (an uninformative control with the same
//! support) or, in the paired corpora, a value proportional to the speed
//! with small multiplicative jitter. Trajectory geometry and channel-2
//! noise come from separate derived RNG streams so the second channel never
//! perturbs the geometry.

use crate::kymograph::{build_kymograph, KymoRecord, Kymograph, Provenance, ValueKind};
use crate::rngutil::{derive_seed, gauss};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("frame {nx}x{ny}x{nt} too small for trajectories (need >= 4x4x2)")]
    FrameTooSmall { nx: usize, ny: usize, nt: usize },
    #[error("class means must be positive, got {0}")]
    BadMean(f64),
    #[error("sigma must be non-negative and finite, got {0}")]
    BadSigma(f64),
    #[error("need at least one class mean and one track")]
    EmptySpec,
    #[error("shift list has {got} entries for {pairs} pairs")]
    ShiftCount { got: usize, pairs: usize },
    #[error("coupling needs positive finite kappa and non-negative finite jitter, got kappa {kappa}, jitter {jitter}")]
    BadCoupling { kappa: f64, jitter: f64 },
    #[error(transparent)]
    Kymo(#[from] crate::kymograph::KymoError),
}

/// Benchmark corpus parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    /// Per-class trajectory speed means, px/frame.
    pub class_means: Vec<f64>,
    /// Speed standard deviation within a class.
    pub sigma: f64,
    /// Lower clip so "constant velocity" stays meaningful.
    pub min_speed: f64,
    pub n_tracks: usize,
    pub n_per_class: usize,
    pub nx: usize,
    pub ny: usize,
    pub nt: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            class_means: vec![1.0, 3.0, 5.0],
            sigma: 0.5,
            min_speed: 0.1,
            n_tracks: 10,
            n_per_class: 30,
            nx: 128,
            ny: 128,
            nt: 100,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.nx < 4 || self.ny < 4 || self.nt < 2 {
            return Err(SynthError::FrameTooSmall {
                nx: self.nx,
                ny: self.ny,
                nt: self.nt,
            });
        }
        if self.class_means.is_empty() || self.n_tracks == 0 {
            return Err(SynthError::EmptySpec);
        }
        if let Some(&m) = self.class_means.iter().find(|m| !(**m > 0.0)) {
            return Err(SynthError::BadMean(m));
        }
        if !self.sigma.is_finite() || self.sigma < 0.0 {
            return Err(SynthError::BadSigma(self.sigma));
        }
        Ok(())
    }
}

/// One generated two-channel item.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthItem {
    pub label: String,
    pub class_index: usize,
    pub instance: usize,
    pub seed: u64,
    /// Channel 1: trajectory speed at each centroid.
    pub velocity: Kymograph,
    /// Channel 2: per-centroid uniform noise in [1, 255].
    pub random: Kymograph,
    /// Planted per-track speeds, for diagnostics and statistics.
    pub speeds: Vec<f64>,
}

struct Trajectory {
    x: f64,
    y: f64,
    vx: f64,
    vy: f64,
}

impl Trajectory {
    fn step(&mut self, nx: usize, ny: usize) {
        self.x += self.vx;
        self.y += self.vy;
        let (max_x, max_y) = ((nx - 1) as f64, (ny - 1) as f64);
        if self.x < 0.0 {
            self.x = -self.x;
            self.vx = -self.vx;
        }
        if self.x > max_x {
            self.x = 2.0 * max_x - self.x;
            self.vx = -self.vx;
        }
        if self.y < 0.0 {
            self.y = -self.y;
            self.vy = -self.vy;
        }
        if self.y > max_y {
            self.y = 2.0 * max_y - self.y;
            self.vy = -self.vy;
        }
        // a speed above the frame extent could overshoot both walls; clamp
        self.x = self.x.clamp(0.0, max_x);
        self.y = self.y.clamp(0.0, max_y);
    }

    fn voxel(&self) -> (usize, usize) {
        (self.x.round() as usize, self.y.round() as usize)
    }
}

fn sample_tracks(
    spec: &SynthSpec,
    mean: f64,
    rng: &mut ChaCha8Rng,
    speed_override: Option<&[f64]>,
) -> (Vec<Trajectory>, Vec<f64>) {
    let mut tracks = Vec::with_capacity(spec.n_tracks);
    let mut speeds = Vec::with_capacity(spec.n_tracks);
    for k in 0..spec.n_tracks {
        let x = rng.random::<f64>() * (spec.nx - 1) as f64;
        let y = rng.random::<f64>() * (spec.ny - 1) as f64;
        let theta = rng.random::<f64>() * std::f64::consts::TAU;
        // the Gaussian draw always happens so geometry streams stay aligned
        // across specs that only differ in speed
        let drawn = (mean + spec.sigma * gauss(rng)).max(spec.min_speed);
        let speed = match speed_override {
            Some(s) => s[k],
            None => drawn,
        };
        tracks.push(Trajectory {
            x,
            y,
            vx: speed * theta.cos(),
            vy: speed * theta.sin(),
        });
        speeds.push(speed);
    }
    (tracks, speeds)
}

/// What channel 2 carries: an uninformative control, or a value coupled to
/// the track speed.
#[derive(Clone, Copy)]
enum Channel2 {
    Random,
    Coupled { kappa: f64, jitter: f64 },
}

fn render_item(
    spec: &SynthSpec,
    label: &str,
    class_index: usize,
    instance: usize,
    item_seed: u64,
    mean: f64,
    speed_override: Option<&[f64]>,
    channel2: Channel2,
) -> Result<SynthItem, SynthError> {
    let mut geom_rng = ChaCha8Rng::seed_from_u64(derive_seed(item_seed, &[0]));
    let mut noise_rng = ChaCha8Rng::seed_from_u64(derive_seed(item_seed, &[1]));
    let (mut tracks, speeds) = sample_tracks(spec, mean, &mut geom_rng, speed_override);

    let mut vel_records = Vec::with_capacity(spec.n_tracks * spec.nt);
    let mut ch2_records = Vec::with_capacity(spec.n_tracks * spec.nt);
    for t in 0..spec.nt {
        for (k, tr) in tracks.iter_mut().enumerate() {
            if t > 0 {
                tr.step(spec.nx, spec.ny);
            }
            let (x, y) = tr.voxel();
            vel_records.push(KymoRecord {
                x,
                y,
                z: 0,
                t,
                value: speeds[k],
            });
            let v2 = match channel2 {
                Channel2::Random => noise_rng.random_range(1..=255u32) as f64,
                // multiplicative noise keeps the value positive and leaves
                // the planted per-track ratio exact between pre and post,
                // which replay the same noise stream
                Channel2::Coupled { kappa, jitter } => {
                    kappa * speeds[k] * (jitter * gauss(&mut noise_rng)).exp()
                }
            };
            ch2_records.push(KymoRecord { x, y, z: 0, t, value: v2 });
        }
    }

    let source = format!("synth/{label}/{instance}");
    let velocity = build_kymograph(
        &vel_records,
        spec.nx,
        spec.ny,
        spec.nt,
        "velocity",
        vec![Provenance {
            source: source.clone(),
            kind: ValueKind::Velocity,
        }],
    )?;
    let (ch2_name, ch2_kind) = match channel2 {
        Channel2::Random => ("random", ValueKind::Random),
        Channel2::Coupled { .. } => ("coupled", ValueKind::Coupled),
    };
    let random = build_kymograph(
        &ch2_records,
        spec.nx,
        spec.ny,
        spec.nt,
        ch2_name,
        vec![Provenance {
            source,
            kind: ch2_kind,
        }],
    )?;
    Ok(SynthItem {
        label: label.to_string(),
        class_index,
        instance,
        seed: item_seed,
        velocity,
        random,
        speeds,
    })
}

/// Generate one two-channel benchmark item for a class.
pub fn generate_class_kymograph(
    spec: &SynthSpec,
    class_index: usize,
    instance_seed: u64,
) -> Result<SynthItem, SynthError> {
    spec.validate()?;
    let mean = spec.class_means[class_index];
    render_item(
        spec,
        &format!("v{mean}"),
        class_index,
        0,
        instance_seed,
        mean,
        None,
        Channel2::Random,
    )
}

/// Generate the full labeled corpus: n_per_class items per class mean,
/// with instance seeds derived from the spec seed.
pub fn generate_benchmark(spec: &SynthSpec) -> Result<Vec<SynthItem>, SynthError> {
    spec.validate()?;
    let mut out = Vec::with_capacity(spec.class_means.len() * spec.n_per_class);
    for (ci, &mean) in spec.class_means.iter().enumerate() {
        for inst in 0..spec.n_per_class {
            let item_seed = derive_seed(spec.seed, &[ci as u64, inst as u64]);
            let mut item = render_item(
                spec,
                &format!("v{mean}"),
                ci,
                inst,
                item_seed,
                mean,
                None,
                Channel2::Random,
            )?;
            item.instance = inst;
            out.push(item);
        }
    }
    Ok(out)
}

/// Parameters for the matched pre/post corpus with planted velocity shifts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedShiftSpec {
    pub n_pairs: usize,
    /// Added to every track speed of the post item of pair i.
    pub shifts: Vec<f64>,
    pub base_mean: f64,
    pub sigma: f64,
    pub min_speed: f64,
    /// Channel-2 value is kappa times the track speed, so channel-2 shifts
    /// are proportional to channel-1 shifts.
    pub kappa: f64,
    /// Log-sd of multiplicative noise on the coupled channel. Zero makes
    /// channel 2 an exact scalar multiple of channel 1, and the per-channel
    /// quantizer maps scalar multiples to identical byte streams; a small
    /// positive value keeps the channels distinct while the planted
    /// per-track ratio stays exact.
    #[serde(default = "default_coupled_jitter")]
    pub coupled_jitter: f64,
    pub n_tracks: usize,
    pub nx: usize,
    pub ny: usize,
    pub nt: usize,
    pub seed: u64,
}

impl Default for PairedShiftSpec {
    fn default() -> Self {
        PairedShiftSpec {
            n_pairs: 10,
            shifts: (0..10).map(|i| 0.3 * i as f64).collect(),
            base_mean: 2.0,
            sigma: 0.5,
            min_speed: 0.1,
            kappa: 0.6,
            coupled_jitter: default_coupled_jitter(),
            n_tracks: 10,
            nx: 128,
            ny: 128,
            nt: 100,
            seed: 0,
        }
    }
}

fn default_coupled_jitter() -> f64 {
    0.05
}

/// One matched pre/post pair. The post item replays the pre trajectories
/// (same starts and directions) with every speed shifted by the planted
/// amount, so the shift is exact per track.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftPair {
    pub id: String,
    pub shift: f64,
    pub pre: SynthItem,
    pub post: SynthItem,
}

pub fn generate_paired_shift_corpus(
    spec: &PairedShiftSpec,
) -> Result<Vec<ShiftPair>, SynthError> {
    if spec.shifts.len() != spec.n_pairs {
        return Err(SynthError::ShiftCount {
            got: spec.shifts.len(),
            pairs: spec.n_pairs,
        });
    }
    if !(spec.kappa > 0.0)
        || !spec.kappa.is_finite()
        || !(spec.coupled_jitter >= 0.0)
        || !spec.coupled_jitter.is_finite()
    {
        return Err(SynthError::BadCoupling {
            kappa: spec.kappa,
            jitter: spec.coupled_jitter,
        });
    }
    let base = SynthSpec {
        class_means: vec![spec.base_mean],
        sigma: spec.sigma,
        min_speed: spec.min_speed,
        n_tracks: spec.n_tracks,
        n_per_class: 1,
        nx: spec.nx,
        ny: spec.ny,
        nt: spec.nt,
        seed: spec.seed,
    };
    base.validate()?;
    let mut out = Vec::with_capacity(spec.n_pairs);
    for (i, &shift) in spec.shifts.iter().enumerate() {
        let pair_seed = derive_seed(spec.seed, &[i as u64]);
        let pre = render_item(
            &base,
            &format!("pair{i:02}"),
            0,
            i,
            pair_seed,
            spec.base_mean,
            None,
            Channel2::Coupled {
                kappa: spec.kappa,
                jitter: spec.coupled_jitter,
            },
        )?;
        let shifted: Vec<f64> = pre
            .speeds
            .iter()
            .map(|s| (s + shift).max(spec.min_speed))
            .collect();
        let post = render_item(
            &base,
            &format!("pair{i:02}"),
            0,
            i,
            pair_seed,
            spec.base_mean,
            Some(&shifted),
            Channel2::Coupled {
                kappa: spec.kappa,
                jitter: spec.coupled_jitter,
            },
        )?;
        out.push(ShiftPair {
            id: format!("pair{i:02}"),
            shift,
            pre,
            post,
        });
    }
    Ok(out)
}

/// Manifest entry describing one written kymograph file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub label: String,
    pub channel: String,
    pub kind: ValueKind,
    pub seed: u64,
}

/// Corpus manifest written next to generated kymograph files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub entries: Vec<ManifestEntry>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kymograph::quantize_cohort;

    fn small_spec() -> SynthSpec {
        SynthSpec {
            nx: 48,
            ny: 48,
            nt: 20,
            n_per_class: 2,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn zero_sigma_makes_every_track_move_at_the_class_mean() {
        let spec = SynthSpec {
            sigma: 0.0,
            ..small_spec()
        };
        let item = generate_class_kymograph(&spec, 1, 99).unwrap();
        assert!(item.speeds.iter().all(|s| *s == 3.0));
        let nz: Vec<f64> = item
            .velocity
            .data
            .iter()
            .copied()
            .filter(|v| *v != 0.0)
            .collect();
        assert!(!nz.is_empty());
        assert!(nz.iter().all(|v| *v == 3.0));
    }

    #[test]
    fn single_track_writes_one_voxel_per_frame() {
        let spec = SynthSpec {
            n_tracks: 1,
            nt: 10,
            ..small_spec()
        };
        let item = generate_class_kymograph(&spec, 0, 7).unwrap();
        assert_eq!(item.velocity.nonzero_count(), 10);
        assert_eq!(item.random.nonzero_count(), 10);
        assert_eq!(item.velocity.collisions, 0);
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = small_spec();
        let a = generate_class_kymograph(&spec, 2, 1234).unwrap();
        let b = generate_class_kymograph(&spec, 2, 1234).unwrap();
        assert_eq!(a.velocity.data, b.velocity.data);
        assert_eq!(a.random.data, b.random.data);
        assert_eq!(a.speeds, b.speeds);
        let c = generate_class_kymograph(&spec, 2, 1235).unwrap();
        assert_ne!(a.velocity.data, c.velocity.data);
    }

    #[test]
    fn channel2_values_are_integers_in_range() {
        let item = generate_class_kymograph(&small_spec(), 0, 3).unwrap();
        for &v in item.random.data.iter().filter(|v| **v != 0.0) {
            assert_eq!(v, v.round());
            assert!((1.0..=255.0).contains(&v));
        }
    }

    #[test]
    fn benchmark_counts_classes_times_instances() {
        let corpus = generate_benchmark(&small_spec()).unwrap();
        assert_eq!(corpus.len(), 6);
        let labels: Vec<&str> = corpus.iter().map(|i| i.label.as_str()).collect();
        assert_eq!(labels, ["v1", "v1", "v3", "v3", "v5", "v5"]);
        // distinct seeds per item
        let mut seeds: Vec<u64> = corpus.iter().map(|i| i.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), 6);
    }

    #[test]
    fn corpus_is_a_pure_function_of_the_spec() {
        let a = generate_benchmark(&small_spec()).unwrap();
        let b = generate_benchmark(&small_spec()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.velocity.data, y.velocity.data);
            assert_eq!(x.random.data, y.random.data);
        }
    }

    #[test]
    fn empirical_speeds_track_the_class_means() {
        let spec = SynthSpec {
            n_per_class: 10,
            ..small_spec()
        };
        let corpus = generate_benchmark(&spec).unwrap();
        for (ci, &mean) in spec.class_means.iter().enumerate() {
            let speeds: Vec<f64> = corpus
                .iter()
                .filter(|i| i.class_index == ci)
                .flat_map(|i| i.speeds.iter().copied())
                .collect();
            let n = speeds.len() as f64;
            let m = speeds.iter().sum::<f64>() / n;
            let se = spec.sigma / n.sqrt();
            assert!(
                (m - mean).abs() < 3.0 * se + 1e-3,
                "class {ci}: mean {m} vs planted {mean} (se {se})"
            );
        }
    }

    #[test]
    fn few_tracks_stray_toward_a_neighboring_class_mean() {
        let spec = SynthSpec {
            n_per_class: 30,
            ..small_spec()
        };
        let corpus = generate_benchmark(&spec).unwrap();
        let means = &spec.class_means;
        let mut strays = 0usize;
        let mut total = 0usize;
        for item in &corpus {
            for &s in &item.speeds {
                total += 1;
                let own = (s - means[item.class_index]).abs();
                let nearest_other = means
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != item.class_index)
                    .map(|(_, m)| (s - m).abs())
                    .fold(f64::INFINITY, f64::min);
                if nearest_other < own {
                    strays += 1;
                }
            }
        }
        assert!(
            (strays as f64) < 0.05 * total as f64,
            "{strays}/{total} tracks closer to a neighboring mean"
        );
    }

    #[test]
    fn channel2_is_uncorrelated_with_speed() {
        let spec = SynthSpec {
            n_per_class: 5,
            ..small_spec()
        };
        let corpus = generate_benchmark(&spec).unwrap();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for item in &corpus {
            for (v, r) in item.velocity.data.iter().zip(&item.random.data) {
                if *v != 0.0 && *r != 0.0 {
                    xs.push(*v);
                    ys.push(*r);
                }
            }
        }
        let (rho, _) = crate::stats::pearson(&xs, &ys).unwrap();
        assert!(rho.abs() < 0.1, "corpus-scale correlation {rho}");
    }

    #[test]
    fn trajectories_reflect_and_stay_in_bounds() {
        // fast tracks in a small frame exercise every wall
        let spec = SynthSpec {
            class_means: vec![9.0],
            nx: 16,
            ny: 16,
            nt: 50,
            ..SynthSpec::default()
        };
        let item = generate_class_kymograph(&spec, 0, 5).unwrap();
        // build_kymograph would have errored on out-of-bounds voxels; also
        // every frame still carries all tracks
        for t in 0..spec.nt {
            let count = (0..spec.ny)
                .flat_map(|y| (0..spec.nx).map(move |x| (x, y)))
                .filter(|&(x, y)| item.velocity.at(x, y, t) != 0.0)
                .count();
            assert!(count >= 1, "frame {t} lost all tracks");
        }
    }

    #[test]
    fn too_small_frames_are_rejected() {
        let spec = SynthSpec {
            nx: 2,
            ..SynthSpec::default()
        };
        assert!(matches!(
            generate_benchmark(&spec),
            Err(SynthError::FrameTooSmall { .. })
        ));
    }

    #[test]
    fn paired_corpus_plants_exact_speed_shifts() {
        let spec = PairedShiftSpec {
            n_pairs: 4,
            shifts: vec![0.0, 0.5, 1.0, 1.5],
            nx: 48,
            ny: 48,
            nt: 20,
            ..PairedShiftSpec::default()
        };
        let pairs = generate_paired_shift_corpus(&spec).unwrap();
        assert_eq!(pairs.len(), 4);
        for p in &pairs {
            for (a, b) in p.pre.speeds.iter().zip(&p.post.speeds) {
                assert!((b - a - p.shift).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_shift_pairs_are_identical() {
        let spec = PairedShiftSpec {
            n_pairs: 3,
            shifts: vec![0.0, 0.0, 0.0],
            nx: 48,
            ny: 48,
            nt: 20,
            ..PairedShiftSpec::default()
        };
        let pairs = generate_paired_shift_corpus(&spec).unwrap();
        for p in &pairs {
            assert_eq!(p.pre.velocity.data, p.post.velocity.data);
            assert_eq!(p.pre.random.data, p.post.random.data);
        }
    }

    #[test]
    fn paired_channel2_tracks_speed_up_to_jitter() {
        let spec = PairedShiftSpec {
            n_pairs: 2,
            shifts: vec![0.4, 0.8],
            nx: 48,
            ny: 48,
            nt: 20,
            ..PairedShiftSpec::default()
        };
        let pairs = generate_paired_shift_corpus(&spec).unwrap();
        let mut perturbed = 0usize;
        for p in &pairs {
            for (v, c) in p.post.velocity.data.iter().zip(&p.post.random.data) {
                if *v != 0.0 {
                    let log_ratio = (c / (spec.kappa * v)).ln();
                    assert!(log_ratio.abs() < 6.0 * spec.coupled_jitter);
                    if log_ratio != 0.0 {
                        perturbed += 1;
                    }
                }
            }
            assert_eq!(p.post.random.channel, "coupled");
        }
        assert!(perturbed > 0, "jitter never perturbed the coupled channel");
    }

    #[test]
    fn unjittered_coupled_channel_is_exact_and_quantizes_identically() {
        // kappa scales the cohort mean and sd together, so the quantizer
        // assigns a pure scalar multiple of a channel to the same bins;
        // a zero-jitter coupled channel is therefore byte-identical to the
        // velocity channel after quantization. This degeneracy is why the
        // default jitter is positive.
        let spec = PairedShiftSpec {
            n_pairs: 3,
            shifts: vec![0.0, 0.5, 1.0],
            coupled_jitter: 0.0,
            nx: 48,
            ny: 48,
            nt: 20,
            ..PairedShiftSpec::default()
        };
        let pairs = generate_paired_shift_corpus(&spec).unwrap();
        for p in &pairs {
            for (v, c) in p.pre.velocity.data.iter().zip(&p.pre.random.data) {
                assert!((c - spec.kappa * v).abs() < 1e-12);
            }
        }
        let vel: Vec<Kymograph> = pairs
            .iter()
            .flat_map(|p| [p.pre.velocity.clone(), p.post.velocity.clone()])
            .collect();
        let coupled: Vec<Kymograph> = pairs
            .iter()
            .flat_map(|p| [p.pre.random.clone(), p.post.random.clone()])
            .collect();
        let qv = quantize_cohort(&vel).unwrap();
        let qc = quantize_cohort(&coupled).unwrap();
        for (a, b) in qv.iter().zip(&qc) {
            assert_eq!(a.data, b.data);
        }
    }

    #[test]
    fn shift_list_length_is_validated() {
        let spec = PairedShiftSpec {
            n_pairs: 5,
            shifts: vec![0.0; 4],
            ..PairedShiftSpec::default()
        };
        assert!(matches!(
            generate_paired_shift_corpus(&spec),
            Err(SynthError::ShiftCount { got: 4, pairs: 5 })
        ));
    }

    #[test]
    fn shared_trajectories_differ_only_in_speed() {
        // same pair: pre and post tracks start at the same voxel at t=0
        let spec = PairedShiftSpec {
            n_pairs: 1,
            shifts: vec![1.0],
            nx: 64,
            ny: 64,
            nt: 10,
            ..PairedShiftSpec::default()
        };
        let pairs = generate_paired_shift_corpus(&spec).unwrap();
        let p = &pairs[0];
        let first_frame = |k: &Kymograph| -> Vec<(usize, usize)> {
            let mut v = Vec::new();
            for y in 0..k.ny {
                for x in 0..k.nx {
                    if k.at(x, y, 0) != 0.0 {
                        v.push((x, y));
                    }
                }
            }
            v
        };
        assert_eq!(first_frame(&p.pre.velocity), first_frame(&p.post.velocity));
    }
}
