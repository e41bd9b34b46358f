//! Probe: full 90-item both-orders matrix at candidate densities.

use cellsig::kymograph::quantize_cohort;
use cellsig::ncd::{pairwise_matrix, Bzip2Compressor, NcdItem, PairwiseOptions};
use cellsig::synthbench::{generate_benchmark, SynthSpec};
use std::time::Instant;

fn full(tag: &str, spec: &SynthSpec) {
    let corpus = generate_benchmark(spec).unwrap();
    let vel: Vec<_> = corpus.iter().map(|i| i.velocity.clone()).collect();
    let q = quantize_cohort(&vel).unwrap();
    let items: Vec<NcdItem> = q
        .iter()
        .enumerate()
        .map(|(i, qk)| {
            NcdItem::from_kymograph(
                &format!("{}-{:02}", corpus[i].label, corpus[i].instance),
                qk,
            )
        })
        .collect();
    let c = Bzip2Compressor::default();
    let t0 = Instant::now();
    let opts = PairwiseOptions {
        both_orders: true,
        diagonal: true,
        workers: None,
    };
    let d = pairwise_matrix(&items, &c, &opts).unwrap();
    let mut worst_tri = f64::NEG_INFINITY;
    for i in 0..d.n {
        for j in 0..d.n {
            for k in 0..d.n {
                worst_tri = worst_tri.max(d.at(i, k) - d.at(i, j) - d.at(j, k));
            }
        }
    }
    let dmax = (0..d.n)
        .flat_map(|i| (0..d.n).map(move |j| (i, j)))
        .filter(|(i, j)| i != j)
        .map(|(i, j)| d.at(i, j))
        .fold(f64::NEG_INFINITY, f64::max);
    println!(
        "{tag}: {:.1?} self={:.4} asym={:.4} tri={:+.4} dmax={:.4}",
        t0.elapsed(),
        d.self_ncd_bound,
        d.max_asymmetry,
        worst_tri,
        dmax
    );
}

fn main() {
    let base = SynthSpec {
        nx: 64,
        ny: 64,
        nt: 100,
        n_per_class: 30,
        seed: 1729,
        ..SynthSpec::default()
    };
    full(
        "tracks=50 seed=1729",
        &SynthSpec {
            n_tracks: 50,
            ..base.clone()
        },
    );
    full(
        "tracks=40 seed=41",
        &SynthSpec {
            n_tracks: 40,
            seed: 41,
            ..base.clone()
        },
    );
    full(
        "tracks=50 seed=41",
        &SynthSpec {
            n_tracks: 50,
            seed: 41,
            ..base.clone()
        },
    );
}
