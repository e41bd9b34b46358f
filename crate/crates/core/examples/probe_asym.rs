//! Probe: bzip2 NCD order-asymmetry distribution vs corpus density.

use cellsig::kymograph::quantize_cohort;
use cellsig::ncd::{ncd, Bzip2Compressor, NcdItem, SizeCache};
use cellsig::synthbench::{generate_benchmark, SynthSpec};
use std::time::Instant;

fn probe(tag: &str, spec: &SynthSpec, n_pairs: usize) {
    let t0 = Instant::now();
    let corpus = generate_benchmark(spec).unwrap();
    let vel: Vec<_> = corpus.iter().map(|i| i.velocity.clone()).collect();
    let q = quantize_cohort(&vel).unwrap();
    let items: Vec<NcdItem> = q
        .iter()
        .enumerate()
        .map(|(i, qk)| NcdItem::from_kymograph(&format!("{}-{:02}", corpus[i].label, corpus[i].instance), qk))
        .collect();
    let labels: Vec<&str> = corpus.iter().map(|i| i.label.as_str()).collect();
    let c = Bzip2Compressor::default();
    let cache = SizeCache::new();

    // deterministic pair subsample via LCG
    let n = items.len();
    let mut all: Vec<(usize, usize)> = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            all.push((i, j));
        }
    }
    let mut state = 7u64;
    let mut chosen = Vec::new();
    let mut pool = all.clone();
    for _ in 0..n_pairs.min(pool.len()) {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        let k = (state >> 33) as usize % pool.len();
        chosen.push(pool.swap_remove(k));
    }

    let mut asyms: Vec<(f64, usize, usize)> = Vec::new();
    let mut same = Vec::new();
    let mut crossv = Vec::new();
    for &(i, j) in &chosen {
        let dij = ncd(&items[i], &items[j], &c, &cache).unwrap();
        let dji = ncd(&items[j], &items[i], &c, &cache).unwrap();
        asyms.push(((dij - dji).abs(), i, j));
        let d = 0.5 * (dij + dji);
        if labels[i] == labels[j] {
            same.push(d);
        } else {
            crossv.push(d);
        }
    }
    let mut selfs = Vec::new();
    for i in (0..n).step_by(9) {
        selfs.push(ncd(&items[i], &items[i], &c, &cache).unwrap());
    }
    asyms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let med = asyms[asyms.len() / 2].0;
    let p90 = asyms[asyms.len() * 9 / 10].0;
    let p99 = asyms[asyms.len() * 99 / 100].0;
    let (mx, wi, wj) = *asyms.last().unwrap();
    let medi = |mut v: Vec<f64>| -> f64 {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    let z0 = cache.size(&c, &items[0].payload).unwrap();
    println!(
        "{tag}: asym med={med:.4} p90={p90:.4} p99={p99:.4} max={mx:.4} ({}/{}) | same={:.4} cross={:.4} gap={:.4} | self max={:.4} | Z(item0)={} | {:.1?}",
        items[wi].id,
        items[wj].id,
        medi(same.clone()),
        medi(crossv.clone()),
        medi(crossv) - medi(same),
        selfs.iter().cloned().fold(0.0f64, f64::max),
        z0,
        t0.elapsed()
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
    probe("tracks=10 64x64", &base, 250);
    probe(
        "tracks=20 64x64",
        &SynthSpec {
            n_tracks: 20,
            ..base.clone()
        },
        250,
    );
    probe(
        "tracks=30 64x64",
        &SynthSpec {
            n_tracks: 30,
            ..base.clone()
        },
        250,
    );
    probe(
        "tracks=50 64x64",
        &SynthSpec {
            n_tracks: 50,
            ..base.clone()
        },
        250,
    );
    probe(
        "tracks=30 48x48",
        &SynthSpec {
            n_tracks: 30,
            nx: 48,
            ny: 48,
            ..base.clone()
        },
        250,
    );
}
