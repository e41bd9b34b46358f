//! One-off measurement harness: NCD economics on the desk-scale corpus.

use cellsig::embedding::{csf_rkhs, embed, paired_shift_distances};
use cellsig::kymograph::quantize_cohort;
use cellsig::ncd::{pairwise_matrix, Bzip2Compressor, NcdItem, PairwiseOptions};
use cellsig::stats::{pearson, wilcoxon_signed_rank};
use cellsig::synthbench::{
    generate_benchmark, generate_paired_shift_corpus, PairedShiftSpec, SynthSpec,
};
use std::time::Instant;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn shuffle_in_place(labels: &mut [String], rng: &mut u64) {
    // splitmix-style LCG shuffle, self-contained
    for i in (1..labels.len()).rev() {
        *rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let j = (*rng >> 33) as usize % (i + 1);
        labels.swap(i, j);
    }
}

fn main() {
    let c = Bzip2Compressor::default();
    if std::env::args().any(|a| a == "paired") {
        paired_section(&c);
        return;
    }
    let spec = SynthSpec {
        nx: 64,
        ny: 64,
        nt: 100,
        n_tracks: 50,
        n_per_class: 30,
        seed: 41,
        ..SynthSpec::default()
    };

    let t0 = Instant::now();
    let corpus = generate_benchmark(&spec).unwrap();
    println!("corpus: {} items in {:.2?}", corpus.len(), t0.elapsed());

    let vel: Vec<_> = corpus.iter().map(|i| i.velocity.clone()).collect();
    let rnd: Vec<_> = corpus.iter().map(|i| i.random.clone()).collect();
    let t0 = Instant::now();
    let qvel = quantize_cohort(&vel).unwrap();
    let qrnd = quantize_cohort(&rnd).unwrap();
    println!(
        "quantize: {:.2?}; vel meta mean={:.4} std={:.4} count={}; rnd mean={:.4} std={:.4}",
        t0.elapsed(),
        qvel[0].quantization.mean,
        qvel[0].quantization.std,
        qvel[0].quantization.count,
        qrnd[0].quantization.mean,
        qrnd[0].quantization.std,
    );

    let ids: Vec<String> = corpus
        .iter()
        .map(|i| format!("{}-{:02}", i.label, i.instance))
        .collect();
    let labels: Vec<String> = corpus.iter().map(|i| i.label.clone()).collect();

    let vel_items: Vec<NcdItem> = qvel
        .iter()
        .zip(&ids)
        .map(|(q, id)| NcdItem::from_kymograph(id, q))
        .collect();
    let rnd_items: Vec<NcdItem> = qrnd
        .iter()
        .zip(&ids)
        .map(|(q, id)| NcdItem::from_kymograph(id, q))
        .collect();
    println!(
        "payload bytes per item: {}",
        vel_items[0].payload.bytes.len()
    );

    // criterion-3 style run: both orders + diagonal
    let t0 = Instant::now();
    let opts = PairwiseOptions {
        both_orders: true,
        diagonal: true,
        workers: None,
    };
    let dv = pairwise_matrix(&vel_items, &c, &opts).unwrap();
    let t_vel = t0.elapsed();
    println!(
        "velocity matrix (both orders): {:.2?}; self_ncd_bound={:.4} max_asym={:.4} singles={} pairs={} selfs={}",
        t_vel, dv.self_ncd_bound, dv.max_asymmetry, dv.singleton_compressions, dv.pair_compressions, dv.self_pair_compressions
    );

    // triangle slack and range
    let n = dv.n;
    let mut worst_tri = f64::NEG_INFINITY;
    let mut dmax = f64::NEG_INFINITY;
    let mut dmin = f64::INFINITY;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                dmax = dmax.max(dv.at(i, j));
                dmin = dmin.min(dv.at(i, j));
            }
            for k in 0..n {
                let slack = dv.at(i, k) - dv.at(i, j) - dv.at(j, k);
                worst_tri = worst_tri.max(slack);
            }
        }
    }
    println!(
        "off-diag range [{:.4}, {:.4}]; worst triangle slack {:+.4}",
        dmin, dmax, worst_tri
    );

    // same-class vs cross-class medians
    let mut same = Vec::new();
    let mut cross = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if labels[i] == labels[j] {
                same.push(dv.at(i, j));
            } else {
                cross.push(dv.at(i, j));
            }
        }
    }
    println!(
        "same-class median {:.4}, cross-class median {:.4}, gap {:.4}",
        median(same.clone()),
        median(cross.clone()),
        median(cross) - median(same)
    );

    // random-channel matrix, default opts
    let t0 = Instant::now();
    let dr = pairwise_matrix(&rnd_items, &c, &PairwiseOptions::default()).unwrap();
    println!(
        "random matrix (one order): {:.2?}; self_ncd_bound={:.4}",
        t0.elapsed(),
        dr.self_ncd_bound
    );

    // criterion-4: csf comparison and shuffles
    let t0 = Instant::now();
    let ev = embed(&dv, 3).unwrap();
    let er = embed(&dr, 3).unwrap();
    println!(
        "embed: {:.2?}; vel eigs {:?} negmass {:.3}; rnd eigs {:?} negmass {:.3}",
        t0.elapsed(),
        ev.eigenvalues,
        ev.discarded_negative_mass,
        er.eigenvalues,
        er.discarded_negative_mass
    );
    let cv = csf_rkhs(&ev, &labels).unwrap();
    let cr = csf_rkhs(&er, &labels).unwrap();
    println!(
        "csf_rkhs velocity [{:.4},{:.4}] vs random [{:.4},{:.4}]",
        cv.items_mean, cv.items_std, cr.items_mean, cr.items_std
    );
    let pairs: Vec<(f64, f64)> = cv
        .per_item
        .iter()
        .zip(&cr.per_item)
        .map(|(a, b)| (*a, *b))
        .collect();
    let w = wilcoxon_signed_rank(&pairs).unwrap();
    println!(
        "wilcoxon vel-vs-rnd per-item: W+={} n={} p={:.3e} exact={}",
        w.w_plus, w.n_used, w.p_two_sided, w.exact
    );

    let t0 = Instant::now();
    let mut beaten = 0;
    let mut rng_state = 99u64;
    let mut worst = f64::INFINITY;
    for _ in 0..200 {
        let mut sh = labels.clone();
        shuffle_in_place(&mut sh, &mut rng_state);
        let cs = csf_rkhs(&ev, &sh).unwrap();
        if cv.items_mean < cs.items_mean {
            beaten += 1;
        }
        worst = worst.min(cs.items_mean);
    }
    println!(
        "true-label CSF {:.4} < shuffled in {}/200 (min shuffled {:.4}); {:.2?}",
        cv.items_mean, beaten, worst, t0.elapsed()
    );

    paired_section(&c);
}

// criterion-7 paired-shift dry run
fn paired_section(c: &Bzip2Compressor) {
    let pspec = PairedShiftSpec {
        n_pairs: 10,
        shifts: (0..10).map(|i| 0.3 * i as f64).collect(),
        n_tracks: 50,
        nx: 64,
        ny: 64,
        nt: 100,
        seed: 41,
        ..PairedShiftSpec::default()
    };
    let t0 = Instant::now();
    let pairs = generate_paired_shift_corpus(&pspec).unwrap();
    let mut shift_lists: Vec<Vec<f64>> = Vec::new();
    for channel in 0..2 {
        let kymos: Vec<_> = pairs
            .iter()
            .flat_map(|p| {
                let (a, b) = if channel == 0 {
                    (&p.pre.velocity, &p.post.velocity)
                } else {
                    (&p.pre.random, &p.post.random)
                };
                [a.clone(), b.clone()]
            })
            .collect();
        let q = quantize_cohort(&kymos).unwrap();
        let items: Vec<NcdItem> = q
            .iter()
            .enumerate()
            .map(|(i, qk)| {
                let side = if i % 2 == 0 { "pre" } else { "post" };
                NcdItem::from_kymograph(&format!("{side}/{}", pairs[i / 2].id), qk)
            })
            .collect();
        let d = pairwise_matrix(&items, c, &PairwiseOptions::default()).unwrap();
        let e = embed(&d, 3).unwrap();
        let pre_ids: Vec<String> = pairs.iter().map(|p| format!("pre/{}", p.id)).collect();
        let post_ids: Vec<String> = pairs.iter().map(|p| format!("post/{}", p.id)).collect();
        let mut epre = e.select(&pre_ids).unwrap();
        let mut epost = e.select(&post_ids).unwrap();
        let bare: Vec<String> = pairs.iter().map(|p| p.id.clone()).collect();
        epre.item_ids = bare.clone();
        epost.item_ids = bare;
        let shifts: Vec<f64> = paired_shift_distances(&epre, &epost)
            .unwrap()
            .into_iter()
            .map(|(_, s)| s)
            .collect();
        println!("channel {channel} embedded shifts: {shifts:.3?}");
        shift_lists.push(shifts);
    }
    let (rho, p) = pearson(&shift_lists[0], &shift_lists[1]).unwrap();
    println!(
        "paired-shift channel correlation rho={:.4} p={:.3e}; {:.2?}",
        rho,
        p,
        t0.elapsed()
    );
}
