//! Nonparametric and correlation statistics for paired comparisons.
//!
//! The Wilcoxon signed-rank test drops zero differences, midranks ties, and
//! switches between an exact null distribution (subset-sum over doubled
//! ranks) for n <= 25 and a tie-corrected normal approximation with
//! continuity correction above. Two-sided p-values are twice the smaller
//! tail, capped at 1.

use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("all paired differences are zero; the test statistic is undefined")]
    AllZeroDifferences,
    #[error("need at least {need} non-zero differences, got {got}")]
    TooFewPairs { need: usize, got: usize },
    #[error("inputs must have equal length >= {need}, got {x} and {y}")]
    BadLengths { need: usize, x: usize, y: usize },
    #[error("correlation is undefined for a constant input")]
    ConstantInput,
    #[error("inputs must be finite")]
    NonFinite,
}

/// Sample mean and standard deviation (n - 1 denominator; 0 when n < 2).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Largest n for which the exact signed-rank null distribution is used.
pub const WILCOXON_EXACT_MAX_N: usize = 25;

/// Result of the signed-rank test: W+ (sum of positive-difference ranks),
/// the retained pair count, the two-sided p, and which path computed it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WilcoxonResult {
    pub w_plus: f64,
    pub n_used: usize,
    pub p_two_sided: f64,
    pub exact: bool,
}

/// Midrank the absolute differences; returns ranks doubled so that tied
/// half-ranks become exact integers.
fn doubled_midranks(abs_d: &[f64]) -> Vec<u64> {
    let n = abs_d.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| abs_d[a].total_cmp(&abs_d[b]));
    let mut doubled = vec![0u64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && abs_d[order[j + 1]] == abs_d[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share the midrank; doubled sum = (i+1) + (j+1)
        let two_r = (i + 1 + j + 1) as u64;
        for &k in &order[i..=j] {
            doubled[k] = two_r;
        }
        i = j + 1;
    }
    doubled
}

/// Exact two-sided p for doubled-rank statistic 2W+ = `w2` by counting sign
/// assignments via subset-sum.
fn exact_two_sided(doubled: &[u64], w2: u64) -> f64 {
    let total: u64 = doubled.iter().sum();
    // ways[s] = number of subsets with doubled-rank sum s
    let mut ways = vec![0.0f64; total as usize + 1];
    ways[0] = 1.0;
    for &r in doubled {
        for s in (r as usize..ways.len()).rev() {
            ways[s] += ways[s - r as usize];
        }
    }
    let all = 2f64.powi(doubled.len() as i32);
    let lo: f64 = ways[..=w2 as usize].iter().sum();
    let hi: f64 = ways[w2 as usize..].iter().sum();
    (2.0 * (lo.min(hi)) / all).min(1.0)
}

/// Normal approximation with continuity correction plus the Edgeworth
/// kurtosis term. W+ is a sum of independent midrank Bernoulli terms, so
/// mean, variance, and fourth cumulant follow from the midranks directly
/// (which also absorbs tie corrections); the distribution is symmetric, so
/// the skewness term vanishes and kurtosis is the leading correction.
fn normal_two_sided(doubled: &[u64], w_plus: f64) -> f64 {
    let mut mu = 0.0;
    let mut var = 0.0;
    let mut k4 = 0.0;
    for &d in doubled {
        let r = d as f64 / 2.0;
        mu += r / 2.0;
        var += r * r / 4.0;
        k4 -= r * r * r * r / 8.0;
    }
    if var <= 0.0 {
        return 1.0;
    }
    let sigma = var.sqrt();
    let gamma2 = k4 / (var * var);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let cdf = |w: f64| -> f64 {
        let z = (w - mu) / sigma;
        let pdf = (-0.5 * z * z).exp() / (std::f64::consts::TAU).sqrt();
        (normal.cdf(z) - pdf * (gamma2 / 24.0) * (z * z * z - 3.0 * z)).clamp(0.0, 1.0)
    };
    let p_lo = cdf(w_plus + 0.5);
    let p_hi = 1.0 - cdf(w_plus - 0.5);
    (2.0 * p_lo.min(p_hi)).min(1.0)
}

/// Two-sided Wilcoxon signed-rank test on paired samples.
///
/// Zero differences are dropped; at least 5 non-zero pairs are required.
pub fn wilcoxon_signed_rank(pairs: &[(f64, f64)]) -> Result<WilcoxonResult, StatsError> {
    if pairs.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let diffs: Vec<f64> = pairs
        .iter()
        .map(|(a, b)| a - b)
        .filter(|d| *d != 0.0)
        .collect();
    if diffs.is_empty() {
        return Err(StatsError::AllZeroDifferences);
    }
    if diffs.len() < 5 {
        return Err(StatsError::TooFewPairs {
            need: 5,
            got: diffs.len(),
        });
    }
    let abs_d: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let doubled = doubled_midranks(&abs_d);
    let w2: u64 = diffs
        .iter()
        .zip(&doubled)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, &r)| r)
        .sum();
    let w_plus = w2 as f64 / 2.0;
    let n_used = diffs.len();
    let (p, exact) = if n_used <= WILCOXON_EXACT_MAX_N {
        (exact_two_sided(&doubled, w2), true)
    } else {
        (normal_two_sided(&doubled, w_plus), false)
    };
    Ok(WilcoxonResult {
        w_plus,
        n_used,
        p_two_sided: p,
        exact,
    })
}

/// Pearson correlation with a t-distribution p-value (n - 2 dof).
pub fn pearson(x: &[f64], y: &[f64]) -> Result<(f64, f64), StatsError> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(StatsError::BadLengths {
            need: 3,
            x: x.len(),
            y: y.len(),
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ConstantInput);
    }
    let rho = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let p = if rho.abs() >= 1.0 {
        0.0
    } else {
        let dof = n - 2.0;
        let t = rho * (dof / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, dof).unwrap();
        (2.0 * (1.0 - dist.cdf(t.abs()))).min(1.0)
    };
    Ok((rho, p))
}
