//! Seed derivation for deterministic per-item random streams.

/// splitmix64 finalizer; good avalanche, cheap, stable across platforms.
pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

/// Derive an independent stream seed from a base seed and a tag path,
/// e.g. `derive_seed(seed, &[class, instance])`.
pub(crate) fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut s = splitmix64(base);
    for &t in tags {
        s = splitmix64(s ^ t.wrapping_mul(0x9E3779B97F4A7C15));
    }
    s
}

/// Standard normal sample via Box-Muller.
pub(crate) fn gauss(rng: &mut impl rand::Rng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(1e-12);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
