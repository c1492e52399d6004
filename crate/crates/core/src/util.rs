//! Small numeric and hashing helpers used across modules.

/// Pairwise (cascade) summation. Reduction order is fixed by the recursion,
/// so results do not depend on caller-side chunking or thread count.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Mean via pairwise summation. Empty input yields NaN; callers guard.
pub fn pairwise_mean(xs: &[f64]) -> f64 {
    pairwise_sum(xs) / xs.len() as f64
}

/// FNV-1a over the UTF-8 bytes of `s`. Stable across platforms and releases,
/// unlike `DefaultHasher`.
pub fn fnv1a64(s: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Per-instance seed so parallel and serial runs agree.
pub fn derived_seed(seed: u64, instance_id: &str) -> u64 {
    seed ^ fnv1a64(instance_id)
}

/// Index of the maximum value, ties broken by the lowest index.
pub fn argmax_tie_lowest(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in xs.iter().enumerate().skip(1) {
        if *v > xs[best] {
            best = i;
        }
    }
    best
}

pub fn all_finite(xs: &[f64]) -> bool {
    xs.iter().all(|v| v.is_finite())
}
