//! Independent reference computations used by the tests and by
//! `redsense verify`. Nothing here shares code paths with the modules it is
//! used to check.

use crate::component::{Assembly, ComponentRealization, GeometricIdentity};

/// Relative error of every component, `c - c̄ · Σc / (2^N - 1)`, per set.
pub fn relative_mismatch(real: &ComponentRealization) -> Vec<Vec<f64>> {
    let total: f64 = real.actual.iter().flatten().sum();
    let scale = total / real.identity.full_scale() as f64;
    real.actual
        .iter()
        .zip(&real.nominal)
        .map(|(a, n)| a.iter().zip(n).map(|(&c, &w)| c - w as f64 * scale).collect())
        .collect()
}

/// Linearized variance of `θ_i - i` for binary coding, in closed form:
/// `σ0² · i · (K - i) / K` with `K = 2^N - 1`.
pub fn binary_error_variance(code: u64, bits: u32, sigma0: f64) -> f64 {
    let k = ((1u64 << bits) - 1) as f64;
    let i = code as f64;
    sigma0 * sigma0 * i * (k - i) / k
}

/// Assembly counts by listing every subset.
pub fn enumerate_assembly_counts(identity: &GeometricIdentity) -> Vec<u64> {
    let nominal = identity.nominal_flat();
    let mut counts = vec![0u64; identity.full_scale() as usize + 1];
    for sel in 0..1u64 << nominal.len() {
        counts[Assembly(sel).nominal_sum(&nominal) as usize] += 1;
    }
    counts
}

/// Minimum-error assembly by listing every subset; ties go to the smallest
/// selector.
pub fn brute_force_assembly(real: &ComponentRealization, target: f64) -> (Assembly, f64) {
    let weights = real.actual_flat();
    let total: f64 = weights.iter().sum();
    let k = real.identity.full_scale() as f64;
    let mut best = (Assembly::EMPTY, f64::INFINITY);
    for sel in 0..1u64 << weights.len() {
        let s: f64 = Assembly(sel).indices().map(|i| weights[i]).sum();
        let err = (target - k * (s / total)).abs();
        if err < best.1 {
            best = (Assembly(sel), err);
        }
    }
    best
}

/// Normalized mean square error by midpoint integration of
/// `(x - code(x) - 1/2)^2` on a uniform grid.
pub fn grid_mse(bits: u32, steps_per_lsb: usize, code_of: impl Fn(f64) -> u64) -> f64 {
    let codes = 1usize << bits;
    let n = codes * steps_per_lsb;
    let h = 1.0 / steps_per_lsb as f64;
    let mut acc = 0.0;
    for k in 0..n {
        let x = (k as f64 + 0.5) * h;
        let e = x - code_of(x) as f64 - 0.5;
        acc += e * e * h;
    }
    acc / (codes as f64).powi(3)
}
