//! Fixtures shared by the benchmarks.

use nfl_core::DiagGaussian;

/// A pair of diagonal Gaussians with unequal means and variances.
pub fn gaussian_pair(dim: usize) -> (DiagGaussian, DiagGaussian) {
    let m2: Vec<f64> = (0..dim).map(|i| 0.3 + 0.2 * i as f64).collect();
    let v1: Vec<f64> = (0..dim).map(|i| 1.0 + 0.5 * i as f64).collect();
    let v2: Vec<f64> = (0..dim).map(|i| 0.6 + 0.1 * i as f64).collect();
    (DiagGaussian::new(vec![0.0; dim], v1).expect("valid"), DiagGaussian::new(m2, v2).expect("valid"))
}

/// Log-likelihoods over `n` candidates with a single clear winner.
pub fn log_likelihoods(n: usize) -> Vec<f64> {
    (0..n).map(|i| -((i as f64 - 3.0).powi(2))).collect()
}
