//! Limiting null distributions of the test statistics.

use statrs::distribution::{ContinuousCDF, Normal};

/// CDF of `χ²(1)`: `2Φ(√x) - 1`, zero for `x <= 0`.
pub fn chi_square_1_cdf(x: f64) -> f64 {
    if !(x > 0.0) {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    let phi = Normal::new(0.0, 1.0).expect("standard normal").cdf(x.sqrt());
    (2.0 * phi - 1.0).clamp(0.0, 1.0)
}

/// CDF of `sup_{0<=t<=1} B(t)²` for a Brownian bridge `B`:
/// `1 - 2 Σ_{j>=1} (-1)^{j-1} exp(-2 j² x)`.
pub fn kolmogorov_sq_cdf(x: f64) -> f64 {
    if !(x > 0.0) {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    // small x: the alternating series converges slowly; use the theta-dual
    // form sqrt(2π/x) Σ exp(-(2j-1)² π² / (8x)) with t = sqrt(x)
    if x < 0.5 {
        let t = x.sqrt();
        let c = std::f64::consts::PI * std::f64::consts::PI / (8.0 * x);
        let mut sum = 0.0;
        for j in 1..=64 {
            let odd = (2 * j - 1) as f64;
            let term = (-odd * odd * c).exp();
            sum += term;
            if term < 1e-17 {
                break;
            }
        }
        return ((2.0 * std::f64::consts::PI).sqrt() / t * sum).clamp(0.0, 1.0);
    }
    let mut sum = 0.0;
    for j in 1..=1000 {
        let jf = j as f64;
        let term = (-2.0 * jf * jf * x).exp();
        sum += if j % 2 == 1 { term } else { -term };
        if term < 1e-12 {
            break;
        }
    }
    (1.0 - 2.0 * sum).clamp(0.0, 1.0)
}
