//! Standard normal helpers.

use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
pub fn pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Density of N(0, var) at `x`.
pub fn pdf_var(x: f64, var: f64) -> f64 {
    let sd = var.sqrt();
    pdf(x / sd) / sd
}

pub fn cdf(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    if x == f64::INFINITY {
        return 1.0;
    }
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Upper tail `1 - Φ(x)`, accurate far into the right tail.
pub fn sf(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        return 1.0;
    }
    if x == f64::INFINITY {
        return 0.0;
    }
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Inverse of the standard normal CDF.
pub fn quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let mut x = std.inverse_cdf(p);
    // two Newton polish steps against the erfc-based cdf
    for _ in 0..2 {
        let d = pdf(x);
        if d > 0.0 {
            x -= (cdf(x) - p) / d;
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        assert!((pdf(0.0) - 0.398942).abs() < 1e-6);
        assert!((pdf_var(0.0, 0.25) - 0.797885).abs() < 1e-6);
        assert!((sf(1.644854) - 0.05).abs() < 1e-6);
        assert!((quantile(0.975) - 1.959964).abs() < 1e-6);
        assert!((quantile(0.05) + 1.644854).abs() < 1e-6);
        assert_eq!(cdf(f64::NEG_INFINITY), 0.0);
        assert_eq!(sf(f64::INFINITY), 0.0);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &p in &[1e-10, 1e-4, 0.01, 0.3, 0.5, 0.77, 0.999] {
            assert!((cdf(quantile(p)) - p).abs() < 1e-14 * p.max(1e-3) / 1e-3);
        }
    }
}
