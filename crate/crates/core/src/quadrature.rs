//! Numerical integration helpers shared by the projection cross-check and
//! the simulation's limiting functionals.

/// Integrates `f` over `[a, b]`, splitting at every interior breakpoint so
/// that kinks in the integrand fall on panel edges.
pub fn integrate<F>(f: F, a: f64, b: f64, breaks: &[f64], tol: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    if b <= a {
        return 0.0;
    }
    let mut knots: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|&x| x > a && x < b)
        .collect();
    knots.push(a);
    knots.push(b);
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    knots
        .windows(2)
        .map(|w| quadrature::double_exponential::integrate(&f, w[0], w[1], tol).integral)
        .sum()
}

/// Composite Simpson weights for `n` (odd, >= 3) equally spaced nodes with
/// spacing `step`. With `n == 1` the single weight is zero.
pub fn simpson_weights(n: usize, step: f64) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => {
            debug_assert!(n % 2 == 1, "Simpson needs an odd node count");
            (0..n)
                .map(|i| {
                    let c = if i == 0 || i == n - 1 {
                        1.0
                    } else if i % 2 == 1 {
                        4.0
                    } else {
                        2.0
                    };
                    c * step / 3.0
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinked_integrand() {
        let f = |x: f64| (x - 1.0).abs();
        let v = integrate(f, 0.0, 3.0, &[1.0], 1e-12);
        assert!((v - 2.5).abs() < 1e-12);
    }

    #[test]
    fn simpson_exact_on_cubics() {
        let n = 11;
        let h = 0.2;
        let w = simpson_weights(n, h);
        let s: f64 = (0..n).map(|i| w[i] * (i as f64 * h).powi(3)).sum();
        assert!((s - 2f64.powi(4) / 4.0).abs() < 1e-12);
    }
}
