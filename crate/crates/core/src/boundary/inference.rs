//! Inference after stopping at analysis `J` under the stagewise ordering:
//! `(j, x) > (k, y)` iff `j < k`, or `j == k` and `x > y`.
//!
//! Everything here is computed under the null density, with the efficacy
//! boundary as the only stopping rule (futility is non-binding) and with the
//! observed information fractions in place of the planned ones.

use crate::drift::{BetaStarEstimate, ShapeCondition};
use crate::{Error, Result};

use super::{bisect, continuation, stop_mass, BoundaryResult, DesignSpec, Sidedness, StoppingDensity};

const SEARCH_HALF_WIDTH: f64 = 12.0;

/// Null stopping density through analysis `J`, ready for p-values,
/// confidence intervals, and the conditional-mean bias adjustment.
#[derive(Debug, Clone)]
pub struct Posthoc {
    sided: Sidedness,
    sign: f64,
    alpha: f64,
    stop_at: usize,
    fractions: Vec<f64>,
    density: StoppingDensity,
    prior_spent: f64,
}

impl Posthoc {
    /// `observed` holds the information fractions `f_{n,1..J}`; `J` is its
    /// length. Under the constant shape `observed_r` must hold `r_{n,1..J}`.
    pub fn new(
        spec: &DesignSpec,
        efficacy: &BoundaryResult,
        observed: &[f64],
        observed_r: Option<&[f64]>,
    ) -> Result<Self> {
        let stop_at = observed.len();
        if stop_at == 0 || stop_at > efficacy.efficacy.len() {
            return Err(Error::invalid(format!(
                "stopping analysis {stop_at} outside 1..={}",
                efficacy.efficacy.len()
            )));
        }
        let divisor = match spec.shape {
            ShapeCondition::OptimalWeight => observed[0],
            ShapeCondition::Constant => observed_r
                .and_then(|r| r.first().copied())
                .ok_or(Error::RFractionRequired)?,
        };
        if !(divisor > 0.0) {
            return Err(Error::NoInformation);
        }
        let mut density = StoppingDensity::new(observed, &vec![0.0; stop_at], spec.grid)?
            .with_conditional_mean(divisor);
        let mut prior_spent = 0.0;
        for j in 1..stop_at {
            let c = efficacy.efficacy[j - 1] * observed[j - 1].sqrt();
            if c.is_finite() {
                prior_spent += stop_mass(&density, efficacy.sided, j, c);
            }
            density.close(continuation(efficacy.sided, c))?;
        }
        Ok(Self {
            sided: efficacy.sided,
            sign: efficacy.direction.sign(),
            alpha: spec.alpha,
            stop_at,
            fractions: observed.to_vec(),
            density,
            prior_spent,
        })
    }

    pub fn stop_at(&self) -> usize {
        self.stop_at
    }

    /// Null probability of stopping for efficacy before analysis `J`.
    pub fn prior_spent(&self) -> f64 {
        self.prior_spent
    }

    fn oriented(&self, x: f64) -> f64 {
        self.sign * x
    }

    fn tail(&self, y: f64) -> f64 {
        match self.sided {
            Sidedness::OneSided => self.density.tail_mass(self.stop_at, y),
            Sidedness::TwoSided => stop_mass(&self.density, self.sided, self.stop_at, y.abs()),
        }
    }

    /// Stagewise-ordering p-value for the raw Brownian-scale value `x`.
    pub fn p_value(&self, x: f64) -> f64 {
        (self.tail(self.oriented(x)) + self.prior_spent).clamp(0.0, 1.0)
    }

    /// Brownian-scale critical value `x_u` leaving the remaining type-I error
    /// in the tail at analysis `J` (half of it, one tail, for one-sided
    /// designs).
    pub fn critical_value(&self) -> Result<f64> {
        let remaining = self.alpha - self.prior_spent;
        let target = match self.sided {
            Sidedness::OneSided => remaining / 2.0,
            Sidedness::TwoSided => remaining,
        };
        if !(target > 0.0) {
            return Err(Error::NoRoot(format!(
                "no type-I error remains at analysis {} (prior spent {:.6})",
                self.stop_at, self.prior_spent
            )));
        }
        let lo_bound = match self.sided {
            Sidedness::OneSided => -1.0,
            Sidedness::TwoSided => 0.0,
        };
        for width in [SEARCH_HALF_WIDTH, 4.0 * SEARCH_HALF_WIDTH] {
            let lo = lo_bound * width;
            if self.tail(lo) >= target && self.tail(width) <= target {
                return Ok(bisect(|x| self.tail(x) - target, lo, width, false, 1e-13));
            }
        }
        Err(Error::NoRoot(format!(
            "critical value for tail mass {target:.3e} not bracketed at analysis {}",
            self.stop_at
        )))
    }

    /// Design-adjusted interval `centre ± (x_u / sqrt(f_J)) sqrt(mse)`.
    pub fn interval_around(&self, centre: f64, mse: f64) -> Result<(f64, f64)> {
        let x_u = self.critical_value()?;
        let half = x_u / self.fractions[self.stop_at - 1].sqrt() * mse.sqrt();
        Ok((centre - half, centre + half))
    }

    /// Conditional-mean drift estimate `zeta(J, x)` on the raw scale.
    pub fn zeta(&self, x: f64) -> Result<f64> {
        let y = self.oriented(x);
        self.density
            .conditional_mean(self.stop_at, y)
            .map(|z| self.sign * z)
            .ok_or_else(|| Error::NoRoot(format!("null density vanishes at x = {x}")))
    }
}

/// Stagewise p-value at `(J, x)` with `J = observed.len()`.
pub fn sequential_p_value(
    spec: &DesignSpec,
    efficacy: &BoundaryResult,
    observed: &[f64],
    x: f64,
) -> Result<f64> {
    let r = spec.r_fractions.as_deref();
    Ok(Posthoc::new(spec, efficacy, observed, r)?.p_value(x))
}

/// Design-adjusted interval for `estimate` after stopping at `J`.
pub fn confidence_interval(
    spec: &DesignSpec,
    efficacy: &BoundaryResult,
    observed: &[f64],
    estimate: &BetaStarEstimate,
) -> Result<(f64, f64)> {
    let r = spec.r_fractions.as_deref();
    Posthoc::new(spec, efficacy, observed, r)?.interval_around(estimate.beta_hat, estimate.mse)
}

/// Bias-adjusted Brownian-scale drift estimate `zeta(J, x)`.
pub fn bias_adjust(
    spec: &DesignSpec,
    efficacy: &BoundaryResult,
    observed: &[f64],
    observed_r: Option<&[f64]>,
    x: f64,
) -> Result<f64> {
    Posthoc::new(spec, efficacy, observed, observed_r)?.zeta(x)
}

/// Heuristic check for efficacy boundaries that rise across analyses, which
/// can make the rejection region non-convex. Convexity cannot be certified.
pub fn convexity_warning(efficacy: &BoundaryResult) -> Option<String> {
    let finite: Vec<(usize, f64)> = efficacy
        .efficacy
        .iter()
        .copied()
        .enumerate()
        .filter(|(_, b)| b.is_finite())
        .collect();
    finite.windows(2).find(|w| w[1].1 > w[0].1 + 0.1).map(|w| {
        format!(
            "efficacy boundary rises from {:.4} at analysis {} to {:.4} at analysis {}; \
             the stagewise ordering assumes a convex rejection region",
            w[0].1,
            w[0].0 + 1,
            w[1].1,
            w[1].0 + 1
        )
    })
}

#[cfg(test)]
mod tests {
    use super::super::{efficacy_boundary, GridSpec, SpendingFunction};
    use super::*;
    use crate::normal;

    fn spec(alpha: f64, fr: &[f64], sided: Sidedness) -> DesignSpec {
        DesignSpec {
            alpha,
            sided,
            spending: SpendingFunction::OBrienFleming,
            fractions: fr.to_vec(),
            r_fractions: None,
            shape: ShapeCondition::OptimalWeight,
            beta_star: 0.2,
            v_tau: 0.02,
            m_tau: 0.02,
            n: 10_000,
            direction: None,
            futility: None,
            grid: GridSpec::default(),
        }
    }

    #[test]
    fn single_look_p_value_and_interval() {
        let s = spec(0.05, &[1.0], Sidedness::OneSided);
        let b = efficacy_boundary(&s).unwrap();
        let p = sequential_p_value(&s, &b, &[1.0], 1.644854).unwrap();
        assert!((p - 0.05).abs() < 1e-6);
        assert!(sequential_p_value(&s, &b, &[1.0], 50.0).unwrap() < 1e-300);

        let est = BetaStarEstimate { beta_hat: -0.1, mse: 0.0004, analysis: 1, scale_factor: 1.0 };
        let (lo, hi) = confidence_interval(&s, &b, &[1.0], &est).unwrap();
        let z = normal::quantile(0.975);
        assert!((lo - (-0.1 - z * 0.02)).abs() < 1e-9);
        assert!((hi - (-0.1 + z * 0.02)).abs() < 1e-9);

        let two = spec(0.05, &[1.0], Sidedness::TwoSided);
        let b2 = efficacy_boundary(&two).unwrap();
        let x_u = Posthoc::new(&two, &b2, &[1.0], None).unwrap().critical_value().unwrap();
        assert!((x_u - 1.959964).abs() < 1e-6);

        let degenerate = BetaStarEstimate { mse: 0.0, ..est };
        assert_eq!(confidence_interval(&s, &b, &[1.0], &degenerate).unwrap(), (-0.1, -0.1));
    }

    #[test]
    fn p_value_at_boundary_equals_cumulative_spending() {
        let fr = [0.2, 0.4, 0.6, 0.8, 1.0];
        let s = spec(0.025, &fr, Sidedness::OneSided);
        let b = efficacy_boundary(&s).unwrap();
        for j in 1..=5 {
            let x = b.efficacy[j - 1] * fr[j - 1].sqrt();
            let p = sequential_p_value(&s, &b, &fr[..j], x).unwrap();
            assert!((p - b.alpha_spent[j - 1]).abs() < 1e-6, "j={j}: {p}");
        }
    }

    #[test]
    fn stagewise_ordering() {
        let fr = [0.3, 0.65, 1.0];
        let s = spec(0.025, &fr, Sidedness::OneSided);
        let b = efficacy_boundary(&s).unwrap();
        let ph: Vec<Posthoc> = (1..=3).map(|j| Posthoc::new(&s, &b, &fr[..j], None).unwrap()).collect();
        // strictly decreasing in x at fixed J
        for p in &ph {
            let vals: Vec<f64> = (-20..=20).map(|k| p.p_value(k as f64 * 0.1)).collect();
            assert!(vals.windows(2).all(|w| w[1] < w[0]));
        }
        // stopping earlier at the boundary beats any later outcome
        for j in 1..3 {
            let at_b = ph[j - 1].p_value(b.efficacy[j - 1] * fr[j - 1].sqrt());
            let beyond = b.efficacy[j] * fr[j].sqrt() + 0.5;
            assert!(at_b < ph[j].p_value(beyond));
        }
        // p-value of the second look equals the direct sum of masses
        let d = &ph[1];
        let direct = d.density.tail_mass(2, 1.0) + d.density.tail_mass(1, b.efficacy[0] * fr[0].sqrt());
        assert!((d.p_value(1.0) - direct).abs() < 1e-15);
    }

    #[test]
    fn zeta_first_look() {
        let s = spec(0.025, &[0.5, 1.0], Sidedness::OneSided);
        let b = efficacy_boundary(&s).unwrap();
        assert_eq!(bias_adjust(&s, &b, &[0.5], None, 0.5).unwrap(), 1.0);
        assert_eq!(bias_adjust(&s, &b, &[0.5], None, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn zeta_shrinks_after_truncation() {
        // paths reaching look 2 had X_1 below the boundary, so the
        // conditional mean sits below the naive x / f_2 for large x
        let fr = [0.5, 1.0];
        let s = spec(0.025, &fr, Sidedness::OneSided);
        let b = efficacy_boundary(&s).unwrap();
        let z = bias_adjust(&s, &b, &fr, None, 3.0).unwrap();
        assert!(z < 3.0);
    }

    #[test]
    fn lower_direction_mirrors_upper() {
        let fr = [0.4, 1.0];
        let up = spec(0.025, &fr, Sidedness::OneSided);
        let mut down = up.clone();
        down.beta_star = -0.2;
        let bu = efficacy_boundary(&up).unwrap();
        let bd = efficacy_boundary(&down).unwrap();
        let pu = Posthoc::new(&up, &bu, &fr, None).unwrap();
        let pd = Posthoc::new(&down, &bd, &fr, None).unwrap();
        assert!((pu.p_value(1.7) - pd.p_value(-1.7)).abs() < 1e-14);
        assert!((pu.zeta(2.1).unwrap() + pd.zeta(-2.1).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn constant_shape_needs_r() {
        let mut s = spec(0.025, &[0.5, 1.0], Sidedness::OneSided);
        s.shape = ShapeCondition::Constant;
        let b = efficacy_boundary(&s).unwrap();
        assert_eq!(Posthoc::new(&s, &b, &[0.5], None).unwrap_err(), Error::RFractionRequired);
        let z = bias_adjust(&s, &b, &[0.5], Some(&[0.4]), 0.5).unwrap();
        assert!((z - 1.25).abs() < 1e-15);
    }

    #[test]
    fn convexity_heuristic() {
        let s = spec(0.025, &[0.5, 1.0], Sidedness::OneSided);
        let mut b = efficacy_boundary(&s).unwrap();
        assert!(convexity_warning(&b).is_none());
        b.efficacy[1] = b.efficacy[0] + 1.0;
        assert!(convexity_warning(&b).is_some());
    }
}
