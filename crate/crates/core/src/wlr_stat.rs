//! Weighted log-rank statistic: weights, cross-moment brackets against the
//! empirical information measure, and the Z / Brownian scales.

use serde::{Deserialize, Serialize};

use crate::survival_data::{EventTable, StepSurvival};
use crate::{Error, Result};

fn one() -> f64 {
    1.0
}

/// A deterministic, bounded, non-negative weight `Q(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum WeightFunction {
    Constant {
        #[serde(default = "one")]
        value: f64,
    },
    /// `Q(t) = min(t / t_c, 1)`.
    RampPlateau { t_c: f64 },
    /// `S(t-)^rho (1 - S(t-))^gamma` with a pooled survival curve. When the
    /// curve is omitted it is estimated from the data, which makes the weight
    /// data-dependent.
    FlemingHarrington {
        rho: f64,
        gamma: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        survival: Option<StepSurvival>,
    },
    /// `factor * inner(t)`.
    Scaled {
        factor: f64,
        inner: Box<WeightFunction>,
    },
}

impl WeightFunction {
    pub fn ramp_plateau(t_c: f64) -> Self {
        WeightFunction::RampPlateau { t_c }
    }

    pub fn constant() -> Self {
        WeightFunction::Constant { value: 1.0 }
    }

    pub fn scaled(self, factor: f64) -> Self {
        WeightFunction::Scaled {
            factor,
            inner: Box::new(self),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            WeightFunction::Constant { value } if !(value.is_finite() && *value >= 0.0) => {
                Err(Error::invalid("constant weight must be finite and >= 0"))
            }
            WeightFunction::RampPlateau { t_c } if !(t_c.is_finite() && *t_c > 0.0) => {
                Err(Error::invalid("ramp-plateau t_c must be > 0"))
            }
            WeightFunction::FlemingHarrington { rho, gamma, .. }
                if !(*rho >= 0.0 && *gamma >= 0.0) =>
            {
                Err(Error::invalid("Fleming-Harrington rho and gamma must be >= 0"))
            }
            WeightFunction::Scaled { factor, inner } => {
                if !(factor.is_finite() && *factor > 0.0) {
                    return Err(Error::invalid("weight scale factor must be > 0"));
                }
                inner.validate()
            }
            _ => Ok(()),
        }
    }

    /// Fills in a missing Fleming–Harrington survival curve with the pooled
    /// Kaplan–Meier estimate from `table`, returning a warning when it does.
    pub fn resolve(&self, table: &EventTable) -> (WeightFunction, Option<String>) {
        match self {
            WeightFunction::FlemingHarrington {
                rho,
                gamma,
                survival: None,
            } => (
                WeightFunction::FlemingHarrington {
                    rho: *rho,
                    gamma: *gamma,
                    survival: Some(table.pooled_km()),
                },
                Some(
                    "Fleming-Harrington weight uses the data-dependent pooled Kaplan-Meier \
                     estimate; the weight is not deterministic"
                        .to_string(),
                ),
            ),
            WeightFunction::Scaled { factor, inner } => {
                let (w, warn) = inner.resolve(table);
                (w.scaled(*factor), warn)
            }
            other => (other.clone(), None),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            WeightFunction::Constant { value } => *value,
            WeightFunction::RampPlateau { t_c } => (t / t_c).clamp(0.0, 1.0),
            WeightFunction::FlemingHarrington {
                rho,
                gamma,
                survival,
            } => {
                let s = survival.as_ref().map_or(1.0, |c| c.left_limit(t));
                s.powf(*rho) * (1.0 - s).powf(*gamma)
            }
            WeightFunction::Scaled { factor, inner } => factor * inner.eval(t),
        }
    }

    /// Times where the weight is not smooth (step times included).
    pub fn knots(&self) -> Vec<f64> {
        match self {
            WeightFunction::Constant { .. } => Vec::new(),
            WeightFunction::RampPlateau { t_c } => vec![*t_c],
            WeightFunction::FlemingHarrington { survival, .. } => {
                survival.as_ref().map_or_else(Vec::new, |s| s.times.clone())
            }
            WeightFunction::Scaled { inner, .. } => inner.knots(),
        }
    }

    fn is_deterministic(&self) -> bool {
        match self {
            WeightFunction::FlemingHarrington { survival, .. } => survival.is_some(),
            WeightFunction::Scaled { inner, .. } => inner.is_deterministic(),
            _ => true,
        }
    }

    /// Rejects weights that depend on the data.
    pub fn require_deterministic(&self) -> Result<()> {
        if self.is_deterministic() {
            Ok(())
        } else {
            Err(Error::invalid(
                "a Fleming-Harrington weight needs an explicit survival curve here",
            ))
        }
    }
}

/// Empirical cross moment `<psi1 | IF_n | psi2>_t`:
/// `sum_{xi <= t} psi1(xi) psi2(xi) E_n (1 - E_n) dN(xi) / n`.
pub fn bracket<F, G>(psi1: F, psi2: G, table: &EventTable, t: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    let n = table.n() as f64;
    let mut acc = 0.0;
    for r in table.rows_through(t) {
        let e = r.prop_at_risk()?;
        acc += psi1(r.time) * psi2(r.time) * e * (1.0 - e) * r.events as f64;
    }
    Ok(acc / n)
}

/// `sqrt(n)`-normalized weighted score `U_n(t)`.
pub fn score(table: &EventTable, q: &WeightFunction, t: f64) -> Result<f64> {
    let (q, _) = q.resolve(table);
    score_resolved(table, &q, t)
}

fn score_resolved(table: &EventTable, q: &WeightFunction, t: f64) -> Result<f64> {
    let mut acc = 0.0;
    for r in table.rows_through(t) {
        let e = r.prop_at_risk()?;
        acc += q.eval(r.time) * (r.events_trt as f64 - e * r.events as f64);
    }
    Ok(acc / (table.n() as f64).sqrt())
}

/// The statistic at one analysis, on both scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisState {
    /// 1-based analysis number; 0 when not assigned.
    pub analysis: usize,
    pub cutoff: f64,
    /// `U_n(t)`.
    pub score: f64,
    /// `V_n(t) = <Q|IF_n|Q>_t`.
    pub variance: f64,
    /// `m_n(t) = <Q|IF_n|1>_t`.
    pub first_moment: f64,
    /// `Z_n(t) = U / sqrt(V(t))`.
    pub z: f64,
    /// `X_n(t) = U / sqrt(v(tau))`.
    pub x: f64,
    /// `V(t) / v(tau)`, clamped to 1.
    pub info_frac: f64,
    /// The `v(tau)` used for the Brownian scale.
    pub v_tau: f64,
    pub n: usize,
    pub events: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl AnalysisState {
    /// `r_n(t; tau) = m_n(t) / m(tau)`.
    pub fn r_fraction(&self, m_tau: f64) -> f64 {
        (self.first_moment / m_tau).clamp(0.0, 1.0)
    }
}

/// Score, variance, first moment and both scales at cutoff `t`, with the
/// Brownian scale normalized by `v_tau`.
pub fn statistics(
    table: &EventTable,
    q: &WeightFunction,
    t: f64,
    v_tau: f64,
) -> Result<AnalysisState> {
    if !(v_tau > 0.0 && v_tau.is_finite()) {
        return Err(Error::invalid(format!("v_tau must be > 0, got {v_tau}")));
    }
    q.validate()?;
    let (q, warn) = q.resolve(table);
    let mut warnings: Vec<String> = warn.into_iter().collect();
    let u = score_resolved(table, &q, t)?;
    let v = bracket(|s| q.eval(s), |s| q.eval(s), table, t)?;
    let m = bracket(|s| q.eval(s), |_| 1.0, table, t)?;
    let z = if v > 0.0 {
        u / v.sqrt()
    } else if u == 0.0 {
        0.0
    } else {
        return Err(Error::DegenerateVariance);
    };
    let mut info_frac = v / v_tau;
    if info_frac > 1.0 {
        warnings.push(format!(
            "observed variance {v:.6e} exceeds projected v(tau) {v_tau:.6e}; information fraction clamped to 1"
        ));
        info_frac = 1.0;
    }
    Ok(AnalysisState {
        analysis: 0,
        cutoff: t,
        score: u,
        variance: v,
        first_moment: m,
        z,
        x: u / v_tau.sqrt(),
        info_frac,
        v_tau,
        n: table.n(),
        events: table.rows_through(t).iter().map(|r| r.events as u64).sum(),
        warnings,
    })
}
