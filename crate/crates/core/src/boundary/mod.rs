//! Lan–DeMets efficacy boundaries, non-binding futility boundaries, and
//! design-adjusted inference after a sequential stop.
//!
//! Boundaries are reported on the Z scale in the *oriented* direction: for a
//! one-sided design whose efficacy direction is [`Direction::Lower`], a
//! boundary value `b` means "stop when `-Z >= b`". The Brownian-scale
//! threshold at analysis `j` is `sqrt(f_j) * b_j`.

mod density;
mod inference;

pub use density::{GridSpec, Region, StoppingDensity};
pub use inference::{
    bias_adjust, confidence_interval, convexity_warning, sequential_p_value, Posthoc,
};

use serde::{Deserialize, Serialize};

use crate::drift::{DriftCurve, EndFunctionals, ShapeCondition};
use crate::normal;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sidedness {
    #[default]
    OneSided,
    /// Symmetric two-sided boundaries; masses count both tails.
    TwoSided,
}

/// Which tail of the Z statistic constitutes efficacy in a one-sided design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Upper,
    Lower,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Upper => 1.0,
            Direction::Lower => -1.0,
        }
    }
}

/// Cumulative error spending as a function of the information fraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum SpendingFunction {
    /// `2 - 2 Phi(z_{1 - a/2} / sqrt(f))`.
    OBrienFleming,
    /// `a ln(1 + (e - 1) f)`.
    Pocock,
    /// `a f^rho`.
    Power { rho: f64 },
}

impl SpendingFunction {
    pub fn cumulative(&self, total: f64, f: f64) -> f64 {
        if f <= 0.0 || total <= 0.0 {
            return 0.0;
        }
        if f >= 1.0 {
            return total;
        }
        match *self {
            SpendingFunction::OBrienFleming => {
                2.0 * normal::sf(normal::quantile(1.0 - total / 2.0) / f.sqrt())
            }
            SpendingFunction::Pocock => total * (1.0 + (std::f64::consts::E - 1.0) * f).ln(),
            SpendingFunction::Power { rho } => total * f.powf(rho),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            SpendingFunction::Power { rho } if !(*rho > 0.0) => {
                Err(Error::invalid("power spending exponent must be > 0"))
            }
            _ => Ok(()),
        }
    }
}

/// Type-II (futility) spending, used for the non-binding futility boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FutilitySpec {
    /// Total type-II error to spend.
    pub beta: f64,
    pub spending: SpendingFunction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub alpha: f64,
    #[serde(default)]
    pub sided: Sidedness,
    pub spending: SpendingFunction,
    /// Planned information fractions `f_1 < ... < f_K <= 1`.
    pub fractions: Vec<f64>,
    /// Planned r-fractions `m(t_j) / m(tau)`, needed for the constant shape.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_fractions: Option<Vec<f64>>,
    pub shape: ShapeCondition,
    /// Design alternative, log relative risk scale.
    pub beta_star: f64,
    pub v_tau: f64,
    pub m_tau: f64,
    pub n: usize,
    /// Efficacy direction for one-sided designs; defaults to the sign of
    /// `beta_star` (lower when negative).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub futility: Option<FutilitySpec>,
    #[serde(default)]
    pub grid: GridSpec,
}

impl DesignSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid("alpha must lie in (0, 1)"));
        }
        if self.fractions.is_empty() {
            return Err(Error::invalid("at least one analysis fraction is required"));
        }
        let mut prev = 0.0;
        for (j, &f) in self.fractions.iter().enumerate() {
            if !(f > prev && f <= 1.0) {
                return Err(Error::NonIncreasingInformation { analysis: j + 1 });
            }
            prev = f;
        }
        if let Some(r) = &self.r_fractions {
            if r.len() != self.fractions.len() {
                return Err(Error::invalid("r_fractions must match fractions in length"));
            }
        }
        if !(self.v_tau > 0.0 && self.m_tau > 0.0 && self.n > 0) {
            return Err(Error::invalid("v_tau, m_tau and n must be positive"));
        }
        self.spending.validate()?;
        if let Some(fut) = &self.futility {
            if !(0.0..1.0).contains(&fut.beta) {
                return Err(Error::invalid("futility beta must lie in [0, 1)"));
            }
            fut.spending.validate()?;
        }
        Ok(())
    }

    pub fn direction(&self) -> Direction {
        match self.sided {
            Sidedness::TwoSided => Direction::Upper,
            Sidedness::OneSided => self.direction.unwrap_or(if self.beta_star < 0.0 {
                Direction::Lower
            } else {
                Direction::Upper
            }),
        }
    }

    pub fn functionals(&self) -> EndFunctionals {
        EndFunctionals {
            v_tau: self.v_tau,
            m_tau: self.m_tau,
            n: self.n,
        }
    }

    pub fn drift_curve(&self) -> DriftCurve {
        DriftCurve::new(self.beta_star, self.functionals(), self.shape)
    }

    /// Design drift on the oriented Brownian scale at each planned analysis.
    pub fn oriented_drift(&self) -> Result<Vec<f64>> {
        let curve = self.drift_curve();
        let s = self.direction().sign();
        self.fractions
            .iter()
            .enumerate()
            .map(|(j, &f)| {
                let r = self.r_fractions.as_ref().map(|r| r[j]);
                Ok(s * curve.at(f, r)?)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryResult {
    pub sided: Sidedness,
    pub direction: Direction,
    pub fractions: Vec<f64>,
    /// Oriented Z-scale efficacy boundary; `null` in JSON means no stopping.
    #[serde(with = "inf_as_null::pos")]
    pub efficacy: Vec<f64>,
    /// Oriented Z-scale futility boundary; `null` means no futility stop.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "inf_as_null::opt_neg")]
    pub futility: Option<Vec<f64>>,
    /// Cumulative alpha from the spending function at each fraction.
    pub alpha_spent: Vec<f64>,
    /// Achieved null stopping mass per analysis.
    pub stop_mass: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_spent: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl BoundaryResult {
    /// Efficacy thresholds on the oriented Brownian scale.
    pub fn efficacy_brownian(&self) -> Vec<f64> {
        self.efficacy
            .iter()
            .zip(&self.fractions)
            .map(|(b, f)| b * f.sqrt())
            .collect()
    }

    /// Signed Z-scale efficacy thresholds on the raw (unoriented) scale.
    pub fn efficacy_signed(&self) -> Vec<f64> {
        let s = self.direction.sign();
        self.efficacy.iter().map(|b| s * b).collect()
    }

    /// Whether a raw Z value crosses the efficacy boundary at analysis `j`.
    pub fn crosses_efficacy(&self, j: usize, z: f64) -> bool {
        let b = self.efficacy[j - 1];
        match self.sided {
            Sidedness::OneSided => self.direction.sign() * z >= b,
            Sidedness::TwoSided => z.abs() >= b,
        }
    }

    /// Whether a raw Z value falls at or below the futility boundary.
    pub fn crosses_futility(&self, j: usize, z: f64) -> bool {
        self.futility
            .as_ref()
            .is_some_and(|a| self.direction.sign() * z <= a[j - 1])
    }
}

/// Stop mass at oriented Brownian threshold `c` under the given sidedness.
fn stop_mass(d: &StoppingDensity, sided: Sidedness, j: usize, c: f64) -> f64 {
    match sided {
        Sidedness::OneSided => d.tail_mass(j, c),
        Sidedness::TwoSided => {
            if c <= 0.0 {
                d.total_mass(j)
            } else {
                d.tail_mass(j, c) + d.lower_mass(j, -c)
            }
        }
    }
}

fn continuation(sided: Sidedness, c: f64) -> Region {
    match sided {
        Sidedness::OneSided => Region::below(c),
        Sidedness::TwoSided => Region { lo: -c, hi: c },
    }
}

/// Bisection for a root of a monotone function on `[lo, hi]`; `increasing`
/// gives the direction. Stops when the bracket or the residual is below the
/// tolerances.
pub(crate) fn bisect<F>(mut g: F, mut lo: f64, mut hi: f64, increasing: bool, tol: f64) -> f64
where
    F: FnMut(f64) -> f64,
{
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let v = g(mid);
        if v.abs() < tol || hi - lo < 1e-13 {
            return mid;
        }
        if (v > 0.0) == increasing {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

const PROB_TOL: f64 = 1e-13;
const Z_MAX: f64 = 40.0;

/// Lan–DeMets efficacy boundary under the null drift, at the planned
/// fractions.
pub fn efficacy_boundary(spec: &DesignSpec) -> Result<BoundaryResult> {
    spec.validate()?;
    efficacy_at(spec, &spec.fractions)
}

/// Efficacy boundary at arbitrary (e.g. observed) fractions.
pub fn efficacy_at(spec: &DesignSpec, fractions: &[f64]) -> Result<BoundaryResult> {
    let k = fractions.len();
    let mut d = StoppingDensity::new(fractions, &vec![0.0; k], spec.grid)?;
    let mut efficacy = Vec::with_capacity(k);
    let mut alpha_spent = Vec::with_capacity(k);
    let mut masses = Vec::with_capacity(k);
    let mut warnings = Vec::new();
    let mut prev = 0.0;
    for (idx, &f) in fractions.iter().enumerate() {
        let j = idx + 1;
        let cum = spec.spending.cumulative(spec.alpha, f);
        let inc = cum - prev;
        let sf = f.sqrt();
        let b = if inc <= PROB_TOL {
            warnings.push(format!(
                "analysis {j}: spending increment {inc:.3e} is negligible, no efficacy stopping"
            ));
            f64::INFINITY
        } else {
            let lo = match spec.sided {
                Sidedness::OneSided => -Z_MAX,
                Sidedness::TwoSided => 0.0,
            };
            let available = stop_mass(&d, spec.sided, j, lo * sf);
            if available < inc {
                return Err(Error::NoRoot(format!(
                    "analysis {j}: spending increment {inc:.6} exceeds remaining mass {available:.6}"
                )));
            }
            bisect(
                |b| stop_mass(&d, spec.sided, j, b * sf) - inc,
                lo,
                Z_MAX,
                false,
                PROB_TOL,
            )
        };
        masses.push(if b.is_finite() {
            stop_mass(&d, spec.sided, j, b * sf)
        } else {
            0.0
        });
        efficacy.push(b);
        alpha_spent.push(cum);
        prev = cum;
        d.close(continuation(spec.sided, b * sf))?;
    }
    Ok(BoundaryResult {
        sided: spec.sided,
        direction: spec.direction(),
        fractions: fractions.to_vec(),
        efficacy,
        futility: None,
        alpha_spent,
        stop_mass: masses,
        beta_spent: None,
        warnings,
    })
}

/// Non-binding futility boundary, computed under the design drift after the
/// efficacy boundary and without altering it.
pub fn futility_boundary(
    spec: &DesignSpec,
    efficacy: &BoundaryResult,
    beta_spend: &FutilitySpec,
) -> Result<BoundaryResult> {
    spec.validate()?;
    if spec.sided == Sidedness::TwoSided {
        return Err(Error::invalid("futility boundaries are supported for one-sided designs only"));
    }
    let fractions = &efficacy.fractions;
    let drift = spec.oriented_drift()?;
    let mut d = StoppingDensity::new(fractions, &drift, spec.grid)?;
    let mut futility = Vec::with_capacity(fractions.len());
    let mut beta_spent = Vec::with_capacity(fractions.len());
    let mut prev = 0.0;
    for (idx, &f) in fractions.iter().enumerate() {
        let j = idx + 1;
        let sf = f.sqrt();
        let b = efficacy.efficacy[idx];
        let cum = beta_spend.spending.cumulative(beta_spend.beta, f);
        let inc = cum - prev;
        let a = if beta_spend.beta == 0.0 || inc <= 0.0 {
            f64::NEG_INFINITY
        } else {
            let hi = if b.is_finite() { b } else { Z_MAX };
            if d.lower_mass(j, hi * sf) < inc {
                let a = bisect(|a| d.lower_mass(j, a * sf) - inc, -Z_MAX, 2.0 * Z_MAX, true, PROB_TOL);
                return Err(Error::FutilityMeetsEfficacy {
                    analysis: j,
                    futility: a,
                    efficacy: b,
                });
            }
            bisect(|a| d.lower_mass(j, a * sf) - inc, -Z_MAX, hi, true, PROB_TOL)
        };
        if a >= b {
            return Err(Error::FutilityMeetsEfficacy {
                analysis: j,
                futility: a,
                efficacy: b,
            });
        }
        futility.push(a);
        beta_spent.push(cum);
        prev = cum;
        d.close(Region {
            lo: a * sf,
            hi: b * sf,
        })?;
    }
    Ok(BoundaryResult {
        futility: Some(futility),
        beta_spent: Some(beta_spent),
        ..efficacy.clone()
    })
}

/// Efficacy boundary, plus the futility boundary when the design asks for one.
pub fn design_boundaries(spec: &DesignSpec) -> Result<BoundaryResult> {
    let eff = efficacy_boundary(spec)?;
    match &spec.futility {
        Some(fut) => futility_boundary(spec, &eff, fut),
        None => Ok(eff),
    }
}

mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    fn to_opt(v: &[f64]) -> Vec<Option<f64>> {
        v.iter().map(|x| x.is_finite().then_some(*x)).collect()
    }

    pub mod pos {
        use super::*;

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            to_opt(v).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            let v = Vec::<Option<f64>>::deserialize(d)?;
            Ok(v.into_iter().map(|x| x.unwrap_or(f64::INFINITY)).collect())
        }
    }

    pub mod opt_neg {
        use super::*;

        pub fn serialize<S: Serializer>(v: &Option<Vec<f64>>, s: S) -> Result<S::Ok, S::Error> {
            v.as_ref().map(|v| to_opt(v)).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<f64>>, D::Error> {
            let v = Option::<Vec<Option<f64>>>::deserialize(d)?;
            Ok(v.map(|v| v.into_iter().map(|x| x.unwrap_or(f64::NEG_INFINITY)).collect()))
        }
    }
}
