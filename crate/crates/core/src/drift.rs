//! Drift of the Brownian-scale statistic and estimators of the weighted
//! average log relative risk `beta*`.
//!
//! Two shape conditions are supported for `q(t) = beta(t) / beta*`:
//! proportional to the weight (`q = K Q`, drift linear in the information
//! fraction) and constant (`q = 1`, drift linear in `r(t) = m(t) / m(tau)`).

use serde::{Deserialize, Serialize};

use crate::survival_data::EventTable;
use crate::wlr_stat::{bracket, AnalysisState, WeightFunction};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeCondition {
    /// `q = K Q`.
    OptimalWeight,
    /// `q = 1`.
    Constant,
}

/// End-of-trial functionals `v(tau) = <Q|IF|Q>_tau` and `m(tau) = <Q|IF|1>_tau`
/// together with the sample size they are paired with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EndFunctionals {
    pub v_tau: f64,
    pub m_tau: f64,
    pub n: usize,
}

impl EndFunctionals {
    /// Uses the observed brackets of a final-analysis state.
    pub fn observed(state: &AnalysisState) -> Self {
        Self {
            v_tau: state.variance,
            m_tau: state.first_moment,
            n: state.n,
        }
    }

    /// `sqrt(v) / (sqrt(n) m)`: converts a Brownian-scale slope into `beta*`.
    pub fn scale_factor(&self) -> Result<f64> {
        if self.m_tau == 0.0 {
            return Err(Error::DegenerateFirstMoment);
        }
        Ok(self.v_tau.sqrt() / ((self.n as f64).sqrt() * self.m_tau))
    }

    /// `m / sqrt(v)`: drift at tau per unit `sqrt(n) beta*`.
    pub fn drift_ratio(&self) -> f64 {
        self.m_tau / self.v_tau.sqrt()
    }
}

/// The constant `K = <Q|IF_n|1>_tau / <Q|IF_n|Q>_tau` computed from a table.
pub fn proportionality_constant(table: &EventTable, q: &WeightFunction, tau: f64) -> Result<f64> {
    let m = bracket(|t| q.eval(t), |_| 1.0, table, tau)?;
    let v = bracket(|t| q.eval(t), |t| q.eval(t), table, tau)?;
    if v == 0.0 {
        return Err(Error::DegenerateVariance);
    }
    Ok(m / v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftCurve {
    /// Local-alternative slope `sqrt(n) beta*`.
    pub b_star: f64,
    pub v_tau: f64,
    pub m_tau: f64,
    pub shape: ShapeCondition,
}

impl DriftCurve {
    pub fn new(beta_star: f64, functionals: EndFunctionals, shape: ShapeCondition) -> Self {
        Self {
            b_star: (functionals.n as f64).sqrt() * beta_star,
            v_tau: functionals.v_tau,
            m_tau: functionals.m_tau,
            shape,
        }
    }

    /// `mu(tau) = (m / sqrt(v)) sqrt(n) beta*`.
    pub fn at_end(&self) -> f64 {
        self.m_tau / self.v_tau.sqrt() * self.b_star
    }

    /// Drift at an analysis. The optimal-weight shape uses the information
    /// fraction; the constant shape uses the r-fraction.
    pub fn at(&self, info_frac: f64, r_frac: Option<f64>) -> Result<f64> {
        let frac = match self.shape {
            ShapeCondition::OptimalWeight => info_frac,
            ShapeCondition::Constant => r_frac.ok_or(Error::RFractionRequired)?,
        };
        Ok(self.at_end() * frac)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaStarEstimate {
    pub beta_hat: f64,
    pub mse: f64,
    pub analysis: usize,
    pub scale_factor: f64,
}

impl BetaStarEstimate {
    pub fn relative_risk(&self) -> f64 {
        self.beta_hat.exp()
    }
}

/// Estimate at the scheduled end, using the state's own brackets as the
/// end-of-trial functionals.
pub fn estimate_at_end(state: &AnalysisState) -> Result<BetaStarEstimate> {
    let fun = EndFunctionals::observed(state);
    let scale = fun.scale_factor()?;
    // X_n(tau) with the observed V_n(tau) as normalizer
    let x = if state.variance > 0.0 {
        state.score / state.variance.sqrt()
    } else {
        0.0
    };
    Ok(BetaStarEstimate {
        beta_hat: x * scale,
        mse: fun.v_tau / (fun.n as f64 * fun.m_tau * fun.m_tau),
        analysis: state.analysis,
        scale_factor: scale,
    })
}

/// Estimate after stopping at an interim (or final) analysis under the
/// declared shape, with `functionals` supplying `v(tau)`, `m(tau)`.
pub fn estimate_early(
    state: &AnalysisState,
    shape: ShapeCondition,
    r_frac: Option<f64>,
    functionals: &EndFunctionals,
) -> Result<BetaStarEstimate> {
    estimate_from_brownian(state.x, state.info_frac, shape, r_frac, functionals, state.analysis)
}

/// Same as [`estimate_early`] but from the raw Brownian-scale value and
/// information fraction.
pub fn estimate_from_brownian(
    x: f64,
    info_frac: f64,
    shape: ShapeCondition,
    r_frac: Option<f64>,
    functionals: &EndFunctionals,
    analysis: usize,
) -> Result<BetaStarEstimate> {
    if !(info_frac > 0.0) {
        return Err(Error::NoInformation);
    }
    let scale = functionals.scale_factor()?;
    let base = functionals.v_tau / (functionals.n as f64 * functionals.m_tau.powi(2));
    let (beta_hat, mse) = match shape {
        ShapeCondition::OptimalWeight => (x / info_frac * scale, base / info_frac),
        ShapeCondition::Constant => {
            let r = r_frac.ok_or(Error::RFractionRequired)?;
            if !(r > 0.0) {
                return Err(Error::NoInformation);
            }
            (x / r * scale, info_frac * base / (r * r))
        }
    };
    Ok(BetaStarEstimate {
        beta_hat,
        mse,
        analysis,
        scale_factor: scale,
    })
}
