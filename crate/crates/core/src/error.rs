use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("no subjects")]
    NoSubjects,
    #[error("bad arm code {0}")]
    BadArm(i64),
    #[error("invalid study time {0} (must be finite and >= 0)")]
    BadTime(f64),
    #[error("empty risk set at time {0}")]
    EmptyRiskSet(f64),
    #[error("degenerate variance: V = 0 with nonzero score")]
    DegenerateVariance,
    #[error("r-fraction required under the constant shape condition")]
    RFractionRequired,
    #[error("degenerate first moment: <Q|IF|1> = 0")]
    DegenerateFirstMoment,
    #[error("no information accrued")]
    NoInformation,
    #[error("non-increasing information at analysis {analysis}")]
    NonIncreasingInformation { analysis: usize },
    #[error("grid too coarse: step {step:.3e} does not resolve kernel sd {sd:.3e} at analysis {analysis}")]
    GridTooCoarse { analysis: usize, step: f64, sd: f64 },
    #[error("design infeasible: futility meets efficacy at analysis {analysis} (a = {futility:.6}, b = {efficacy:.6})")]
    FutilityMeetsEfficacy {
        analysis: usize,
        futility: f64,
        efficacy: f64,
    },
    #[error("no root found: {0}")]
    NoRoot(String),
    #[error("degenerate accrual window: H(tau) = H(tau - t_er) with t_er > 0")]
    DegenerateAccrual,
    #[error("required events unattainable (target {target}, supremum {sup})")]
    EventsUnattainable { target: f64, sup: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    /// Name of the module that raised the error, used to qualify messages.
    pub fn module(&self) -> &'static str {
        match self {
            Error::NoSubjects | Error::BadArm(_) | Error::BadTime(_) | Error::EmptyRiskSet(_) => {
                "survival_data"
            }
            Error::DegenerateVariance => "wlr_stat",
            Error::RFractionRequired | Error::DegenerateFirstMoment | Error::NoInformation => {
                "drift_estimation"
            }
            Error::NonIncreasingInformation { .. }
            | Error::GridTooCoarse { .. }
            | Error::FutilityMeetsEfficacy { .. }
            | Error::NoRoot(_) => "boundary_engine",
            Error::DegenerateAccrual | Error::EventsUnattainable { .. } => "eot_projection",
            Error::InvalidInput(_) => "input",
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
