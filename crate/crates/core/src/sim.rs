//! Monte Carlo two-arm trials with instantaneous log relative risk
//! `beta(t) = beta* q(t)`, uniform accrual, competing other-cause deaths and
//! administrative censoring at each analysis cutoff.
//!
//! Hazards are piecewise constant on a grid that refines the baseline
//! breakpoints; `beta(t)` is held constant on each grid cell (value at the
//! midpoint). Event times are drawn by inverting the cumulative hazard.
//! Every replicate owns a ChaCha stream derived from `(master_seed, index)`,
//! so results do not depend on the thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary::{
    design_boundaries, BoundaryResult, DesignSpec, FutilitySpec, GridSpec, Posthoc, Sidedness,
    SpendingFunction,
};
use crate::drift::{estimate_at_end, estimate_from_brownian, EndFunctionals, ShapeCondition};
use crate::quadrature;
use crate::survival_data::{aggregate, SubjectRecord};
use crate::wlr_stat::{statistics, AnalysisState, WeightFunction};
use crate::{Error, Result};

/// Baseline (control-arm) hazard: `rates[i]` applies on
/// `[breaks[i-1], breaks[i])` with `breaks[-1] = 0`; the last rate extends
/// indefinitely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseHazard {
    pub rates: Vec<f64>,
    #[serde(default)]
    pub breaks: Vec<f64>,
}

impl PiecewiseHazard {
    pub fn constant(rate: f64) -> Self {
        Self { rates: vec![rate], breaks: Vec::new() }
    }

    fn validate(&self) -> Result<()> {
        if self.rates.len() != self.breaks.len() + 1 {
            return Err(Error::invalid("hazard needs exactly one more rate than breaks"));
        }
        if self.rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::invalid("hazard rates must be finite and >= 0"));
        }
        let mut prev = 0.0;
        for &b in &self.breaks {
            if !(b > prev && b.is_finite()) {
                return Err(Error::invalid("hazard breaks must be positive and increasing"));
            }
            prev = b;
        }
        Ok(())
    }

    fn rate(&self, t: f64) -> f64 {
        self.rates[self.breaks.partition_point(|&b| b <= t)]
    }
}

/// How `beta(t)` varies around its weighted average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SimShape {
    /// `q = K Q` with `K` from the null limiting functionals.
    OptimalWeight,
    /// `q = 1`.
    Constant,
    /// Step function: `values[i]` from `times[i]` on (`times[0]` is 0).
    Table { times: Vec<f64>, values: Vec<f64> },
}

fn default_grid_step() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub n_per_arm: usize,
    pub hazard: PiecewiseHazard,
    pub beta_star: f64,
    pub shape: SimShape,
    /// The weight `Q` of the monitored statistic.
    pub weight: WeightFunction,
    /// Accrual duration.
    pub t_er: f64,
    /// Other-cause to baseline hazard ratio.
    #[serde(default)]
    pub theta: f64,
    /// Calendar time of the final analysis.
    pub tau: f64,
    /// Planned information fractions; converted to calendar cutoffs through
    /// the limiting information.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis_fractions: Option<Vec<f64>>,
    /// Calendar cutoffs, used instead of `analysis_fractions`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis_times: Option<Vec<f64>>,
    pub replicates: usize,
    pub master_seed: u64,
    /// Width of the cells on which `beta(t)` is held constant.
    #[serde(default = "default_grid_step")]
    pub grid_step: f64,
}

impl SimScenario {
    pub fn validate(&self) -> Result<()> {
        self.hazard.validate()?;
        if self.n_per_arm == 0 {
            return Err(Error::invalid("n_per_arm must be >= 1"));
        }
        if self.replicates == 0 {
            return Err(Error::invalid("replicates must be >= 1"));
        }
        if !self.beta_star.is_finite() {
            return Err(Error::invalid("beta_star must be finite"));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::invalid("tau must be > 0"));
        }
        if !(self.t_er >= 0.0 && self.t_er < self.tau) {
            return Err(Error::invalid("need 0 <= t_er < tau"));
        }
        if !(self.theta >= 0.0 && self.theta.is_finite()) {
            return Err(Error::invalid("theta must be >= 0"));
        }
        if !(self.grid_step > 0.0) {
            return Err(Error::invalid("grid_step must be > 0"));
        }
        self.weight.validate()?;
        self.weight.require_deterministic()?;
        if let SimShape::Table { times, values } = &self.shape {
            if times.is_empty() || times.len() != values.len() || times[0] != 0.0 {
                return Err(Error::invalid("shape table needs matching knots starting at 0"));
            }
            if times.windows(2).any(|w| !(w[1] > w[0])) || values.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("shape table times must increase, values be finite"));
            }
        }
        match (&self.analysis_fractions, &self.analysis_times) {
            (Some(_), Some(_)) => Err(Error::invalid(
                "give either analysis_fractions or analysis_times, not both",
            )),
            (Some(f), None) => check_increasing(f, 1.0, "analysis_fractions"),
            (None, Some(t)) => check_increasing(t, self.tau, "analysis_times"),
            (None, None) => Ok(()),
        }
    }

    pub fn n(&self) -> usize {
        2 * self.n_per_arm
    }
}

fn check_increasing(v: &[f64], last: f64, what: &str) -> Result<()> {
    let mut prev = 0.0;
    for &x in v {
        if !(x > prev) {
            return Err(Error::invalid(format!("{what} must be positive and increasing")));
        }
        prev = x;
    }
    if v.last() != Some(&last) {
        return Err(Error::invalid(format!("{what} must end at {last}")));
    }
    Ok(())
}

/// Piecewise-constant hazards of both arms on a common grid.
#[derive(Debug, Clone)]
struct Model {
    edges: Vec<f64>,
    h0: Vec<f64>,
    beta: Vec<f64>,
    cum0: Vec<f64>,
    cum1: Vec<f64>,
    theta: f64,
    t_er: f64,
}

impl Model {
    fn new(edges: Vec<f64>, h0: Vec<f64>, beta: Vec<f64>, theta: f64, t_er: f64) -> Self {
        let mut cum0 = vec![0.0];
        let mut cum1 = vec![0.0];
        for i in 0..edges.len() - 1 {
            let w = edges[i + 1] - edges[i];
            cum0.push(cum0[i] + h0[i] * w);
            cum1.push(cum1[i] + h0[i] * beta[i].exp() * w);
        }
        Self { edges, h0, beta, cum0, cum1, theta, t_er }
    }

    fn cell(&self, t: f64) -> usize {
        self.edges
            .partition_point(|&e| e <= t)
            .saturating_sub(1)
            .min(self.h0.len() - 1)
    }

    fn rate(&self, arm: u8, i: usize) -> f64 {
        if arm == 1 {
            self.h0[i] * self.beta[i].exp()
        } else {
            self.h0[i]
        }
    }

    fn cumulative(&self, arm: u8, t: f64) -> f64 {
        let i = self.cell(t);
        let cum = if arm == 1 { &self.cum1 } else { &self.cum0 };
        cum[i] + self.rate(arm, i) * (t - self.edges[i])
    }

    /// Smallest `t` with cumulative hazard `target`; infinite if never reached.
    fn invert(&self, arm: u8, target: f64) -> f64 {
        let cum = if arm == 1 { &self.cum1 } else { &self.cum0 };
        let i = (cum.partition_point(|&c| c <= target)).saturating_sub(1).min(self.h0.len() - 1);
        let r = self.rate(arm, i);
        if r > 0.0 {
            let t = self.edges[i] + (target - cum[i]) / r;
            if i + 1 < self.h0.len() {
                t.min(self.edges[i + 1])
            } else {
                t
            }
        } else {
            // zero hazard on this cell: move to the next cell with mass
            let mut j = i + 1;
            while j < self.h0.len() {
                let rj = self.rate(arm, j);
                if rj > 0.0 {
                    return self.edges[j] + (target - cum[j]) / rj;
                }
                j += 1;
            }
            f64::INFINITY
        }
    }

    fn live(&self, cutoff: f64, t: f64) -> f64 {
        if self.t_er > 0.0 {
            ((cutoff - t) / self.t_er).clamp(0.0, 1.0)
        } else if t <= cutoff {
            1.0
        } else {
            0.0
        }
    }

    /// Limiting brackets at calendar cutoff `cutoff`.
    fn functionals(&self, q: &WeightFunction, cutoff: f64) -> Limits {
        let mut breaks = self.edges.clone();
        breaks.push(cutoff - self.t_er);
        breaks.extend(q.knots());
        let terms = |t: f64| {
            let i = self.cell(t);
            let so = (-self.theta * self.cumulative(0, t)).exp();
            let l = self.live(cutoff, t);
            let y0 = 0.5 * (-self.cumulative(0, t)).exp() * so * l;
            let y1 = 0.5 * (-self.cumulative(1, t)).exp() * so * l;
            if y0 + y1 <= 0.0 {
                return [0.0; 5];
            }
            let (h0, h1) = (self.rate(0, i), self.rate(1, i));
            let dn = y0 * h0 + y1 * h1;
            let w = y0 * y1 / (y0 + y1).powi(2) * dn;
            let qt = q.eval(t);
            [qt * qt * w, qt * w, qt * self.beta[i] * w, qt * y0 * y1 / (y0 + y1) * (h1 - h0), dn]
        };
        let tol = 1e-12;
        let get = |k: usize| quadrature::integrate(|t| terms(t)[k], 0.0, cutoff, &breaks, tol);
        Limits {
            v: get(0),
            m: get(1),
            q_beta: get(2),
            score: get(3),
            events: get(4),
        }
    }

    fn null(&self) -> Model {
        Model::new(
            self.edges.clone(),
            self.h0.clone(),
            vec![0.0; self.h0.len()],
            self.theta,
            self.t_er,
        )
    }
}

#[derive(Debug, Clone, Copy)]
struct Limits {
    v: f64,
    m: f64,
    q_beta: f64,
    score: f64,
    events: f64,
}

/// Deterministic limits of the monitored quantities under the scenario's
/// data-generating model, per subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitingFunctionals {
    /// `v(tau) = <Q|IF|Q>_tau`.
    pub v_tau: f64,
    /// `m(tau) = <Q|IF|1>_tau`.
    pub m_tau: f64,
    /// `K` used for the optimal-weight shape (null model).
    pub k: f64,
    /// `<Q|IF|beta>_tau / <Q|IF|1>_tau`, the weighted average log relative
    /// risk realized by the model.
    pub true_beta_star: f64,
    pub analysis_times: Vec<f64>,
    /// `v(t_j) / v(tau)`.
    pub fractions: Vec<f64>,
    /// `m(t_j) / m(tau)`.
    pub r_fractions: Vec<f64>,
    /// Mean of `X_n(t_j)`: `sqrt(n) E[score per subject] / sqrt(v(tau))`.
    pub drift: Vec<f64>,
    /// Expected event fraction per subject at each analysis.
    pub event_fractions: Vec<f64>,
}

fn weight_of(s: &SimScenario) -> &WeightFunction {
    &s.weight
}

fn build_model(s: &SimScenario) -> Result<Model> {
    s.validate()?;
    let mut edges: Vec<f64> = vec![0.0];
    let horizon = s.tau;
    let cells = (horizon / s.grid_step).ceil() as usize;
    edges.extend((1..cells).map(|i| i as f64 * s.grid_step));
    edges.extend(s.hazard.breaks.iter().copied().filter(|&b| b < horizon));
    edges.extend(weight_of(s).knots().into_iter().filter(|&b| b > 0.0 && b < horizon));
    if let SimShape::Table { times, .. } = &s.shape {
        edges.extend(times.iter().copied().filter(|&b| b > 0.0 && b < horizon));
    }
    edges.push(horizon);
    edges.sort_by(f64::total_cmp);
    edges.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let mids: Vec<f64> = edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let h0: Vec<f64> = mids.iter().map(|&t| s.hazard.rate(t)).chain([s.hazard.rate(horizon)]).collect();
    let mut mid_all = mids.clone();
    mid_all.push(horizon);
    let null = Model::new(edges.clone(), h0.clone(), vec![0.0; h0.len()], s.theta, s.t_er);
    let q: Vec<f64> = match &s.shape {
        SimShape::Constant => vec![1.0; h0.len()],
        SimShape::OptimalWeight => {
            let l = null.functionals(&s.weight, s.tau);
            if !(l.v > 0.0) {
                return Err(Error::DegenerateVariance);
            }
            let k = l.m / l.v;
            mid_all.iter().map(|&t| k * s.weight.eval(t)).collect()
        }
        SimShape::Table { times, values } => mid_all
            .iter()
            .map(|&t| values[times.partition_point(|&x| x <= t) - 1])
            .collect(),
    };
    let beta = q.iter().map(|qi| s.beta_star * qi).collect();
    Ok(Model::new(edges, h0, beta, s.theta, s.t_er))
}

/// Limiting functionals and analysis cutoffs for a scenario.
pub fn limiting_functionals(s: &SimScenario) -> Result<LimitingFunctionals> {
    let model = build_model(s)?;
    limits_for(s, &model)
}

fn limits_for(s: &SimScenario, model: &Model) -> Result<LimitingFunctionals> {
    let q = &s.weight;
    let end = model.functionals(q, s.tau);
    if !(end.v > 0.0) {
        return Err(Error::DegenerateVariance);
    }
    if end.m == 0.0 {
        return Err(Error::DegenerateFirstMoment);
    }
    let null_end = model.null().functionals(q, s.tau);
    let times = match (&s.analysis_times, &s.analysis_fractions) {
        (Some(t), _) => t.clone(),
        (None, Some(f)) => f
            .iter()
            .map(|&target| {
                if target >= 1.0 {
                    return s.tau;
                }
                crate::boundary::bisect(
                    |c| model.functionals(q, c).v / end.v - target,
                    0.0,
                    s.tau,
                    true,
                    1e-12,
                )
            })
            .collect(),
        (None, None) => vec![s.tau],
    };
    let per: Vec<Limits> = times.iter().map(|&c| model.functionals(q, c)).collect();
    let root_n = (s.n() as f64).sqrt();
    Ok(LimitingFunctionals {
        v_tau: end.v,
        m_tau: end.m,
        k: null_end.m / null_end.v,
        true_beta_star: end.q_beta / end.m,
        fractions: per.iter().map(|l| (l.v / end.v).min(1.0)).collect(),
        r_fractions: per.iter().map(|l| (l.m / end.m).min(1.0)).collect(),
        drift: per.iter().map(|l| root_n * l.score / end.v.sqrt()).collect(),
        event_fractions: per.iter().map(|l| l.events).collect(),
        analysis_times: times,
    })
}

/// Draws of one simulated trial, before any analysis cutoff is applied.
#[derive(Debug, Clone)]
struct Cohort {
    entry: Vec<f64>,
    /// Time from entry to the event of interest.
    event: Vec<f64>,
    /// Time from entry to other-cause death.
    other: Vec<f64>,
    arm: Vec<u8>,
}

fn replicate_rng(master_seed: u64, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

fn exp1<R: Rng>(rng: &mut R) -> f64 {
    -(1.0 - rng.random::<f64>()).ln()
}

fn draw_cohort(s: &SimScenario, model: &Model, index: u64) -> Cohort {
    let mut rng = replicate_rng(s.master_seed, index);
    let n = s.n();
    let mut c = Cohort {
        entry: Vec::with_capacity(n),
        event: Vec::with_capacity(n),
        other: Vec::with_capacity(n),
        arm: Vec::with_capacity(n),
    };
    for i in 0..n {
        let arm = u8::from(i >= s.n_per_arm);
        c.entry.push(s.t_er * rng.random::<f64>());
        c.event.push(model.invert(arm, exp1(&mut rng)));
        let e = exp1(&mut rng);
        c.other.push(if s.theta > 0.0 {
            model.invert(0, e / s.theta)
        } else {
            f64::INFINITY
        });
        c.arm.push(arm);
    }
    c
}

impl Cohort {
    /// `(time, event, is_trt)` at calendar cutoff `cutoff`; subjects not yet
    /// enrolled appear with zero follow-up so `n` stays the full sample.
    fn observe(&self, cutoff: f64) -> Vec<(f64, bool, bool)> {
        (0..self.entry.len())
            .map(|i| {
                let follow = (cutoff - self.entry[i]).max(0.0);
                let t = self.event[i].min(self.other[i]).min(follow);
                let event = self.event[i] <= self.other[i] && self.event[i] <= follow && follow > 0.0;
                (t, event, self.arm[i] == 1)
            })
            .collect()
    }
}

/// The statistic at each calendar cutoff for one replicate, with `v_tau`
/// as the Brownian-scale normalizer. Deterministic in `(master_seed, index)`.
pub fn simulate_trial(
    s: &SimScenario,
    analysis_times: &[f64],
    v_tau: f64,
    index: u64,
) -> Result<Vec<AnalysisState>> {
    let model = build_model(s)?;
    simulate_with(s, &model, analysis_times, v_tau, index)
}

fn simulate_with(
    s: &SimScenario,
    model: &Model,
    analysis_times: &[f64],
    v_tau: f64,
    index: u64,
) -> Result<Vec<AnalysisState>> {
    let cohort = draw_cohort(s, model, index);
    analysis_times
        .iter()
        .enumerate()
        .map(|(j, &c)| {
            let mut obs = cohort.observe(c);
            let table = aggregate(&mut obs, c);
            let mut st = statistics(&table, &s.weight, c, v_tau)?;
            st.analysis = j + 1;
            Ok(st)
        })
        .collect()
}

/// Event times of both arms for one replicate, uncensored by analysis
/// cutoffs (other-cause deaths and the final cutoff still apply).
pub fn event_times_by_arm(s: &SimScenario, index: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    let model = build_model(s)?;
    let cohort = draw_cohort(s, &model, index);
    let mut out = (Vec::new(), Vec::new());
    for (t, event, trt) in cohort.observe(s.tau) {
        if event {
            if trt { out.1.push(t) } else { out.0.push(t) }
        }
    }
    Ok(out)
}

/// Subject-level records of one replicate at calendar cutoff `cutoff`, with
/// follow-up measured from each subject's entry.
pub fn subject_records(s: &SimScenario, index: u64, cutoff: f64) -> Result<Vec<SubjectRecord>> {
    let model = build_model(s)?;
    let cohort = draw_cohort(s, &model, index);
    cohort
        .observe(cutoff)
        .into_iter()
        .enumerate()
        .map(|(i, (t, event, trt))| SubjectRecord::new(format!("s{}", i + 1), t, event, i64::from(trt)))
        .collect()
}

/// Monitoring design applied to every replicate. Fractions, `v(tau)`,
/// `m(tau)` and `n` come from the scenario's limiting functionals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyDesign {
    pub alpha: f64,
    #[serde(default)]
    pub sided: Sidedness,
    pub spending: SpendingFunction,
    pub shape: ShapeCondition,
    /// Design alternative; defaults to the scenario's `beta_star`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_star: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub futility: Option<FutilitySpec>,
    #[serde(default)]
    pub grid: GridSpec,
}

impl StudyDesign {
    pub fn to_spec(&self, s: &SimScenario, lim: &LimitingFunctionals) -> DesignSpec {
        DesignSpec {
            alpha: self.alpha,
            sided: self.sided,
            spending: self.spending,
            fractions: lim.fractions.clone(),
            r_fractions: Some(lim.r_fractions.clone()),
            shape: self.shape,
            beta_star: self.beta_star.unwrap_or(s.beta_star),
            v_tau: lim.v_tau,
            m_tau: lim.m_tau,
            n: s.n(),
            direction: None,
            futility: self.futility,
            grid: self.grid,
        }
    }
}

/// Outcome of one replicate under the monitoring design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub index: u64,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub info_frac: Vec<f64>,
    pub events: Vec<u64>,
    /// First analysis crossing the efficacy boundary.
    pub stopped_at: Option<usize>,
    /// First analysis at or below the (non-binding) futility boundary.
    pub futility_at: Option<usize>,
    /// Analysis used for inference: the stopping one, else the last.
    pub inference_at: usize,
    pub beta_hat: f64,
    pub beta_tilde: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub p_value: f64,
    /// Estimate from the final analysis regardless of stopping, with the
    /// observed end-of-trial brackets.
    pub beta_hat_end: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub se: f64,
}

impl McEstimate {
    fn mean_of(v: &[f64]) -> Self {
        let n = v.len() as f64;
        if v.is_empty() {
            return Self { estimate: f64::NAN, se: f64::NAN };
        }
        let mean = v.iter().sum::<f64>() / n;
        let var = if v.len() > 1 {
            v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            f64::NAN
        };
        Self { estimate: mean, se: (var / n).sqrt() }
    }

    /// Whether `target` lies within `k` standard errors.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.estimate - target).abs() <= k * self.se
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopStats {
    pub analysis: usize,
    pub count: usize,
    pub bias_raw: McEstimate,
    pub bias_adjusted: McEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub replicates: usize,
    pub n: usize,
    pub limiting: LimitingFunctionals,
    pub boundaries: BoundaryResult,
    /// Fraction of replicates first crossing efficacy at each analysis.
    pub efficacy_crossing: Vec<f64>,
    pub futility_crossing: Vec<f64>,
    /// Probability of crossing efficacy at any analysis.
    pub rejection_rate: McEstimate,
    pub mean_x: Vec<McEstimate>,
    pub mean_info_frac: Vec<f64>,
    /// `cov_x[i][j]` for `i <= j` (upper triangle, row-major).
    pub cov_x: Vec<Vec<McEstimate>>,
    /// Final-analysis estimate minus the true `beta*`, ignoring stopping.
    pub bias_end: McEstimate,
    /// Raw estimate at the inference analysis minus the true `beta*`.
    pub bias_raw: McEstimate,
    /// Bias-adjusted estimate minus the true `beta*`.
    pub bias_adjusted: McEstimate,
    pub coverage: McEstimate,
    pub by_stop: Vec<StopStats>,
    /// Replicates with efficacy stopping before the last analysis.
    pub early_stop: Option<StopStats>,
    pub failures: usize,
}

/// Runs every replicate in parallel and aggregates in index order.
pub fn run_study(s: &SimScenario, design: &StudyDesign) -> Result<(StudySummary, Vec<ReplicateResult>)> {
    let model = build_model(s)?;
    let lim = limits_for(s, &model)?;
    let spec = design.to_spec(s, &lim);
    let bounds = design_boundaries(&spec)?;
    let k = lim.fractions.len();
    let posthoc: Vec<Posthoc> = (1..=k)
        .map(|j| Posthoc::new(&spec, &bounds, &spec.fractions[..j], Some(&lim.r_fractions[..j])))
        .collect::<Result<_>>()?;
    let critical: Vec<Option<f64>> = posthoc.iter().map(|p| p.critical_value().ok()).collect();
    let fun = spec.functionals();
    let scale = fun.scale_factor()?;

    let results: Vec<ReplicateResult> = (0..s.replicates as u64)
        .into_par_iter()
        .map(|index| {
            let states = simulate_with(s, &model, &lim.analysis_times, lim.v_tau, index)?;
            Ok(evaluate(index, &states, &spec, &bounds, &posthoc, &critical, &fun, scale))
        })
        .collect::<Result<_>>()?;

    let summary = summarize(s, lim, bounds, &results);
    Ok((summary, results))
}

#[allow(clippy::too_many_arguments)]
fn evaluate(
    index: u64,
    states: &[AnalysisState],
    spec: &DesignSpec,
    bounds: &BoundaryResult,
    posthoc: &[Posthoc],
    critical: &[Option<f64>],
    fun: &EndFunctionals,
    scale: f64,
) -> ReplicateResult {
    let k = states.len();
    let stopped_at = (1..=k).find(|&j| bounds.crosses_efficacy(j, states[j - 1].z));
    let futility_at = (1..=k).find(|&j| bounds.crosses_futility(j, states[j - 1].z));
    let j = stopped_at.unwrap_or(k);
    let st = &states[j - 1];
    let mut out = ReplicateResult {
        index,
        x: states.iter().map(|s| s.x).collect(),
        z: states.iter().map(|s| s.z).collect(),
        info_frac: states.iter().map(|s| s.info_frac).collect(),
        events: states.iter().map(|s| s.events).collect(),
        stopped_at,
        futility_at,
        inference_at: j,
        beta_hat: f64::NAN,
        beta_tilde: f64::NAN,
        ci_lower: f64::NAN,
        ci_upper: f64::NAN,
        p_value: f64::NAN,
        beta_hat_end: estimate_at_end(&states[k - 1]).map_or(f64::NAN, |e| e.beta_hat),
        error: None,
    };
    let r = Some(st.r_fraction(fun.m_tau));
    match estimate_from_brownian(st.x, st.info_frac, spec.shape, r, fun, j) {
        Ok(est) => {
            out.beta_hat = est.beta_hat;
            if let Some(x_u) = critical[j - 1] {
                let half = x_u / spec.fractions[j - 1].sqrt() * est.mse.sqrt();
                out.ci_lower = est.beta_hat - half;
                out.ci_upper = est.beta_hat + half;
            }
        }
        Err(e) => out.error = Some(e.to_string()),
    }
    out.p_value = posthoc[j - 1].p_value(st.x);
    match posthoc[j - 1].zeta(st.x) {
        Ok(z) => out.beta_tilde = z * scale,
        Err(e) => out.error = Some(e.to_string()),
    }
    out
}

fn summarize(
    s: &SimScenario,
    lim: LimitingFunctionals,
    bounds: BoundaryResult,
    results: &[ReplicateResult],
) -> StudySummary {
    let k = lim.fractions.len();
    let reps = results.len();
    let truth = lim.true_beta_star;
    let frac = |pred: &dyn Fn(&ReplicateResult) -> bool| {
        results.iter().filter(|r| pred(r)).count() as f64 / reps as f64
    };
    let column = |j: usize| results.iter().map(|r| r.x[j]).collect::<Vec<_>>();
    let mean_x: Vec<McEstimate> = (0..k).map(|j| McEstimate::mean_of(&column(j))).collect();
    let mut cov_x = Vec::with_capacity(k);
    for i in 0..k {
        let xi = column(i);
        let row = (i..k)
            .map(|j| {
                let xj = column(j);
                let prods: Vec<f64> = xi
                    .iter()
                    .zip(&xj)
                    .map(|(a, b)| (a - mean_x[i].estimate) * (b - mean_x[j].estimate))
                    .collect();
                let mut e = McEstimate::mean_of(&prods);
                if reps > 1 {
                    e.estimate *= reps as f64 / (reps as f64 - 1.0);
                }
                e
            })
            .collect();
        cov_x.push(row);
    }
    let finite = |f: &dyn Fn(&ReplicateResult) -> f64, keep: &dyn Fn(&ReplicateResult) -> bool| {
        results
            .iter()
            .filter(|r| keep(r))
            .map(f)
            .filter(|v| v.is_finite())
            .collect::<Vec<_>>()
    };
    let all = |_: &ReplicateResult| true;
    let covered: Vec<f64> = results
        .iter()
        .filter(|r| r.ci_lower.is_finite() && r.ci_upper.is_finite())
        .map(|r| f64::from(u8::from(r.ci_lower <= truth && truth <= r.ci_upper)))
        .collect();
    let stats_for = |analysis: usize, keep: &dyn Fn(&ReplicateResult) -> bool| StopStats {
        analysis,
        count: results.iter().filter(|r| keep(r)).count(),
        bias_raw: McEstimate::mean_of(&finite(&|r| r.beta_hat - truth, keep)),
        bias_adjusted: McEstimate::mean_of(&finite(&|r| r.beta_tilde - truth, keep)),
    };
    let by_stop = (1..=k)
        .map(|j| stats_for(j, &|r: &ReplicateResult| r.stopped_at == Some(j)))
        .filter(|st| st.count > 0)
        .collect();
    let early = stats_for(0, &|r: &ReplicateResult| r.stopped_at.is_some_and(|j| j < k));
    StudySummary {
        replicates: reps,
        n: s.n(),
        efficacy_crossing: (1..=k).map(|j| frac(&|r| r.stopped_at == Some(j))).collect(),
        futility_crossing: (1..=k).map(|j| frac(&|r| r.futility_at == Some(j))).collect(),
        rejection_rate: McEstimate::mean_of(
            &results.iter().map(|r| f64::from(u8::from(r.stopped_at.is_some()))).collect::<Vec<_>>(),
        ),
        mean_x,
        mean_info_frac: (0..k)
            .map(|j| results.iter().map(|r| r.info_frac[j]).sum::<f64>() / reps as f64)
            .collect(),
        cov_x,
        bias_end: McEstimate::mean_of(&finite(&|r| r.beta_hat_end - truth, &all)),
        bias_raw: McEstimate::mean_of(&finite(&|r| r.beta_hat - truth, &all)),
        bias_adjusted: McEstimate::mean_of(&finite(&|r| r.beta_tilde - truth, &all)),
        coverage: McEstimate::mean_of(&covered),
        by_stop,
        early_stop: (early.count > 0).then_some(early),
        failures: results.iter().filter(|r| r.error.is_some()).count(),
        limiting: lim,
        boundaries: bounds,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn scenario(beta_star: f64) -> SimScenario {
        SimScenario {
            n_per_arm: 400,
            hazard: PiecewiseHazard { rates: vec![0.1, 0.2], breaks: vec![2.0] },
            beta_star,
            shape: SimShape::OptimalWeight,
            weight: WeightFunction::ramp_plateau(1.0),
            t_er: 2.0,
            theta: 0.5,
            tau: 5.0,
            analysis_fractions: Some(vec![0.4, 0.7, 1.0]),
            analysis_times: None,
            replicates: 20,
            master_seed: 7,
            grid_step: 0.05,
        }
    }

    #[test]
    fn inversion_round_trip() {
        let s = scenario(-0.4);
        let m = build_model(&s).unwrap();
        for t in [0.0, 0.3, 1.99, 2.0, 4.7, 9.0] {
            for arm in [0, 1] {
                let c = m.cumulative(arm, t);
                assert!((m.invert(arm, c) - t).abs() < 1e-9, "arm {arm} t {t}");
            }
        }
    }

    #[test]
    fn zero_hazard_cell_is_skipped() {
        let mut s = scenario(0.0);
        s.shape = SimShape::Constant;
        s.hazard = PiecewiseHazard { rates: vec![0.0, 0.3], breaks: vec![1.0] };
        let m = build_model(&s).unwrap();
        assert!((m.invert(0, 0.3) - 2.0).abs() < 1e-12);
        s.hazard = PiecewiseHazard::constant(0.0);
        let m = build_model(&s).unwrap();
        assert!(m.invert(0, 0.1).is_infinite());
    }

    #[test]
    fn limiting_fractions_hit_targets() {
        let s = scenario(-0.3);
        let lim = limiting_functionals(&s).unwrap();
        for (f, t) in lim.fractions.iter().zip([0.4, 0.7, 1.0]) {
            assert!((f - t).abs() < 1e-9);
        }
        assert_eq!(*lim.analysis_times.last().unwrap(), 5.0);
        // near the null the K-weighted shape reproduces beta* up to the
        // midpoint discretization of beta(t)
        let coarse = limiting_functionals(&scenario(1e-9)).unwrap();
        let err = (coarse.true_beta_star / 1e-9 - 1.0).abs();
        assert!(err < 1e-3, "{err}");
        let mut fine = scenario(1e-9);
        fine.grid_step = 0.025;
        let err_fine = (limiting_functionals(&fine).unwrap().true_beta_star / 1e-9 - 1.0).abs();
        assert!(err_fine < err / 2.0, "{err_fine} vs {err}");
        assert!(coarse.drift.iter().all(|d| d.abs() < 1e-6));
    }

    #[test]
    fn no_hazard_fails_cleanly() {
        let mut s = scenario(0.0);
        s.hazard = PiecewiseHazard::constant(0.0);
        assert_eq!(limiting_functionals(&s), Err(Error::DegenerateVariance));
    }

    #[test]
    fn deterministic_per_index() {
        let s = scenario(-0.3);
        let lim = limiting_functionals(&s).unwrap();
        let a = simulate_trial(&s, &lim.analysis_times, lim.v_tau, 3).unwrap();
        let b = simulate_trial(&s, &lim.analysis_times, lim.v_tau, 3).unwrap();
        let c = simulate_trial(&s, &lim.analysis_times, lim.v_tau, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.iter().all(|st| st.n == s.n()));
    }

    #[test]
    fn observe_respects_entry() {
        let c = Cohort {
            entry: vec![0.5, 2.0],
            event: vec![1.0, 0.2],
            other: vec![f64::INFINITY, f64::INFINITY],
            arm: vec![0, 1],
        };
        assert_eq!(c.observe(1.0), vec![(0.5, false, false), (0.0, false, true)]);
        assert_eq!(c.observe(2.5), vec![(1.0, true, false), (0.2, true, true)]);
    }

    #[test]
    fn validation() {
        let mut s = scenario(0.0);
        s.replicates = 0;
        assert!(s.validate().is_err());
        let mut s = scenario(0.0);
        s.hazard.rates[0] = -1.0;
        assert!(s.validate().is_err());
        let mut s = scenario(0.0);
        s.analysis_times = Some(vec![1.0, 5.0]);
        assert!(s.validate().is_err());
        s.analysis_fractions = None;
        assert!(s.validate().is_ok());
        let mut s = scenario(0.0);
        s.weight = WeightFunction::FlemingHarrington { rho: 0.0, gamma: 1.0, survival: None };
        assert!(s.validate().is_err());
    }

    #[test]
    fn study_is_thread_count_independent() {
        let s = scenario(-0.3);
        let d = StudyDesign {
            alpha: 0.025,
            sided: Sidedness::OneSided,
            spending: SpendingFunction::OBrienFleming,
            shape: ShapeCondition::OptimalWeight,
            beta_star: None,
            futility: None,
            grid: GridSpec::default(),
        };
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let (a, ra) = one.install(|| run_study(&s, &d)).unwrap();
        let (b, rb) = run_study(&s, &d).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.replicates, 20);
    }
}
