//! `design`: boundaries and drift from a design configuration.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use wlrseq::boundary::{
    convexity_warning, design_boundaries, BoundaryResult, DesignSpec, Direction, FutilitySpec,
    GridSpec, Sidedness, SpendingFunction,
};
use wlrseq::drift::{estimate_from_brownian, ShapeCondition};
use wlrseq::projection::HazardCurve;
use wlrseq::wlr_stat::WeightFunction;

use crate::{finite, Provenance};

fn half() -> f64 {
    0.5
}

/// Projects `v(tau)`, `m(tau)` and the planned fractions from a pooled
/// cumulative hazard curve; requires a ramp-plateau weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionPlan {
    pub hazard: HazardCurve,
    #[serde(default)]
    pub theta: f64,
    #[serde(default = "half")]
    pub e0: f64,
    pub t_er: f64,
    pub tau: f64,
    /// Calendar data cutoffs of the analyses; the last is usually `tau`.
    pub analysis_times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    pub alpha: f64,
    #[serde(default)]
    pub sided: Sidedness,
    pub spending: SpendingFunction,
    pub shape: ShapeCondition,
    pub beta_star: f64,
    pub n: usize,
    /// Weight `Q`; constant when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<WeightFunction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fractions: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_fractions: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projection: Option<ProjectionPlan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub futility: Option<FutilitySpec>,
    #[serde(default)]
    pub grid: GridSpec,
}

/// One row of the design schedule. Z-scale values carry the sign of the
/// raw statistic; `null` means no stopping at that analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleRow {
    pub analysis: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<f64>,
    pub fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_fraction: Option<f64>,
    /// Design drift of `X_n` at this analysis.
    pub drift: f64,
    pub efficacy_z: Option<f64>,
    /// Raw `beta*` estimate that would sit exactly on the efficacy boundary.
    pub efficacy_log_rr: Option<f64>,
    pub efficacy_rr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub futility_z: Option<f64>,
    pub alpha_spent: f64,
    pub stop_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignDocument {
    pub design: DesignSpec,
    pub weight: WeightFunction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis_times: Option<Vec<f64>>,
    pub boundaries: BoundaryResult,
    pub schedule: Vec<ScheduleRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    pub provenance: Provenance,
}

/// Resolved design: the spec plus the weight and calendar times.
pub fn resolve(cfg: &DesignConfig) -> Result<(DesignSpec, WeightFunction, Option<Vec<f64>>, Vec<String>)> {
    let weight = cfg.weight.clone().unwrap_or_else(WeightFunction::constant);
    let mut warnings = Vec::new();
    let (mut fractions, mut r_fractions, mut v_tau, mut m_tau) =
        (cfg.fractions.clone(), cfg.r_fractions.clone(), cfg.v_tau, cfg.m_tau);
    let mut times = None;
    if let Some(p) = &cfg.projection {
        let t_c = match &weight {
            WeightFunction::RampPlateau { t_c } => *t_c,
            _ => bail!("projection requires a ramp-plateau weight"),
        };
        let project = |end: f64| -> Result<(f64, f64)> {
            let inputs = p.hazard.inputs(p.theta, p.e0, t_c, p.t_er, end);
            let v = inputs
                .variance_at_tau()
                .with_context(|| format!("projecting v at t = {end}"))?;
            let m = inputs.first_moment_at_tau()?;
            Ok((v, m))
        };
        let (v_end, m_end) = project(p.tau)?;
        let per = p
            .analysis_times
            .iter()
            .map(|&c| project(c))
            .collect::<Result<Vec<_>>>()?;
        if cfg.fractions.is_some() || cfg.v_tau.is_some() || cfg.m_tau.is_some() {
            warnings.push("explicit fractions / v_tau / m_tau override the projection".to_string());
        }
        fractions = fractions.or_else(|| Some(per.iter().map(|(v, _)| (v / v_end).min(1.0)).collect()));
        r_fractions =
            r_fractions.or_else(|| Some(per.iter().map(|(_, m)| (m / m_end).min(1.0)).collect()));
        v_tau = v_tau.or(Some(v_end));
        m_tau = m_tau.or(Some(m_end));
        times = Some(p.analysis_times.clone());
    }
    let spec = DesignSpec {
        alpha: cfg.alpha,
        sided: cfg.sided,
        spending: cfg.spending,
        fractions: fractions.context("`fractions` (or `projection`) is required")?,
        r_fractions,
        shape: cfg.shape,
        beta_star: cfg.beta_star,
        v_tau: v_tau.context("`v_tau` (or `projection`) is required")?,
        m_tau: m_tau.context("`m_tau` (or `projection`) is required")?,
        n: cfg.n,
        direction: cfg.direction,
        futility: cfg.futility,
        grid: cfg.grid,
    };
    weight.validate()?;
    Ok((spec, weight, times, warnings))
}

pub fn design(cfg: &DesignConfig, provenance: Provenance) -> Result<DesignDocument> {
    let (spec, weight, times, mut warnings) = resolve(cfg)?;
    build(spec, weight, times, &mut warnings, provenance)
}

fn build(
    spec: DesignSpec,
    weight: WeightFunction,
    times: Option<Vec<f64>>,
    warnings: &mut Vec<String>,
    provenance: Provenance,
) -> Result<DesignDocument> {
    let boundaries = design_boundaries(&spec)?;
    warnings.extend(convexity_warning(&boundaries));
    let curve = spec.drift_curve();
    let fun = spec.functionals();
    let sign = boundaries.direction.sign();
    let mut schedule = Vec::with_capacity(spec.fractions.len());
    for (idx, &f) in spec.fractions.iter().enumerate() {
        let j = idx + 1;
        let r = spec.r_fractions.as_ref().map(|r| r[idx]);
        let b = boundaries.efficacy[idx];
        let (log_rr, rr) = if b.is_finite() {
            let est = estimate_from_brownian(sign * b * f.sqrt(), f, spec.shape, r, &fun, j)?;
            (Some(est.beta_hat), Some(est.beta_hat.exp()))
        } else {
            (None, None)
        };
        schedule.push(ScheduleRow {
            analysis: j,
            time: times.as_ref().map(|t| t[idx]),
            fraction: f,
            r_fraction: r,
            drift: curve.at(f, r)?,
            efficacy_z: finite(sign * b),
            efficacy_log_rr: log_rr,
            efficacy_rr: rr,
            futility_z: boundaries
                .futility
                .as_ref()
                .and_then(|a| finite(sign * a[idx])),
            alpha_spent: boundaries.alpha_spent[idx],
            stop_mass: boundaries.stop_mass[idx],
        });
    }
    Ok(DesignDocument {
        design: spec,
        weight,
        analysis_times: times,
        boundaries,
        schedule,
        warnings: std::mem::take(warnings),
        provenance,
    })
}

/// Accepts either a finished design document, reused verbatim so that
/// boundaries are never recomputed, or a design configuration.
pub fn load(value: serde_json::Value, provenance: Provenance) -> Result<DesignDocument> {
    if value.get("boundaries").is_some() {
        let doc: DesignDocument =
            serde_json::from_value(value).context("parsing design document")?;
        doc.design.validate()?;
        if doc.boundaries.efficacy.len() != doc.design.fractions.len() {
            bail!("design document boundaries do not match its fractions");
        }
        return Ok(doc);
    }
    let cfg: DesignConfig = serde_json::from_value(value).context("parsing design config")?;
    design(&cfg, provenance)
}
