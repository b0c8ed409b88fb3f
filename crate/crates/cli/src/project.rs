//! `project`: end-of-trial functionals for the ramp-plateau weight.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use wlrseq::projection::{HazardCurve, OracleValues, Projection, ProjectionInputs};

use crate::Provenance;

fn half() -> f64 {
    0.5
}

/// Either explicit landmarks, or a hazard curve plus the trial timing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub landmarks: Option<ProjectionInputs>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hazard: Option<HazardCurve>,
    #[serde(default)]
    pub theta: f64,
    #[serde(default = "half")]
    pub e0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_er: Option<f64>,
    /// Trial duration; solved from `target_event_fraction` when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_event_fraction: Option<f64>,
    /// Interim cutoffs at which to report `v`, `m` and the fractions.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub analysis_times: Vec<f64>,
    /// Alternative `theta` values to re-project with.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub theta_sweep: Vec<f64>,
    /// Relative perturbation applied to each `H` landmark (e.g. 0.05).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterimProjection {
    pub time: f64,
    pub v: f64,
    pub m: f64,
    pub fraction: f64,
    pub r_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub theta: f64,
    pub v_tau: f64,
    pub m_tau: f64,
    #[serde(rename = "G_tau")]
    pub g_tau: f64,
}

/// Largest relative change of `v(tau)` and `m(tau)` when the `H`
/// landmarks are scaled by `1 +/- relative`: all together (`common_*`), and
/// over every independent sign combination (`independent_*`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub relative: f64,
    pub common_v: f64,
    pub common_m: f64,
    pub independent_v: f64,
    pub independent_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub values: OracleValues,
    pub rel_error_v: f64,
    pub rel_error_m: f64,
    #[serde(rename = "rel_error_G")]
    pub rel_error_g: f64,
    /// `m^2 <= v <1|IF|1>`.
    pub cauchy_schwarz_holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectDocument {
    pub inputs: ProjectionInputs,
    #[serde(flatten)]
    pub projection: Projection,
    /// `K = m(tau) / v(tau)`.
    pub k: f64,
    /// Gap between the calendar ramp and its hazard-scale form, when a
    /// hazard curve is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ramp_discrepancy: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub interim: Vec<InterimProjection>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub theta_sweep: Vec<SweepRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<Perturbation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleCheck>,
    pub provenance: Provenance,
}

const RAMP_TOLERANCE: f64 = 0.01;

const LANDMARK_KEYS: [&str; 8] = ["H_tc", "H_tau_minus_ter", "H_tau", "theta", "e0", "t_c", "t_er", "tau"];

/// Parses a configuration; a flat object carrying `H_tc` is read as the
/// landmarks, with any remaining keys as options.
pub fn parse_config(value: serde_json::Value) -> Result<ProjectConfig> {
    let serde_json::Value::Object(mut map) = value else {
        bail!("projection config must be a JSON object");
    };
    if map.contains_key("H_tc") {
        let landmarks: serde_json::Map<_, _> = LANDMARK_KEYS
            .iter()
            .filter_map(|k| map.remove(*k).map(|v| (k.to_string(), v)))
            .collect();
        map.insert("landmarks".into(), landmarks.into());
    }
    Ok(serde_json::from_value(map.into())?)
}

fn rel(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        a.abs()
    } else {
        (a - b).abs() / b.abs()
    }
}

/// Sign combinations that break the time ordering of `H` are skipped.
pub fn perturb(inputs: &ProjectionInputs, eps: f64) -> Result<Perturbation> {
    let base = inputs.project()?;
    let mut out = Perturbation {
        relative: eps,
        common_v: 0.0,
        common_m: 0.0,
        independent_v: 0.0,
        independent_m: 0.0,
    };
    for s in 0..8u8 {
        let f = |bit: u8| if s & bit != 0 { 1.0 + eps } else { 1.0 - eps };
        let p = ProjectionInputs {
            h_tc: inputs.h_tc * f(1),
            h_tau_minus_ter: inputs.h_tau_minus_ter * f(2),
            h_tau: inputs.h_tau * f(4),
            ..*inputs
        };
        if p.validate().is_err() {
            continue;
        }
        let q = p.project()?;
        let (dv, dm) = (rel(q.v_tau, base.v_tau), rel(q.m_tau, base.m_tau));
        out.independent_v = out.independent_v.max(dv);
        out.independent_m = out.independent_m.max(dm);
        if s == 0 || s == 7 {
            out.common_v = out.common_v.max(dv);
            out.common_m = out.common_m.max(dm);
        }
    }
    Ok(out)
}

pub fn project(cfg: &ProjectConfig, with_oracle: bool, provenance: Provenance) -> Result<ProjectDocument> {
    let (inputs, curve) = match (&cfg.landmarks, &cfg.hazard) {
        (Some(l), None) => (*l, None),
        (None, Some(h)) => {
            let t_c = cfg.t_c.context("`t_c` is required with `hazard`")?;
            let t_er = cfg.t_er.context("`t_er` is required with `hazard`")?;
            let tau = match (cfg.tau, cfg.target_event_fraction) {
                (Some(t), None) => t,
                (None, Some(g)) => h.solve_duration(cfg.theta, t_er, g)?,
                _ => bail!("give exactly one of `tau` and `target_event_fraction`"),
            };
            (h.inputs(cfg.theta, cfg.e0, t_c, t_er, tau), Some(h))
        }
        _ => bail!("give exactly one of `landmarks` and `hazard`"),
    };
    let projection = inputs.project()?;
    let interim = match curve {
        Some(h) => cfg
            .analysis_times
            .iter()
            .map(|&c| {
                let p = h.inputs(inputs.theta, inputs.e0, inputs.t_c, inputs.t_er, c).project()?;
                Ok(InterimProjection {
                    time: c,
                    v: p.v_tau,
                    m: p.m_tau,
                    fraction: p.v_tau / projection.v_tau,
                    r_fraction: p.m_tau / projection.m_tau,
                })
            })
            .collect::<Result<Vec<_>>>()?,
        None if !cfg.analysis_times.is_empty() => bail!("`analysis_times` needs `hazard`"),
        None => Vec::new(),
    };
    let theta_sweep = cfg
        .theta_sweep
        .iter()
        .map(|&theta| {
            let p = ProjectionInputs { theta, ..inputs }.project()?;
            Ok(SweepRow {
                theta,
                v_tau: p.v_tau,
                m_tau: p.m_tau,
                g_tau: p.g_tau,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let perturbation = cfg.perturbation.map(|e| perturb(&inputs, e)).transpose()?;
    let oracle = if with_oracle {
        let o = inputs.oracle()?;
        Some(OracleCheck {
            rel_error_v: rel(projection.v_tau, o.v_tau),
            rel_error_m: rel(projection.m_tau, o.m_tau),
            rel_error_g: rel(projection.g_tau, o.g_tau),
            cauchy_schwarz_holds: o.m_tau * o.m_tau <= o.v_tau * o.one_one * (1.0 + 1e-12),
            values: o,
        })
    } else {
        None
    };
    let ramp_discrepancy = curve.map(|h| h.ramp_discrepancy(inputs.t_c.min(inputs.tau)));
    let warnings = match ramp_discrepancy {
        Some(d) if d > RAMP_TOLERANCE => vec![format!(
            "hazard-scale ramp differs from t/t_c by up to {d:.4}; projections use the hazard-scale form"
        )],
        _ => Vec::new(),
    };
    Ok(ProjectDocument {
        k: projection.m_tau / projection.v_tau,
        ramp_discrepancy,
        warnings,
        inputs,
        projection,
        interim,
        theta_sweep,
        perturbation,
        oracle,
        provenance,
    })
}
