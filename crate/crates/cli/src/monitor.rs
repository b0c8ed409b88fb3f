//! `monitor`: the statistic at one analysis against the design boundary.

use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};
use wlrseq::drift::{estimate_early, BetaStarEstimate};
use wlrseq::survival_data::{ingest, SubjectRecord};
use wlrseq::wlr_stat::{statistics, AnalysisState};

use crate::design::DesignDocument;
use crate::{finite, Provenance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorDocument {
    pub analysis: usize,
    pub state: AnalysisState,
    pub planned_fraction: f64,
    /// Signed Z-scale efficacy boundary; `null` means no stopping.
    pub efficacy_z: Option<f64>,
    pub efficacy_crossed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub futility_z: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub futility_crossed: Option<bool>,
    /// Design drift of `X_n` at the observed information fraction.
    pub design_drift: f64,
    /// Raw `beta*` estimate under the declared shape, design functionals.
    pub estimate: BetaStarEstimate,
    pub relative_risk: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    pub provenance: Provenance,
}

/// Evaluates analysis `analysis` (1-based) on `records`, counting events up
/// to follow-up time `cutoff` (all events when `None`).
pub fn monitor(
    doc: &DesignDocument,
    records: &[SubjectRecord],
    cutoff: Option<f64>,
    analysis: usize,
    mut provenance: Provenance,
) -> Result<MonitorDocument> {
    let spec = &doc.design;
    let k = spec.fractions.len();
    if analysis == 0 || analysis > k {
        bail!("--analysis {analysis} outside 1..={k}");
    }
    let cutoff = cutoff.unwrap_or_else(|| records.iter().map(|r| r.time).fold(0.0, f64::max));
    provenance.data_cutoff = Some(cutoff);
    let table = ingest(records, cutoff)?;
    let mut state = statistics(&table, &doc.weight, cutoff, spec.v_tau)?;
    state.analysis = analysis;
    let mut warnings = std::mem::take(&mut state.warnings);
    if table.n() != spec.n {
        warnings.push(format!(
            "data has n = {} subjects but the design assumed n = {}",
            table.n(),
            spec.n
        ));
    }
    let b = &doc.boundaries;
    let sign = b.direction.sign();
    let r = Some(state.r_fraction(spec.m_tau));
    let estimate = estimate_early(&state, spec.shape, r, &spec.functionals())?;
    let design_drift = spec.drift_curve().at(state.info_frac, r)?;
    let futility = b.futility.as_ref().map(|a| a[analysis - 1]);
    Ok(MonitorDocument {
        analysis,
        planned_fraction: spec.fractions[analysis - 1],
        efficacy_z: finite(sign * b.efficacy[analysis - 1]),
        efficacy_crossed: b.crosses_efficacy(analysis, state.z),
        futility_z: futility.and_then(|a| finite(sign * a)),
        futility_crossed: futility.map(|_| b.crosses_futility(analysis, state.z)),
        design_drift,
        relative_risk: estimate.beta_hat.exp(),
        estimate,
        state,
        warnings,
        provenance,
    })
}
