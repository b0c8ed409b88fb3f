//! `report`: final inference after stopping under the stagewise ordering.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use wlrseq::boundary::Posthoc;
use wlrseq::drift::{estimate_from_brownian, EndFunctionals};
use wlrseq::survival_data::SubjectRecord;

use crate::data::{crude_rates, CrudeRates};
use crate::design::DesignDocument;
use crate::{finite, Provenance};

/// What `report` needs from each analysis. `AnalysisState` JSON (or a whole
/// `monitor` document) deserializes into this.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedAnalysis {
    #[serde(default)]
    pub analysis: usize,
    pub info_frac: f64,
    pub x: f64,
    #[serde(default)]
    pub z: Option<f64>,
    #[serde(default)]
    pub cutoff: Option<f64>,
    #[serde(default)]
    pub variance: Option<f64>,
    #[serde(default)]
    pub first_moment: Option<f64>,
    #[serde(default)]
    pub r_fraction: Option<f64>,
    #[serde(default)]
    pub n: Option<usize>,
}

impl ObservedAnalysis {
    fn z(&self) -> f64 {
        self.z.unwrap_or(self.x / self.info_frac.sqrt())
    }

    fn r(&self, m_tau: f64) -> Option<f64> {
        self.r_fraction
            .or_else(|| self.first_moment.map(|m| (m / m_tau).clamp(0.0, 1.0)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    /// Inline design document / configuration, or a path to one (relative
    /// to the report configuration).
    pub design: serde_json::Value,
    /// Analyses in order: `AnalysisState` objects or `monitor` documents.
    pub analyses: Vec<serde_json::Value>,
    /// At the last planned analysis, estimate with the observed `V` and `m`
    /// instead of the design values.
    #[serde(default)]
    pub use_observed_final: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub analysis: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<f64>,
    pub info_frac: f64,
    pub planned_fraction: f64,
    pub z: f64,
    pub x: f64,
    pub efficacy_z: Option<f64>,
    pub crossed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub futility_crossed: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inference {
    /// Analysis `J` the inference conditions on.
    pub stop_analysis: usize,
    pub stopped_for_efficacy: bool,
    /// Whether `J` is the last planned analysis.
    pub final_analysis: bool,
    pub p_value: f64,
    pub confidence_level: f64,
    pub beta_hat: f64,
    pub beta_tilde: f64,
    pub mse: f64,
    pub ci_log_rr: [f64; 2],
    pub relative_risk: f64,
    pub relative_risk_adjusted: f64,
    pub ci_rr: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crude: Option<CrudeRates>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub analyses: Vec<ReportRow>,
    pub inference: Inference,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    pub provenance: Provenance,
}

pub fn parse_analyses(values: &[serde_json::Value]) -> Result<Vec<ObservedAnalysis>> {
    values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let v = v.get("state").unwrap_or(v);
            let mut a: ObservedAnalysis = serde_json::from_value(v.clone())
                .with_context(|| format!("analysis entry {}", i + 1))?;
            if a.analysis == 0 {
                a.analysis = i + 1;
            }
            if a.analysis != i + 1 {
                bail!("analysis entry {} is numbered {}; list analyses in order from 1", i + 1, a.analysis);
            }
            Ok(a)
        })
        .collect()
}

/// Inference at the first efficacy crossing, or at the last supplied
/// analysis. `subjects` (data at that analysis) adds the crude rates.
pub fn report(
    doc: &DesignDocument,
    analyses: &[ObservedAnalysis],
    use_observed_final: bool,
    subjects: Option<(&[SubjectRecord], f64)>,
    provenance: Provenance,
) -> Result<ReportDocument> {
    let spec = &doc.design;
    let b = &doc.boundaries;
    let k = spec.fractions.len();
    if analyses.is_empty() {
        bail!("at least one analysis is required");
    }
    if analyses.len() > k {
        bail!("{} analyses supplied but the design plans {k}", analyses.len());
    }
    let sign = b.direction.sign();
    let rows: Vec<ReportRow> = analyses
        .iter()
        .map(|a| {
            let j = a.analysis;
            ReportRow {
                analysis: j,
                cutoff: a.cutoff,
                info_frac: a.info_frac,
                planned_fraction: spec.fractions[j - 1],
                z: a.z(),
                x: a.x,
                efficacy_z: finite(sign * b.efficacy[j - 1]),
                crossed: b.crosses_efficacy(j, a.z()),
                futility_crossed: b.futility.as_ref().map(|_| b.crosses_futility(j, a.z())),
            }
        })
        .collect();
    let mut warnings = Vec::new();
    let stop = rows.iter().position(|r| r.crossed);
    if let Some(i) = stop {
        if i + 1 < analyses.len() {
            warnings.push(format!(
                "efficacy boundary crossed at analysis {}; later analyses are ignored",
                i + 1
            ));
        }
    }
    let j = stop.map_or(analyses.len(), |i| i + 1);
    if stop.is_none() && j < k {
        warnings.push(format!(
            "no efficacy crossing through analysis {j} of {k}; inference treats analysis {j} as the stopping point"
        ));
    }
    let used = &analyses[..j];
    let fractions: Vec<f64> = used.iter().map(|a| a.info_frac).collect();
    let r: Option<Vec<f64>> = used.iter().map(|a| a.r(spec.m_tau)).collect();
    let last = &used[j - 1];
    let posthoc = Posthoc::new(spec, b, &fractions, r.as_deref())?;
    let fun = if use_observed_final && j == k {
        match (last.variance, last.first_moment, last.n) {
            (Some(v), Some(m), Some(n)) => EndFunctionals { v_tau: v, m_tau: m, n },
            _ => bail!("use_observed_final needs variance, first_moment and n for the final analysis"),
        }
    } else {
        spec.functionals()
    };
    let r_j = r.as_ref().map(|r| r[j - 1]);
    let est = estimate_from_brownian(last.x, last.info_frac, spec.shape, r_j, &fun, j)?;
    let zeta = posthoc.zeta(last.x)?;
    let beta_tilde = zeta * fun.scale_factor()?;
    let (lo, hi) = posthoc.interval_around(est.beta_hat, est.mse)?;
    let crude = subjects.map(|(recs, cutoff)| crude_rates(recs, cutoff));
    Ok(ReportDocument {
        analyses: rows,
        inference: Inference {
            stop_analysis: j,
            stopped_for_efficacy: stop.is_some(),
            final_analysis: j == k,
            p_value: posthoc.p_value(last.x),
            // half the remaining error in each tail for one-sided designs
            confidence_level: 1.0 - spec.alpha,
            beta_hat: est.beta_hat,
            beta_tilde,
            mse: est.mse,
            ci_log_rr: [lo, hi],
            relative_risk: est.beta_hat.exp(),
            relative_risk_adjusted: beta_tilde.exp(),
            ci_rr: [lo.exp(), hi.exp()],
            crude,
        },
        warnings,
        provenance,
    })
}
