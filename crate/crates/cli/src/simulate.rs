//! `simulate`: Monte Carlo operating characteristics of a monitoring design.

use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use wlrseq::sim::{run_study, ReplicateResult, SimScenario, StudyDesign, StudySummary};

use crate::Provenance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub scenario: SimScenario,
    pub design: StudyDesign,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateDocument {
    pub scenario: SimScenario,
    pub summary: StudySummary,
    pub provenance: Provenance,
}

/// Runs the study; `seed` replaces the configured master seed.
pub fn simulate(
    cfg: &SimulateConfig,
    seed: Option<u64>,
    provenance: Provenance,
) -> Result<(SimulateDocument, Vec<ReplicateResult>)> {
    let mut scenario = cfg.scenario.clone();
    if let Some(s) = seed {
        scenario.master_seed = s;
    }
    let (summary, reps) = run_study(&scenario, &cfg.design)?;
    Ok((
        SimulateDocument {
            scenario,
            summary,
            provenance,
        },
        reps,
    ))
}

fn join(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

/// One row per replicate; per-analysis vectors are `;`-separated.
pub fn write_replicates(path: &Path, reps: &[ReplicateResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record([
        "index",
        "x",
        "z",
        "info_frac",
        "events",
        "stopped_at",
        "futility_at",
        "inference_at",
        "beta_hat",
        "beta_tilde",
        "ci_lower",
        "ci_upper",
        "p_value",
        "beta_hat_end",
        "error",
    ])?;
    let opt = |o: Option<usize>| o.map_or(String::new(), |v| v.to_string());
    for r in reps {
        w.write_record([
            r.index.to_string(),
            join(&r.x),
            join(&r.z),
            join(&r.info_frac),
            r.events.iter().map(u64::to_string).collect::<Vec<_>>().join(";"),
            opt(r.stopped_at),
            opt(r.futility_at),
            r.inference_at.to_string(),
            r.beta_hat.to_string(),
            r.beta_tilde.to_string(),
            r.ci_lower.to_string(),
            r.ci_upper.to_string(),
            r.p_value.to_string(),
            r.beta_hat_end.to_string(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
