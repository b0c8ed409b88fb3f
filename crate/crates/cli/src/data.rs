//! Subject-level CSV with header `id,time,event,arm`.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use wlrseq::survival_data::SubjectRecord;

use crate::sha256_hex;

#[derive(Debug, Deserialize)]
struct Row {
    id: String,
    time: f64,
    event: String,
    arm: i64,
}

fn parse_event(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" => Some(true),
        "0" | "false" => Some(false),
        _ => None,
    }
}

pub fn parse_subjects(bytes: &[u8]) -> Result<Vec<SubjectRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let headers = rdr.headers().context("reading CSV header")?.clone();
    for col in ["id", "time", "event", "arm"] {
        if !headers.iter().any(|h| h == col) {
            bail!("CSV header is missing column `{col}` (expected id,time,event,arm)");
        }
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| match e.position() {
            Some(p) => anyhow!("line {}: {e}", p.line()),
            None => anyhow!(e),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let row: Row = rec
            .deserialize(Some(&headers))
            .map_err(|e| anyhow!("line {line}: {e}"))?;
        let event = parse_event(&row.event)
            .ok_or_else(|| anyhow!("line {line}: event must be 0/1 or true/false, got `{}`", row.event))?;
        let r = SubjectRecord::new(row.id, row.time, event, row.arm)
            .with_context(|| format!("line {line}"))?;
        out.push(r);
    }
    Ok(out)
}

/// Parsed subject data and the SHA-256 of the file it came from.
#[derive(Debug, Clone)]
pub struct SubjectData {
    pub records: Vec<SubjectRecord>,
    pub sha256: String,
}

pub fn read_subjects(path: &Path) -> Result<SubjectData> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let records = parse_subjects(&bytes).with_context(|| format!("parsing {}", path.display()))?;
    Ok(SubjectData {
        records,
        sha256: sha256_hex(&bytes),
    })
}

pub fn write_subjects(path: &Path, records: &[SubjectRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["id", "time", "event", "arm"])?;
    for r in records {
        w.write_record([
            r.id.clone(),
            r.time.to_string(),
            u8::from(r.event).to_string(),
            r.arm.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Events per unit person-time by arm and their ratio (intervention over
/// control), follow-up truncated at `cutoff`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrudeRates {
    pub events_trt: u64,
    pub events_ctl: u64,
    pub person_time_trt: f64,
    pub person_time_ctl: f64,
    pub risk_ratio: Option<f64>,
}

pub fn crude_rates(records: &[SubjectRecord], cutoff: f64) -> CrudeRates {
    let mut c = CrudeRates {
        events_trt: 0,
        events_ctl: 0,
        person_time_trt: 0.0,
        person_time_ctl: 0.0,
        risk_ratio: None,
    };
    for r in records {
        let t = r.time.min(cutoff);
        let event = u64::from(r.event && r.time <= cutoff);
        if r.arm == 1 {
            c.events_trt += event;
            c.person_time_trt += t;
        } else {
            c.events_ctl += event;
            c.person_time_ctl += t;
        }
    }
    if c.events_ctl > 0 && c.person_time_trt > 0.0 {
        let rate_trt = c.events_trt as f64 / c.person_time_trt;
        let rate_ctl = c.events_ctl as f64 / c.person_time_ctl;
        c.risk_ratio = Some(rate_trt / rate_ctl);
    }
    c
}
