//! Subject-level survival records and their aggregation into counting-process
//! increments at distinct event times.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One randomized subject: observed study time, event indicator, arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub id: String,
    /// Time on study in years.
    pub time: f64,
    pub event: bool,
    /// 1 = intervention, 0 = control.
    pub arm: u8,
}

impl SubjectRecord {
    /// Builds a record, validating the arm code and the time.
    pub fn new(id: impl Into<String>, time: f64, event: bool, arm: i64) -> Result<Self> {
        if !(0..=1).contains(&arm) {
            return Err(Error::BadArm(arm));
        }
        if !time.is_finite() || time < 0.0 {
            return Err(Error::BadTime(time));
        }
        Ok(Self {
            id: id.into(),
            time,
            event,
            arm: arm as u8,
        })
    }
}

/// Aggregated increments at one distinct event time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRow {
    pub time: f64,
    /// dN: events at this time, both arms.
    pub events: u32,
    /// Intervention-arm events at this time.
    pub events_trt: u32,
    /// Subjects with `T_i >= time`.
    pub at_risk: u32,
    /// Intervention-arm subjects with `T_i >= time`.
    pub at_risk_trt: u32,
}

impl EventRow {
    /// Proportion of the risk set in the intervention arm, `E_n(t, 0)`.
    pub fn prop_at_risk(&self) -> Result<f64> {
        if self.at_risk == 0 {
            return Err(Error::EmptyRiskSet(self.time));
        }
        Ok(self.at_risk_trt as f64 / self.at_risk as f64)
    }
}

/// Distinct event times with their counts and risk sets, as of a data cutoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTable {
    rows: Vec<EventRow>,
    n: usize,
    cutoff: f64,
}

impl EventTable {
    pub fn rows(&self) -> &[EventRow] {
        &self.rows
    }

    /// Number of subjects (all records, with or without events).
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn total_events(&self) -> u64 {
        self.rows.iter().map(|r| r.events as u64).sum()
    }

    pub fn total_events_trt(&self) -> u64 {
        self.rows.iter().map(|r| r.events_trt as u64).sum()
    }

    /// Rows with `time <= t`.
    pub fn rows_through(&self, t: f64) -> &[EventRow] {
        let end = self.rows.partition_point(|r| r.time <= t);
        &self.rows[..end]
    }

    /// Proportion at risk in the intervention arm at the listed event time `xi`.
    pub fn prop_at_risk(&self, xi: f64) -> Result<f64> {
        let idx = self
            .rows
            .binary_search_by(|r| r.time.total_cmp(&xi))
            .map_err(|_| Error::invalid(format!("{xi} is not a listed event time")))?;
        self.rows[idx].prop_at_risk()
    }

    /// Pooled Kaplan–Meier estimate, as a right-continuous step function.
    pub fn pooled_km(&self) -> StepSurvival {
        let mut s = 1.0;
        let mut times = Vec::with_capacity(self.rows.len());
        let mut values = Vec::with_capacity(self.rows.len());
        for r in &self.rows {
            s *= 1.0 - r.events as f64 / r.at_risk as f64;
            times.push(r.time);
            values.push(s);
        }
        StepSurvival { times, values }
    }
}

/// A survival curve that steps down at `times[i]` to `values[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSurvival {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl StepSurvival {
    /// Left-continuous value `S(t-)`.
    pub fn left_limit(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&x| x < t);
        if k == 0 {
            1.0
        } else {
            self.values[k - 1]
        }
    }
}

/// Aggregates records into an [`EventTable`] at the data cutoff.
///
/// Events after the cutoff are dropped; every subject whose time exceeds the
/// cutoff stays at risk through it. Risk sets use `T_i >= xi`, so a subject
/// censored at an event time still counts at that time.
pub fn ingest(records: &[SubjectRecord], cutoff: f64) -> Result<EventTable> {
    if records.is_empty() {
        return Err(Error::NoSubjects);
    }
    if !(cutoff > 0.0) {
        return Err(Error::invalid(format!("cutoff must be > 0, got {cutoff}")));
    }
    for r in records {
        if r.arm > 1 {
            return Err(Error::BadArm(r.arm as i64));
        }
        if !r.time.is_finite() || r.time < 0.0 {
            return Err(Error::BadTime(r.time));
        }
    }
    let mut obs: Vec<(f64, bool, bool)> = records
        .iter()
        .map(|r| (r.time, r.event, r.arm == 1))
        .collect();
    Ok(aggregate(&mut obs, cutoff))
}

/// Core aggregation over `(time, event, is_trt)` triples; sorts in place.
pub(crate) fn aggregate(obs: &mut [(f64, bool, bool)], cutoff: f64) -> EventTable {
    obs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    let n = obs.len();
    let mut remaining = n as u32;
    let mut remaining_trt = obs.iter().filter(|o| o.2).count() as u32;
    let mut rows = Vec::new();
    let mut i = 0;
    while i < n {
        let t = obs[i].0;
        let mut j = i;
        let (mut events, mut events_trt, mut leaving_trt) = (0u32, 0u32, 0u32);
        while j < n && obs[j].0 == t {
            if obs[j].1 && t <= cutoff {
                events += 1;
                events_trt += obs[j].2 as u32;
            }
            leaving_trt += obs[j].2 as u32;
            j += 1;
        }
        if events > 0 {
            rows.push(EventRow {
                time: t,
                events,
                events_trt,
                at_risk: remaining,
                at_risk_trt: remaining_trt,
            });
        }
        remaining -= (j - i) as u32;
        remaining_trt -= leaving_trt;
        i = j;
    }
    EventTable { rows, n, cutoff }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(id: &str, t: f64, d: bool, x: i64) -> SubjectRecord {
        SubjectRecord::new(id, t, d, x).unwrap()
    }

    fn two() -> Vec<SubjectRecord> {
        vec![rec("a", 1.0, true, 1), rec("b", 2.0, true, 0)]
    }

    #[test]
    fn two_subject_table() {
        let t = ingest(&two(), 3.0).unwrap();
        assert_eq!(
            t.rows(),
            &[
                EventRow { time: 1.0, events: 1, events_trt: 1, at_risk: 2, at_risk_trt: 1 },
                EventRow { time: 2.0, events: 1, events_trt: 0, at_risk: 1, at_risk_trt: 0 },
            ]
        );
        assert_eq!(t.n(), 2);
    }

    #[test]
    fn truncation_at_cutoff() {
        let t = ingest(&two(), 1.5).unwrap();
        assert_eq!(t.rows().len(), 1);
        assert_eq!(t.rows()[0].at_risk, 2);
        assert_eq!(t.rows()[0].at_risk_trt, 1);
    }

    #[test]
    fn no_events() {
        let recs = vec![rec("a", 1.0, false, 1), rec("b", 2.0, false, 0)];
        let t = ingest(&recs, 3.0).unwrap();
        assert!(t.rows().is_empty());
        assert_eq!(t.n(), 2);
    }

    #[test]
    fn errors() {
        assert_eq!(ingest(&[], 1.0), Err(Error::NoSubjects));
        assert_eq!(SubjectRecord::new("x", 1.0, true, 2), Err(Error::BadArm(2)));
        let mut r = rec("a", 1.0, true, 1);
        r.arm = 3;
        assert_eq!(ingest(&[r], 1.0), Err(Error::BadArm(3)));
        assert!(SubjectRecord::new("x", -1.0, true, 0).is_err());
    }

    #[test]
    fn ties_and_censoring_at_event_time() {
        // two events and one censoring at t=1; the censored subject is still at risk
        let recs = vec![
            rec("a", 1.0, true, 1),
            rec("b", 1.0, true, 0),
            rec("c", 1.0, false, 1),
            rec("d", 3.0, true, 0),
        ];
        let t = ingest(&recs, 5.0).unwrap();
        assert_eq!(t.rows()[0], EventRow { time: 1.0, events: 2, events_trt: 1, at_risk: 4, at_risk_trt: 2 });
        assert_eq!(t.rows()[1], EventRow { time: 3.0, events: 1, events_trt: 0, at_risk: 1, at_risk_trt: 0 });
    }

    #[test]
    fn prop_at_risk_values() {
        let row = |trt, tot| EventRow { time: 1.0, events: 1, events_trt: 0, at_risk: tot, at_risk_trt: trt };
        assert_eq!(row(1, 2).prop_at_risk().unwrap(), 0.5);
        assert_eq!(row(0, 1).prop_at_risk().unwrap(), 0.0);
        assert_eq!(row(5, 5).prop_at_risk().unwrap(), 1.0);
        assert_eq!(row(0, 0).prop_at_risk(), Err(Error::EmptyRiskSet(1.0)));
        let t = ingest(&two(), 3.0).unwrap();
        assert_eq!(t.prop_at_risk(1.0).unwrap(), 0.5);
        assert!(t.prop_at_risk(1.5).is_err());
    }

    fn records() -> impl Strategy<Value = Vec<SubjectRecord>> {
        prop::collection::vec((0u32..40, any::<bool>(), 0i64..2), 1..40).prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(i, (t, d, x))| rec(&i.to_string(), t as f64 / 4.0, d, x))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn permutation_invariant(recs in records(), seed in any::<u64>()) {
            let mut shuffled = recs.clone();
            // deterministic Fisher–Yates driven by a simple LCG
            let mut s = seed;
            for i in (1..shuffled.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                shuffled.swap(i, (s >> 33) as usize % (i + 1));
            }
            prop_assert_eq!(ingest(&recs, 7.0).unwrap(), ingest(&shuffled, 7.0).unwrap());
        }

        #[test]
        fn cutoff_monotone(recs in records(), c1 in 1u32..40, dc in 0u32..40) {
            let lo = c1 as f64 / 4.0;
            let hi = lo + dc as f64 / 4.0;
            let a = ingest(&recs, lo).unwrap();
            let b = ingest(&recs, hi).unwrap();
            prop_assert!(b.rows().len() >= a.rows().len());
            for r in a.rows() {
                let m = b.rows().iter().find(|x| x.time == r.time).unwrap();
                prop_assert_eq!(m, r);
            }
            let expected = recs.iter().filter(|r| r.event && r.time <= lo).count() as u64;
            prop_assert_eq!(a.total_events(), expected);
            for r in a.rows() {
                prop_assert!(r.at_risk_trt <= r.at_risk);
                prop_assert!(r.events >= 1);
            }
            for w in a.rows().windows(2) {
                prop_assert!(w[1].at_risk <= w[0].at_risk);
            }
        }
    }
}
