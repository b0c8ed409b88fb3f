//! Plain-text tables for `--pretty`.

use std::fmt::Write;

use crate::design::DesignDocument;
use crate::monitor::MonitorDocument;
use crate::project::ProjectDocument;
use crate::report::ReportDocument;
use crate::simulate::SimulateDocument;

fn num(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
}

fn warnings(out: &mut String, w: &[String]) {
    for line in w {
        let _ = writeln!(out, "warning: {line}");
    }
}

pub fn design(d: &DesignDocument) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "alpha {} ({:?}), beta* {}, n {}, v(tau) {:.6}, m(tau) {:.6}",
        d.design.alpha, d.design.sided, d.design.beta_star, d.design.n, d.design.v_tau, d.design.m_tau
    );
    let _ = writeln!(
        s,
        "{:>3} {:>8} {:>8} {:>8} {:>9} {:>9} {:>8} {:>9} {:>10} {:>9}",
        "j", "time", "frac", "drift", "eff Z", "eff logRR", "eff RR", "fut Z", "alpha", "stop"
    );
    for r in &d.schedule {
        let _ = writeln!(
            s,
            "{:>3} {:>8} {:>8.4} {:>8.4} {:>9} {:>9} {:>8} {:>9} {:>10.3e} {:>9.4}",
            r.analysis,
            num(r.time),
            r.fraction,
            r.drift,
            num(r.efficacy_z),
            num(r.efficacy_log_rr),
            num(r.efficacy_rr),
            num(r.futility_z),
            r.alpha_spent,
            r.stop_mass
        );
    }
    warnings(&mut s, &d.boundaries.warnings);
    warnings(&mut s, &d.warnings);
    s
}

pub fn monitor(m: &MonitorDocument) -> String {
    let mut s = String::new();
    let st = &m.state;
    let _ = writeln!(
        s,
        "analysis {} at cutoff {}: n {}, events {}",
        m.analysis, st.cutoff, st.n, st.events
    );
    let _ = writeln!(
        s,
        "Z {:.4}  X {:.4}  info fraction {:.4} (planned {:.4})",
        st.z, st.x, st.info_frac, m.planned_fraction
    );
    let _ = writeln!(
        s,
        "efficacy boundary {}  crossed: {}",
        num(m.efficacy_z),
        m.efficacy_crossed
    );
    if let Some(c) = m.futility_crossed {
        let _ = writeln!(s, "futility boundary {}  crossed: {c}", num(m.futility_z));
    }
    let _ = writeln!(
        s,
        "beta* estimate {:.4}  RR {:.4}  design drift {:.4}",
        m.estimate.beta_hat, m.relative_risk, m.design_drift
    );
    warnings(&mut s, &m.warnings);
    s
}

pub fn report(r: &ReportDocument) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>3} {:>8} {:>8} {:>8} {:>9} {:>7}",
        "j", "frac", "planned", "Z", "eff Z", "crossed"
    );
    for a in &r.analyses {
        let _ = writeln!(
            s,
            "{:>3} {:>8.4} {:>8.4} {:>8.4} {:>9} {:>7}",
            a.analysis,
            a.info_frac,
            a.planned_fraction,
            a.z,
            num(a.efficacy_z),
            a.crossed
        );
    }
    let i = &r.inference;
    let _ = writeln!(
        s,
        "stopped at analysis {} ({}), p = {:.4e}",
        i.stop_analysis,
        if i.stopped_for_efficacy { "efficacy" } else { "no crossing" },
        i.p_value
    );
    let _ = writeln!(
        s,
        "RR {:.4} (adjusted {:.4}), {:.1}% CI {:.4} to {:.4}",
        i.relative_risk,
        i.relative_risk_adjusted,
        100.0 * i.confidence_level,
        i.ci_rr[0],
        i.ci_rr[1]
    );
    if let Some(c) = &i.crude {
        let _ = writeln!(
            s,
            "crude rates: {} / {:.1} vs {} / {:.1}, ratio {}",
            c.events_trt,
            c.person_time_trt,
            c.events_ctl,
            c.person_time_ctl,
            num(c.risk_ratio)
        );
    }
    warnings(&mut s, &r.warnings);
    s
}

pub fn project(p: &ProjectDocument) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "v(tau) {:.8}  m(tau) {:.8}  G(tau) {:.8}  K {:.6}  tau {}",
        p.projection.v_tau, p.projection.m_tau, p.projection.g_tau, p.k, p.inputs.tau
    );
    for r in &p.interim {
        let _ = writeln!(
            s,
            "t {:>8}  v {:.8}  m {:.8}  frac {:.4}  r {:.4}",
            r.time, r.v, r.m, r.fraction, r.r_fraction
        );
    }
    for r in &p.theta_sweep {
        let _ = writeln!(s, "theta {:>6}  v {:.8}  m {:.8}", r.theta, r.v_tau, r.m_tau);
    }
    if let Some(q) = &p.perturbation {
        let _ = writeln!(
            s,
            "+/-{} landmarks: common v {:.4} m {:.4}, independent v {:.4} m {:.4}",
            q.relative, q.common_v, q.common_m, q.independent_v, q.independent_m
        );
    }
    if let Some(o) = &p.oracle {
        let _ = writeln!(
            s,
            "oracle rel error v {:.2e} m {:.2e} G {:.2e}",
            o.rel_error_v, o.rel_error_m, o.rel_error_g
        );
    }
    if let Some(d) = p.ramp_discrepancy {
        let _ = writeln!(s, "ramp discrepancy {d:.4}");
    }
    warnings(&mut s, &p.warnings);
    s
}

pub fn simulate(d: &SimulateDocument) -> String {
    let mut s = String::new();
    let sm = &d.summary;
    let _ = writeln!(
        s,
        "{} replicates, n {}, true beta* {:.5}, failures {}",
        sm.replicates, sm.n, sm.limiting.true_beta_star, sm.failures
    );
    let _ = writeln!(
        s,
        "rejection {:.4} (se {:.4}), coverage {:.4} (se {:.4})",
        sm.rejection_rate.estimate, sm.rejection_rate.se, sm.coverage.estimate, sm.coverage.se
    );
    let _ = writeln!(
        s,
        "{:>3} {:>8} {:>8} {:>9} {:>9} {:>8}",
        "j", "time", "frac", "drift", "mean X", "cross"
    );
    for j in 0..sm.limiting.fractions.len() {
        let _ = writeln!(
            s,
            "{:>3} {:>8.4} {:>8.4} {:>9.4} {:>9.4} {:>8.4}",
            j + 1,
            sm.limiting.analysis_times[j],
            sm.limiting.fractions[j],
            sm.limiting.drift[j],
            sm.mean_x[j].estimate,
            sm.efficacy_crossing[j]
        );
    }
    let _ = writeln!(
        s,
        "bias: end {:.5}, raw {:.5}, adjusted {:.5}",
        sm.bias_end.estimate, sm.bias_raw.estimate, sm.bias_adjusted.estimate
    );
    s
}
