use proptest::prelude::*;
use wlrseq::projection::{HazardCurve, ProjectionInputs};

/// Landmarks from a linear-plus-quadratic cumulative hazard.
fn landmarks(slope: f64, curve: f64, theta: f64, t_c: f64, t_er: f64, tau: f64) -> ProjectionInputs {
    let h = |t: f64| slope * t + curve * t * t;
    ProjectionInputs {
        h_tc: h(t_c.min(tau)),
        h_tau_minus_ter: h(tau - t_er),
        h_tau: h(tau),
        theta,
        e0: 0.5,
        t_c,
        t_er,
        tau,
    }
}

proptest! {
    #[test]
    fn closed_forms_match_quadrature(
        slope in 1e-4f64..0.02,
        curve in 0.0f64..0.002,
        theta in 0.0f64..2.0,
        t_c in 0.5f64..9.0,
        t_er in 0.0f64..5.0,
    ) {
        let p = landmarks(slope, curve, theta, t_c, t_er, 7.0);
        let o = p.oracle().unwrap();
        let c = p.project().unwrap();
        prop_assert!((c.v_tau - o.v_tau).abs() <= 1e-9 * o.v_tau);
        prop_assert!((c.m_tau - o.m_tau).abs() <= 1e-9 * o.m_tau);
        prop_assert!((c.g_tau - o.g_tau).abs() <= 1e-9 * o.g_tau);
        prop_assert!(o.m_tau * o.m_tau <= o.v_tau * o.one_one * (1.0 + 1e-12));
    }

    #[test]
    fn nondecreasing_in_final_hazard(
        slope in 1e-3f64..0.02,
        theta in 0.0f64..2.0,
        t_c in 0.5f64..6.0,
        bump in 0.0f64..0.05,
    ) {
        let p = landmarks(slope, 0.0, theta, t_c, 1.5, 7.0);
        let q = ProjectionInputs { h_tau: p.h_tau + bump, ..p };
        let (a, b) = (p.project().unwrap(), q.project().unwrap());
        prop_assert!(b.v_tau >= a.v_tau * (1.0 - 1e-14));
        prop_assert!(b.m_tau >= a.m_tau * (1.0 - 1e-14));
        prop_assert!(b.g_tau >= a.g_tau * (1.0 - 1e-14));
    }
}

#[test]
fn curve_landmarks_and_duration() {
    let h = HazardCurve::new(vec![2.0, 8.0], vec![0.004, 0.02]).unwrap();
    let p = h.inputs(1.0, 0.5, 4.0, 1.7, 7.4);
    assert!((p.h_tc - (0.004 + 2.0 * 0.016 / 6.0)).abs() < 1e-15);
    let g = p.event_mass().unwrap();
    let tau = h.solve_duration(1.0, 1.7, g).unwrap();
    assert!((tau - 7.4).abs() < 1e-8);
}
