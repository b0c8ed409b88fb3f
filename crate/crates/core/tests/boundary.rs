use proptest::prelude::*;
use wlrseq::boundary::{design_boundaries, DesignSpec, GridSpec, Posthoc, Sidedness, SpendingFunction};
use wlrseq::drift::ShapeCondition;

fn spec(alpha: f64, spending: SpendingFunction, fractions: Vec<f64>, sided: Sidedness) -> DesignSpec {
    DesignSpec {
        alpha,
        sided,
        spending,
        fractions,
        r_fractions: None,
        shape: ShapeCondition::OptimalWeight,
        beta_star: -0.2,
        v_tau: 0.05,
        m_tau: 0.06,
        n: 2000,
        direction: None,
        futility: None,
        grid: GridSpec { step: 0.01, half_width: 8.0 },
    }
}

fn family() -> impl Strategy<Value = SpendingFunction> {
    prop_oneof![
        Just(SpendingFunction::OBrienFleming),
        Just(SpendingFunction::Pocock),
        (0.5f64..4.0).prop_map(|rho| SpendingFunction::Power { rho }),
    ]
}

fn fractions() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..1.0, 1..5).prop_map(|mut v| {
        v.sort_by(f64::total_cmp);
        v.dedup_by(|a, b| (*a - *b).abs() < 0.02);
        v.push(1.0);
        v
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn stop_mass_tracks_spending(
        alpha in 0.01f64..0.1,
        spending in family(),
        fr in fractions(),
        two in any::<bool>(),
    ) {
        let sided = if two { Sidedness::TwoSided } else { Sidedness::OneSided };
        let s = spec(alpha, spending, fr, sided);
        let b = design_boundaries(&s).unwrap();
        prop_assert!((b.alpha_spent.last().unwrap() - alpha).abs() < 1e-12);
        let total: f64 = b.stop_mass.iter().sum();
        prop_assert!((total - alpha).abs() < 1e-6, "{total}");
        prop_assert!(b.alpha_spent.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn p_value_decreases_beyond_boundary(alpha in 0.01f64..0.1, spending in family()) {
        let s = spec(alpha, spending, vec![0.3, 0.6, 1.0], Sidedness::OneSided);
        let b = design_boundaries(&s).unwrap();
        let post = Posthoc::new(&s, &b, &s.fractions[..2], None).unwrap();
        // efficacy is the lower tail for a negative design alternative
        let x0 = -b.efficacy[1] * s.fractions[1].sqrt();
        let (p0, p1) = (post.p_value(x0), post.p_value(x0 - 0.5));
        prop_assert!(p1 < p0);
        prop_assert!((p0 - b.alpha_spent[1]).abs() < 1e-6);
    }
}

#[test]
fn spending_families_are_cumulative_distributions() {
    for f in [
        SpendingFunction::OBrienFleming,
        SpendingFunction::Pocock,
        SpendingFunction::Power { rho: 2.0 },
    ] {
        let vals: Vec<f64> = (0..=20).map(|i| f.cumulative(0.05, i as f64 / 20.0)).collect();
        assert_eq!(vals[0], 0.0);
        assert_eq!(vals[20], 0.05);
        assert!(vals.windows(2).all(|w| w[1] >= w[0]));
    }
}
