use proptest::prelude::*;
use srpt_ht::distributions::Law;
use srpt_ht::scaling::{drift, make_params};

fn law() -> impl Strategy<Value = Law> {
    prop_oneof![
        (0.2f64..5.0).prop_map(|rate| Law::exponential(rate).unwrap()),
        (0.2f64..3.0, 1.0f64..3.0).prop_map(|(scale, shape)| Law::weibull(scale, shape).unwrap()),
        (1.5f64..4.0, 0.5f64..2.0).prop_map(|(index, x_m)| Law::pareto(index, x_m).unwrap()),
    ]
}

proptest! {
    #[test]
    fn frontier_inverts_scale_function(law in law(), log_r in 1.0f64..12.0) {
        let r = law.big_s(0.0).unwrap() * log_r.exp();
        let p = make_params(&law, r, -0.5).unwrap();
        prop_assert!((law.big_s(p.c_r).unwrap() - r).abs() <= 1e-9 * r);
    }

    #[test]
    fn drift_cancels_at_one_and_rises_with_a(law in law(), log_r in 1.0f64..8.0, kappa in -2.0f64..0.5) {
        let r = (law.big_s(0.0).unwrap() * log_r.exp()).max(2.5);
        let p = make_params(&law, r, kappa).unwrap();
        prop_assert_eq!(drift(&p, 1.0).unwrap(), kappa - p.lambda_r);
        let ds: Vec<f64> = [0.25, 0.5, 1.0, 1.5, 3.0].iter().map(|&a| drift(&p, a).unwrap()).collect();
        prop_assert!(ds.windows(2).all(|w| w[0] <= w[1]), "{ds:?}");
        prop_assert!(ds.iter().all(|&d| d <= kappa));
    }

    #[test]
    fn arrival_rate_sets_heavy_traffic_drift(law in law(), r in 2.0f64..1e4, kappa in -2.0f64..1.0) {
        prop_assume!(r > law.big_s(0.0).unwrap() && r > -kappa);
        let p = make_params(&law, r, kappa).unwrap();
        prop_assert!((r * (p.rho() - 1.0) - kappa).abs() <= 1e-9 * (1.0 + r));
    }
}
