use proptest::prelude::*;

use lyapunov_lab::subgeometric::{ode_majorant, polynomial_family, prototype_drift};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn majorant_bounds_drifting_sequences(
        p in 1.0f64..2.5,
        u0 in 0.5f64..5.0,
        frac in 0.05f64..0.9,
        slack in prop::collection::vec(0.0f64..0.3, 60),
    ) {
        let kappa = frac / u0.powf(p - 1.0);
        let varsigma = move |u: f64| kappa * u.powf(p);
        let bound = ode_majorant(u0, &varsigma, 60).unwrap();
        prop_assert_eq!(bound[0], u0);
        let mut u = u0;
        for t in 0..60 {
            prop_assert!(bound[t + 1] <= bound[t]);
            prop_assert!(u <= bound[t] * (1.0 + 1e-9), "u_{} = {} above {}", t, u, bound[t]);
            u -= varsigma(u) + slack[t] * (u - varsigma(u));
        }
    }

    #[test]
    fn linear_rate_gives_exponential_majorant(k in 0.05f64..1.0, u0 in 0.1f64..10.0) {
        let b = ode_majorant(u0, &move |u: f64| k * u, 20).unwrap();
        for (t, v) in b.iter().enumerate() {
            let exact = u0 * (-k * t as f64).exp();
            prop_assert!((v - exact).abs() <= 1e-9 * exact.max(1e-300));
        }
    }
}

#[test]
fn polynomial_family_rates() {
    for n in 3..7 {
        for i in 2..n {
            let (delta, upsilon) = polynomial_family(n, i).unwrap();
            let d = prototype_drift(delta, upsilon, 1.0, 1.0).unwrap();
            assert!((1.0 / d.chi - (i - 1) as f64).abs() < 1e-12, "(n, i) = ({n}, {i})");
        }
    }
}

#[test]
fn rejects_nonpositive_start() {
    assert!(ode_majorant(0.0, &|u| u, 5).is_err());
    assert!(ode_majorant(1.0, &|_| 0.0, 5).is_err());
}
