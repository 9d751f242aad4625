use std::sync::Arc;

use proptest::prelude::*;

use lyapunov_lab::core::{
    boltzmann_gibbs, tv_norm, v_norm_values, FunctionVec, GridDomain, LyapunovSpec, MeasureVec,
};

fn leaf() -> impl Strategy<Value = LyapunovSpec> {
    prop_oneof![
        (1u32..5).prop_map(|k| LyapunovSpec::Poly(k as f64)),
        (1u32..8).prop_map(|k| LyapunovSpec::Exp(k as f64 / 8.0)),
        (1u32..4).prop_map(|k| LyapunovSpec::Const(k as f64)),
    ]
}

fn spec() -> impl Strategy<Value = LyapunovSpec> {
    leaf().prop_recursive(2, 6, 3, |inner| {
        prop_oneof![
            (1u32..4, inner.clone()).prop_map(|(p, b)| LyapunovSpec::Pow { p: p as f64, base: Box::new(b) }),
            (1u32..3, 1u32..4, inner.clone()).prop_map(|(a, b, base)| LyapunovSpec::AffineRescale {
                a: a as f64,
                b: b as f64 / 2.0,
                base: Box::new(base)
            }),
            prop::collection::vec(inner, 2..3).prop_map(LyapunovSpec::Product),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lyapunov_spelling_round_trips(v in spec(), x in -3.0f64..3.0) {
        let text = v.to_string();
        let back: LyapunovSpec = text.parse().unwrap();
        prop_assert_eq!(&back, &v);
        prop_assert_eq!(back.eval1(x).unwrap().to_bits(), v.eval1(x).unwrap().to_bits());
    }

    #[test]
    fn v_norm_dominates_total_variation(masses in prop::collection::vec(-1.0f64..1.0, 21), k in 1u32..4) {
        let grid = Arc::new(GridDomain::uniform(-2.0, 2.0, 21).unwrap());
        let v = LyapunovSpec::Poly(k as f64).eval_on(&grid).unwrap();
        prop_assert!(v.iter().all(|&x| x >= 1.0));
        let mu = MeasureVec::new(grid, masses.clone()).unwrap();
        prop_assert!(v_norm_values(&masses, &v) >= 2.0 * tv_norm(&mu) - 1e-12);
    }

    #[test]
    fn boltzmann_gibbs_reweights(masses in prop::collection::vec(0.01f64..1.0, 15), hs in prop::collection::vec(0.1f64..5.0, 15)) {
        let grid = Arc::new(GridDomain::uniform(0.0, 1.0, 15).unwrap());
        let mu = MeasureVec::new(grid.clone(), masses.clone()).unwrap();
        let h = FunctionVec::new(grid, hs.clone()).unwrap();
        let psi = boltzmann_gibbs(&h, &mu).unwrap();
        prop_assert!(psi.is_probability(1e-12));
        // Ratios of atoms are ratios of h * mu.
        for i in 1..15 {
            let want = (hs[i] * masses[i]) / (hs[0] * masses[0]);
            prop_assert!((psi.masses[i] / psi.masses[0] - want).abs() <= 1e-10 * want.max(1.0));
        }
    }
}

#[test]
fn rejects_bad_spellings() {
    for bad in ["", "poly", "poly:-1", "exp:abc", "product:[poly:2", "nope:1"] {
        assert!(bad.parse::<LyapunovSpec>().is_err(), "{bad} parsed");
    }
}

#[test]
fn cell_centred_grid_avoids_endpoints() {
    let g = GridDomain::cell_centred(0.0, 1.0, 10).unwrap();
    assert!(g.xs().iter().all(|&x| x > 0.0 && x < 1.0));
    assert!((g.weights().iter().sum::<f64>() - 1.0).abs() < 1e-14);
}
