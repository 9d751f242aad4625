use std::sync::Arc;

use proptest::prelude::*;

use lyapunov_lab::contraction::{dobrushin, random_lemma_trial, v_dobrushin_values};
use lyapunov_lab::core::{v_norm_values, GridDomain};
use lyapunov_lab::kernels::DiscreteOperator;

fn markov(rows: Vec<Vec<f64>>) -> DiscreteOperator {
    let n = rows.len();
    let rows: Vec<Vec<f64>> = rows
        .into_iter()
        .map(|r| {
            let s: f64 = r.iter().sum();
            r.into_iter().map(|x| x / s).collect()
        })
        .collect();
    let grid = Arc::new(GridDomain::lattice(0, n).unwrap());
    DiscreteOperator::from_rows(grid, &rows, 1.0).unwrap()
}

const N: usize = 6;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn v_dobrushin_bounds_zero_mass_contraction(
        rows in prop::collection::vec(prop::collection::vec(0.01f64..1.0, N), N),
        v in prop::collection::vec(1.0f64..20.0, N),
        signed in prop::collection::vec(-1.0f64..1.0, N),
    ) {
        let p = markov(rows);
        // Zero total mass.
        let mean = signed.iter().sum::<f64>() / N as f64;
        let mu: Vec<f64> = signed.iter().map(|x| x - mean).collect();
        let (beta, _) = v_dobrushin_values(&p, &v);
        let lhs = v_norm_values(&p.act(&mu), &v);
        prop_assert!(lhs <= beta * v_norm_values(&mu, &v) + 1e-12);
    }

    #[test]
    fn dobrushin_in_unit_interval(rows in prop::collection::vec(prop::collection::vec(0.0f64..1.0, N), N)) {
        prop_assume!(rows.iter().all(|r| r.iter().sum::<f64>() > 0.1));
        let b = dobrushin(&markov(rows));
        prop_assert!((0.0..=1.0 + 1e-12).contains(&b));
    }

    #[test]
    fn lemma_holds_on_random_chains(seed in any::<u64>()) {
        let t = random_lemma_trial(seed).unwrap();
        prop_assert!(t.holds, "beta {} > 1 - alpha_eps(r) = {}", t.beta, 1.0 - t.alpha_eps_r);
    }
}

#[test]
fn identity_does_not_contract() {
    let grid = Arc::new(GridDomain::lattice(0, 4).unwrap());
    assert_eq!(dobrushin(&DiscreteOperator::identity(grid)), 1.0);
}
