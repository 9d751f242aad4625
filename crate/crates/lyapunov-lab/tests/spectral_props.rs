use std::sync::Arc;

use proptest::prelude::*;

use lyapunov_lab::core::{FunctionVec, GridDomain, LyapunovSpec, MeasureVec};
use lyapunov_lab::kernels::{discretize, ClosedFormKernel};
use lyapunov_lab::spectral::{finite_rank_gap, model_eigentriple, normalized_flow};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn denormalisation_formula(centre in -2.0f64..2.0, width in 0.3f64..2.0, n in 1usize..8) {
        let grid = Arc::new(GridDomain::uniform(-6.0, 6.0, 121).unwrap());
        let q = discretize(&ClosedFormKernel::Harmonic, grid.clone(), 0.5).unwrap();
        let eta0 = MeasureVec::from_density(grid, |x| (-(x[0] - centre).powi(2) / (2.0 * width * width)).exp())
            .unwrap()
            .normalized()
            .unwrap();
        let flow = normalized_flow(&q, &eta0, n).unwrap();
        // eta0 Q^n (1) computed directly.
        let mut mu = eta0.masses.clone();
        for _ in 0..n {
            mu = q.act(&mu);
        }
        let direct: f64 = mu.iter().sum();
        prop_assert!((flow.denormalized_mass() - direct).abs() <= 1e-12 * direct);
        prop_assert!(flow.measures.iter().all(|m| m.is_probability(1e-10)));
    }
}

#[test]
fn eigenfunction_equation_holds() {
    let grid = Arc::new(GridDomain::uniform(-8.0, 8.0, 300).unwrap());
    let k = ClosedFormKernel::Harmonic;
    let t = model_eigentriple(&k, grid.clone(), 0.5).unwrap();
    let q = discretize(&k, grid, 0.5).unwrap();
    let qh = q.apply(&t.h.values);
    let scale = (t.rho * 0.5).exp();
    let sup = t.h.sup_norm();
    for (a, h) in qh.iter().zip(&t.h.values) {
        assert!((a - scale * h).abs() <= 1e-8 * sup);
    }
    assert!(t.h.values.iter().all(|&h| h > 0.0));
}

#[test]
fn rank_one_gap_closes_at_the_spectral_gap() {
    let grid = Arc::new(GridDomain::uniform(-6.0, 6.0, 121).unwrap());
    let k = ClosedFormKernel::Harmonic;
    let q = discretize(&k, grid.clone(), 0.5).unwrap();
    let t = model_eigentriple(&k, grid.clone(), 0.5).unwrap();
    let mass = t.eta_inf.integrate(&t.h.values);
    let h = FunctionVec::new(grid.clone(), t.h.values.iter().map(|x| x / mass).collect()).unwrap();
    let mu = MeasureVec::from_density(grid.clone(), |x| (-(x[0] - 1.0).powi(2)).exp()).unwrap().normalized().unwrap();
    let v: LyapunovSpec = "poly:2".parse().unwrap();
    let c = finite_rank_gap(&q, &mu, &h, &v, 16).unwrap();
    assert!(c.gaps.windows(2).all(|w| w[1] < w[0]));
    // Next eigenvalue of the harmonic oscillator is -3/2, one unit below -1/2.
    let rate = c.rate.unwrap();
    assert!((rate - 1.0).abs() < 0.1, "rate {rate}");

    // With eta_inf(H) = 2 the distance stalls.
    let h2 = FunctionVec::new(grid, h.values.iter().map(|x| 2.0 * x).collect()).unwrap();
    let c2 = finite_rank_gap(&q, &mu, &h2, &v, 16).unwrap();
    assert!(c2.gaps[15] > 0.5 * c2.gaps[7]);
}
