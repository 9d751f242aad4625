use std::sync::Arc;

use proptest::prelude::*;

use lyapunov_lab::core::GridDomain;
use lyapunov_lab::kernels::{
    chapman_kolmogorov_error, dirichlet_heat, discretize, doob_h_transform, harmonic_mass, hermite_series_kernel,
    mehler_kernel, ClosedFormKernel,
};
use lyapunov_lab::spectral::model_eigentriple;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn mehler_is_symmetric_and_positive(t in 0.05f64..4.0, x in -5.0f64..5.0, y in -5.0f64..5.0) {
        let a = mehler_kernel(t, x, y).unwrap();
        prop_assert!(a > 0.0);
        prop_assert!((a - mehler_kernel(t, y, x).unwrap()).abs() <= 1e-12 * a);
    }

    #[test]
    fn mehler_matches_hermite_series(t in 0.5f64..3.0, x in -3.0f64..3.0, y in -3.0f64..3.0) {
        let d = mehler_kernel(t, x, y).unwrap() - hermite_series_kernel(t, x, y, 40).unwrap();
        prop_assert!(d.abs() <= 1e-8);
    }

    #[test]
    fn harmonic_mass_decreases_in_time(x in -3.0f64..3.0, t in 0.1f64..3.0) {
        prop_assert!(harmonic_mass(t + 0.1, x).unwrap() < harmonic_mass(t, x).unwrap());
        prop_assert!(harmonic_mass(t, x).unwrap() < 1.0);
    }

    #[test]
    fn dirichlet_kernel_vanishes_at_walls(t in 0.01f64..1.0, y in 0.01f64..0.99) {
        prop_assert!(dirichlet_heat(t, 1e-10, y, 50).unwrap().abs() < 1e-6);
        prop_assert!(dirichlet_heat(t, 1.0 - 1e-10, y, 50).unwrap().abs() < 1e-6);
        prop_assert!(dirichlet_heat(t, 0.0, y, 50).is_err());
    }
}

#[test]
fn h_transform_is_markov() {
    for (k, g) in [
        (ClosedFormKernel::Harmonic, GridDomain::uniform(-8.0, 8.0, 200).unwrap()),
        (ClosedFormKernel::HalfHarmonic, GridDomain::cell_centred(0.0, 8.0, 200).unwrap()),
    ] {
        let g = Arc::new(g);
        let t = model_eigentriple(&k, g.clone(), 0.5).unwrap();
        let p = doob_h_transform(&discretize(&k, g, 0.5).unwrap(), &t.h, t.rho).unwrap();
        for s in p.row_sums() {
            assert!((s - 1.0).abs() < 1e-8, "{} row sum {s}", k.name());
        }
    }
}

#[test]
fn chapman_kolmogorov_on_small_grids() {
    let g = Arc::new(GridDomain::uniform(-8.0, 8.0, 200).unwrap());
    assert!(chapman_kolmogorov_error(&ClosedFormKernel::Harmonic, g, 0.3, 0.7).unwrap() < 1e-6);
    let g = Arc::new(GridDomain::cell_centred(0.0, 1.0, 100).unwrap());
    let e = chapman_kolmogorov_error(&ClosedFormKernel::DirichletHeat { n_terms: 50 }, g, 0.2, 0.2).unwrap();
    assert!(e < 1e-6);
}
