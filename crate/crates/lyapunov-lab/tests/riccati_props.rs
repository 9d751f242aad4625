use nalgebra::DMatrix;
use proptest::prelude::*;

use lyapunov_lab::riccati::{algebraic_riccati, scalar_riccati, MatrixRiccati, ScalarRiccati};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fixed_point_is_stable_root(a0 in 0.01f64..3.0, a1 in -2.0f64..2.0, b in 0.1f64..3.0) {
        let s = ScalarRiccati::new(a0, a1, b).unwrap();
        let z = s.fixed_point();
        prop_assert!(z > 0.0);
        prop_assert!(s.ricc(z).abs() <= 1e-10 * (1.0 + a0));
        // Ricc changes sign from + to - at the root.
        prop_assert!(s.ricc(0.9 * z) > 0.0 && s.ricc(1.1 * z) < 0.0);
    }

    #[test]
    fn flow_moves_monotonically_to_fixed_point(a0 in 0.1f64..3.0, a1 in -1.0f64..1.0, b in 0.2f64..3.0, z0 in 0.0f64..5.0) {
        let s = ScalarRiccati::new(a0, a1, b).unwrap();
        let zi = s.fixed_point();
        let mut prev = z0;
        for k in 1..=8 {
            let z = scalar_riccati(&s, z0, 0.5 * k as f64).unwrap();
            // No overshoot past the fixed point, and monotone in time.
            prop_assert!((z - zi) * (z0 - zi) >= -1e-12);
            prop_assert!((z - prev) * (zi - z0) >= -1e-12);
            prev = z;
        }
    }

    #[test]
    fn inverse_drift_is_drift_of_reciprocal(a0 in 0.1f64..3.0, a1 in -2.0f64..2.0, b in 0.1f64..3.0, z in 0.1f64..5.0) {
        let s = ScalarRiccati::new(a0, a1, b).unwrap();
        let inv = s.inverse(0.0, 0.0).unwrap();
        let want = -s.ricc(z) / (z * z);
        prop_assert!((inv.ricc(1.0 / z) - want).abs() <= 1e-10 * (1.0 + want.abs()));
    }

    #[test]
    fn algebraic_solution_zeroes_residual(d in prop::collection::vec(-1.0f64..1.0, 4), r in 0.2f64..2.0, s in 0.2f64..2.0) {
        let a = DMatrix::from_row_slice(2, 2, &d);
        let rm = DMatrix::identity(2, 2) * r;
        let sm = DMatrix::identity(2, 2) * s;
        let p = algebraic_riccati(&a, &rm, &sm).unwrap();
        let spec = MatrixRiccati::new(a, rm, sm, DMatrix::zeros(2, 2)).unwrap();
        prop_assert!(spec.residual(&p) <= 1e-8);
        prop_assert!(p.symmetric_eigen().eigenvalues.iter().all(|&e| e > 0.0));
    }
}
