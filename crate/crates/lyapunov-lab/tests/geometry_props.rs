use proptest::prelude::*;

use lyapunov_lab::geometry::{offset_jacobian, signed_distance, Atlas, MongeSurface};

fn paraboloid() -> MongeSurface {
    MongeSurface::fixture("paraboloid").unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn frame_invariants(a in -1.8f64..1.8, b in -1.8f64..1.8) {
        let s = paraboloid();
        let f = s.frame(&[a, b]).unwrap();
        prop_assert!((f.normal.norm() - 1.0).abs() < 1e-12);
        for (i, ti) in f.tangents.iter().enumerate() {
            prop_assert!(ti.dot(&f.normal).abs() < 1e-12);
            for (j, tj) in f.tangents.iter().enumerate() {
                prop_assert!((ti.dot(tj) - f.g[(i, j)]).abs() < 1e-12);
            }
        }
        // det g of a graph is 1 + |grad phi|^2.
        let grad = s.phi_gradient(&[a, b]);
        let want = 1.0 + grad.iter().map(|x| x * x).sum::<f64>();
        prop_assert!((f.det_g() - want).abs() < 1e-10 * want);
        // Omega = g W is symmetric.
        let omega = &f.g * &f.w;
        prop_assert!((omega[(0, 1)] - omega[(1, 0)]).abs() < 1e-8);
    }

    #[test]
    fn flipping_the_normal_flips_curvature(a in -1.8f64..1.8, b in -1.8f64..1.8) {
        let s = paraboloid();
        let w = s.frame(&[a, b]).unwrap().w;
        let wf = s.flipped().frame(&[a, b]).unwrap().w;
        prop_assert!((w + wf).abs().max() < 1e-10);
    }

    #[test]
    fn jacobi_log_derivative(a in -1.8f64..1.8, b in -1.8f64..1.8) {
        let s = paraboloid();
        let h = 1e-5;
        let dlog = (offset_jacobian(&s, &[a, b], h).unwrap().ln() - offset_jacobian(&s, &[a, b], -h).unwrap().ln()) / (2.0 * h);
        let tr = s.frame(&[a, b]).unwrap().w.trace();
        prop_assert!((dlog + tr).abs() < 1e-6);
    }

    #[test]
    fn signed_distance_round_trip(theta in -2.0f64..2.0, u in -0.2f64..0.2) {
        let s = MongeSurface::fixture("parabola").unwrap();
        let f = s.frame(&[theta]).unwrap();
        let x = &f.point - &f.normal * u;
        let d = signed_distance(&s, x.as_slice(), 0.3).unwrap();
        prop_assert!((d.d - u).abs() < 1e-8, "d = {} for u = {}", d.d, u);
        prop_assert!((d.foot[0] - theta).abs() < 1e-6);
    }

    #[test]
    fn charts_agree_on_overlaps(x1 in 1.01f64..1.99, left in any::<bool>()) {
        let x1 = if left { -x1 } else { x1 };
        let atlas = Atlas::fixture("parabola_atlas").unwrap();
        let a = atlas.curvature_agreement(&[x1, x1 * x1]).unwrap();
        prop_assert_eq!(a.per_chart.len(), 2);
        prop_assert!(a.spread <= 1e-8);
        let w = atlas.weights(&[x1, x1 * x1]);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn offset_past_focal_point_is_rejected() {
    // Curvature at the vertex is -2 with this orientation; the focal point sits at u = -1/2.
    let s = MongeSurface::fixture("parabola").unwrap();
    assert!(offset_jacobian(&s, &[0.0], -0.6).is_err());
    assert!(offset_jacobian(&s, &[0.0], 0.6).is_ok());
}
