use proptest::prelude::*;

use lyapunov_lab::kernels::dirichlet_survival;
use lyapunov_lab::simulate::{feynman_kac_curve, feynman_kac_estimate, named_model, Observable};

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn killed_mass_never_increases(model in prop::sample::select(vec!["harmonic", "dirichlet", "half_harmonic"]), seed in any::<u64>()) {
        let (m, a) = named_model(model).unwrap();
        let x0 = if model == "harmonic" { 0.3 } else { 0.5 };
        let times: Vec<f64> = (1..=6).map(|k| 0.05 * k as f64).collect();
        let curve = feynman_kac_curve(&m, &a, &[x0], &times, 2_000, 1e-2, seed, &[]).unwrap();
        let mut prev = 1.0;
        for e in &curve {
            prop_assert!(e.q1 <= prev + 1e-15, "{} at t = {}: {} > {}", model, e.t, e.q1, prev);
            prop_assert!(e.q1 >= 0.0);
            prev = e.q1;
        }
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let (m, a) = named_model("harmonic").unwrap();
    let run = || feynman_kac_estimate(&m, &a, &[0.2], 0.5, 5_000, 1e-2, 99, &[Observable::Square { i: 0 }]).unwrap();
    let one = in_pool(1, run);
    let three = in_pool(3, run);
    assert_eq!(one.q1.to_bits(), three.q1.to_bits());
    assert_eq!(one.qf[0].to_bits(), three.qf[0].to_bits());
}

#[test]
fn different_seeds_differ() {
    let (m, a) = named_model("dirichlet").unwrap();
    let r1 = feynman_kac_estimate(&m, &a, &[0.5], 0.2, 1_000, 1e-2, 1, &[]).unwrap();
    let r2 = feynman_kac_estimate(&m, &a, &[0.5], 0.2, 1_000, 1e-2, 2, &[]).unwrap();
    assert_ne!(r1.q1.to_bits(), r2.q1.to_bits());
}

#[test]
fn unknown_model_lists_alternatives() {
    let e = named_model("nope").unwrap_err().to_string();
    assert!(e.contains("harmonic"), "{e}");
}

#[test]
fn grid_time_exit_bias_shrinks_with_dt() {
    let (m, mut a) = named_model("dirichlet").unwrap();
    let exact = dirichlet_survival(0.3, 0.5, 200).unwrap();
    a.bridge = false;
    let coarse = feynman_kac_estimate(&m, &a, &[0.5], 0.3, 20_000, 4e-3, 3, &[]).unwrap();
    let fine = feynman_kac_estimate(&m, &a, &[0.5], 0.3, 20_000, 1e-3, 3, &[]).unwrap();
    // Missed crossings overestimate survival by O(sqrt(dt)).
    assert!(coarse.q1 - exact > 3.0 * coarse.q1_stderr);
    assert!(fine.q1 - exact < coarse.q1 - exact);
    a.bridge = true;
    let bridged = feynman_kac_estimate(&m, &a, &[0.5], 0.3, 20_000, 4e-3, 3, &[]).unwrap();
    assert!((bridged.q1 - exact).abs() < 3.0 * bridged.q1_stderr);
}
