//! Particle estimates of killed diffusions against closed forms, and the
//! quasi-stationary growth rate.

use lyapunov_lab::kernels::{dirichlet_survival, harmonic_mass};
use lyapunov_lab::simulate::{feynman_kac_estimate, named_model, qsd_replicas, InitialLaw, Observable};

fn main() -> lyapunov_lab::Result<()> {
    let (bm, soft) = named_model("harmonic")?;
    let e = feynman_kac_estimate(&bm, &soft, &[0.0], 1.0, 100_000, 1e-3, 1, &[Observable::Square { i: 0 }])?;
    println!(
        "harmonic: Q_1(1)(0) = {:.5} +- {:.5} (exact {:.5}), Q_1(x^2)(0) = {:.5}",
        e.q1,
        e.q1_stderr,
        harmonic_mass(1.0, 0.0)?,
        e.qf[0]
    );

    let (bm, hard) = named_model("dirichlet")?;
    let e = feynman_kac_estimate(&bm, &hard, &[0.5], 0.3, 100_000, 1e-3, 2, &[])?;
    println!(
        "dirichlet: Q_0.3(1)(0.5) = {:.5} +- {:.5} (series {:.5})",
        e.q1,
        e.q1_stderr,
        dirichlet_survival(0.3, 0.5, 200)?
    );

    let eta0 = InitialLaw::Uniform { lo: vec![0.0], hi: vec![1.0] };
    let q = qsd_replicas(&bm, &hard, &eta0, 1.5, 40_000, 50, 1e-3, 1.0 / 3.0, 3, 8)?;
    println!(
        "dirichlet QSD: rho_hat = {:.4} +- {:.4} (exact {:.4})",
        q.rho,
        q.rho_stderr,
        -std::f64::consts::PI.powi(2) / 2.0
    );
    Ok(())
}
