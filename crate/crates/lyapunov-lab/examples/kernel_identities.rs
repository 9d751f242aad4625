//! Mehler kernel against its Hermite expansion, and the semigroup property
//! of every closed-form model on its quadrature grid.

use std::sync::Arc;

use lyapunov_lab::core::GridDomain;
use lyapunov_lab::kernels::{chapman_kolmogorov_error, hermite_series_kernel, mehler_kernel, ClosedFormKernel};

fn main() -> lyapunov_lab::Result<()> {
    for t in [0.5, 1.0, 2.0] {
        let mut worst = 0.0f64;
        for i in 0..=80 {
            for j in 0..=80 {
                let (x, y) = (-4.0 + 0.1 * i as f64, -4.0 + 0.1 * j as f64);
                worst = worst.max((mehler_kernel(t, x, y)? - hermite_series_kernel(t, x, y, 40)?).abs());
            }
        }
        println!("t = {t}: sup |Mehler - 40-term Hermite| on [-4,4]^2 = {worst:.3e}");
    }

    let cases = [
        (ClosedFormKernel::Harmonic, GridDomain::uniform(-8.0, 8.0, 400)?),
        (ClosedFormKernel::HalfHarmonic, GridDomain::cell_centred(0.0, 8.0, 400)?),
        (ClosedFormKernel::DirichletHeat { n_terms: 50 }, GridDomain::cell_centred(0.0, 1.0, 200)?),
        (
            ClosedFormKernel::GaussOu {
                a: vec![vec![-1.0]],
                sigma: vec![vec![1.0]],
            },
            GridDomain::uniform(-8.0, 8.0, 400)?,
        ),
        (
            ClosedFormKernel::HalfHarmonicLinear { a: 0.5, varsigma: 1.0 },
            GridDomain::cell_centred(0.0, 8.0, 400)?,
        ),
    ];
    for (k, g) in cases {
        let e = chapman_kolmogorov_error(&k, Arc::new(g), 0.5, 0.5)?;
        println!("{:>22}: Chapman-Kolmogorov sup error (t = s = 0.5) = {e:.3e}", k.name());
    }
    Ok(())
}
