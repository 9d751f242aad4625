//! Leading eigen-triples of the solvable models by power iteration, and the
//! Doob h-transform they induce.

use std::sync::Arc;

use lyapunov_lab::core::GridDomain;
use lyapunov_lab::kernels::{discretize, doob_h_transform, ClosedFormKernel};
use lyapunov_lab::spectral::{ground_state_l2_error, model_eigentriple};

fn main() -> lyapunov_lab::Result<()> {
    let tau = 0.5;
    let cases = [
        (ClosedFormKernel::Harmonic, GridDomain::uniform(-8.0, 8.0, 400)?),
        (ClosedFormKernel::DirichletHeat { n_terms: 50 }, GridDomain::cell_centred(0.0, 1.0, 200)?),
        (ClosedFormKernel::HalfHarmonic, GridDomain::cell_centred(0.0, 8.0, 400)?),
    ];
    for (k, g) in cases {
        let g = Arc::new(g);
        let t = model_eigentriple(&k, g.clone(), tau)?;
        let exact = k.leading_eigenvalue().unwrap();
        let h_err = ground_state_l2_error(&t.h, |x| k.ground_state(x).unwrap());
        println!(
            "{:>14}: rho = {:.8} (exact {:.8}), h L2 error {:.2e}, {} iterations",
            k.name(),
            t.rho,
            exact,
            h_err,
            t.iterations
        );
        let p = doob_h_transform(&discretize(&k, g, tau)?, &t.h, t.rho)?;
        let worst = p.row_sums().iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max);
        println!("{:>14}  h-transform row sums within {worst:.2e} of 1", "");
    }
    Ok(())
}
