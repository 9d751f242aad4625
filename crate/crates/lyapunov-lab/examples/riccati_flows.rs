//! Scalar and matrix Riccati flows, the coupled oscillator's eigenvalue and a
//! birth-death moment bound.

use nalgebra::DMatrix;

use lyapunov_lab::riccati::{
    bd_moment_bound, coupled_oscillator_semigroup, matrix_riccati_dt, scalar_riccati, BirthDeathSpec, MatrixRiccati,
    ScalarRiccati,
};

fn main() -> lyapunov_lab::Result<()> {
    let s = ScalarRiccati::new(1.0, 0.5, 2.0)?;
    println!("scalar: z(30) = {:.12}, z_inf = {:.12}", scalar_riccati(&s, 0.0, 30.0)?, s.fixed_point());

    let m = MatrixRiccati::from_rows(&[vec![0.0]], &[vec![1.0]], &[vec![1.0]], None)?;
    let p = matrix_riccati_dt(&m, 2.0, 1e-3)?;
    println!("matrix: p(2) = {:.12}, tanh(2) = {:.12}", p[(0, 0)], 2f64.tanh());

    let a = DMatrix::from_row_slice(2, 2, &[-0.3, 1.0, -1.0, -0.2]);
    let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.2, 0.7]);
    let sm = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.1, 0.5]);
    let c = coupled_oscillator_semigroup(&a, &sigma, &sm, &[0.5, -0.5], 40.0)?;
    println!("coupled oscillator: rho_hat = {:.10}, -Tr(p_inf S)/2 = {:.10}", c.rho_hat, c.rho);
    let one = DMatrix::from_element(1, 1, 1.0);
    let h = coupled_oscillator_semigroup(&DMatrix::zeros(1, 1), &one, &one, &[0.0], 40.0)?;
    println!("harmonic reduction: rho = {:.10}", h.rho);

    let bd = BirthDeathSpec::Logistic {
        lambda_b: 1.0,
        upsilon_b: 0.5,
        lambda_d: 0.5,
        lambda_l: 0.01,
        upsilon_d: 0.0,
    };
    let r = bd_moment_bound(&bd, &[10], 5.0, 2000, 11)?;
    for i in [0, 4, 9] {
        println!("t = {:.1}: E V = {:.3} +- {:.3} <= majorant {:.3}", r.times[i], r.mean[i], r.stderr[i], r.majorant[i]);
    }
    Ok(())
}
