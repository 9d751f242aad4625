//! Scalar and matrix Riccati flows, the coupled-oscillator semigroup and
//! birth-death drift majorants.

mod birth_death;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{bad, Error, Result};
use crate::kernels::to_matrix;

pub use birth_death::{bd_generator_drift, bd_moment_bound, BdMomentReport, BirthDeathSpec};

pub const DEFAULT_DT: f64 = 1e-3;

/// `Ricc(z) = a0 + a1 z - b z^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalarRiccati {
    pub a0: f64,
    pub a1: f64,
    pub b: f64,
}

impl ScalarRiccati {
    pub fn new(a0: f64, a1: f64, b: f64) -> Result<Self> {
        if !(a0 >= 0.0) {
            return Err(bad("a0", format!("must be non-negative, got {a0}")));
        }
        if !(b > 0.0) {
            return Err(bad("b", format!("must be positive, got {b}")));
        }
        if !a1.is_finite() {
            return Err(bad("a1", "must be finite"));
        }
        Ok(Self { a0, a1, b })
    }

    pub fn ricc(&self, z: f64) -> f64 {
        self.a0 + self.a1 * z - self.b * z * z
    }

    /// Non-negative root `(a1 + sqrt(a1^2 + 4 a0 b)) / (2b)`.
    pub fn fixed_point(&self) -> f64 {
        (self.a1 + (self.a1 * self.a1 + 4.0 * self.a0 * self.b).sqrt()) / (2.0 * self.b)
    }

    /// Drift of `1/Z` for the Riccati diffusion with noise parameters
    /// `(varsigma1, varsigma2)`: `a0^- = b`, `a1^- = varsigma2^2 - a1`, `b^- = a0 - varsigma1^2`.
    pub fn inverse(&self, varsigma1: f64, varsigma2: f64) -> Result<Self> {
        Self::new(self.b, varsigma2 * varsigma2 - self.a1, self.a0 - varsigma1 * varsigma1)
    }
}

fn rk4_scalar(spec: &ScalarRiccati, z0: f64, t: f64, dt: f64) -> f64 {
    let steps = (t / dt).ceil().max(1.0) as usize;
    let h = t / steps as f64;
    let mut z = z0;
    for _ in 0..steps {
        let k1 = spec.ricc(z);
        let k2 = spec.ricc(z + 0.5 * h * k1);
        let k3 = spec.ricc(z + 0.5 * h * k2);
        let k4 = spec.ricc(z + h * k3);
        z += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    z
}

/// Solution at `t` and the Richardson estimate `|z_h - z_{h/2}| / 15` of its error.
pub fn scalar_riccati_with_error(spec: &ScalarRiccati, z0: f64, t: f64, dt: f64) -> Result<(f64, f64)> {
    if !(z0 >= 0.0) {
        return Err(bad("z0", format!("must be non-negative, got {z0}")));
    }
    if !(t >= 0.0) {
        return Err(bad("t", format!("must be non-negative, got {t}")));
    }
    if t == 0.0 {
        return Ok((z0, 0.0));
    }
    let mut h = dt;
    for _ in 0..30 {
        // RK4 is stable for h |Ricc'(z)| below about 2.7.
        let stiff = (spec.a1 - 2.0 * spec.b * z0.max(spec.fixed_point())).abs();
        if h * stiff < 2.5 {
            let coarse = rk4_scalar(spec, z0, t, h);
            let fine = rk4_scalar(spec, z0, t, h / 2.0);
            if coarse.is_finite() && fine.is_finite() && fine >= 0.0 {
                return Ok((fine, (coarse - fine).abs() / 15.0));
            }
        }
        h /= 2.0;
    }
    Err(Error::Integration(format!("scalar Riccati flow from {z0} is unstable down to step {h:e}")))
}

pub fn scalar_riccati(spec: &ScalarRiccati, z0: f64, t: f64) -> Result<f64> {
    Ok(scalar_riccati_with_error(spec, z0, t, DEFAULT_DT)?.0)
}

/// `p' = A p + p A' + R - p S p` from `p0`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixRiccati {
    pub a: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub p0: DMatrix<f64>,
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn check_psd(m: &DMatrix<f64>, name: &'static str) -> Result<()> {
    if (m - m.transpose()).amax() > 1e-12 * (1.0 + m.amax()) {
        return Err(bad(name, "must be symmetric"));
    }
    let l = min_eigenvalue(m);
    if l < -1e-12 {
        return Err(bad(name, format!("must be positive semi-definite, smallest eigenvalue {l:e}")));
    }
    Ok(())
}

impl MatrixRiccati {
    pub fn new(a: DMatrix<f64>, r: DMatrix<f64>, s: DMatrix<f64>, p0: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        for (name, m) in [("A", &a), ("R", &r), ("S", &s), ("p0", &p0)] {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::Dimension(format!("{name} is {}x{}, expected {n}x{n}", m.nrows(), m.ncols())));
            }
        }
        check_psd(&r, "R")?;
        check_psd(&s, "S")?;
        check_psd(&p0, "p0")?;
        Ok(Self { a, r, s, p0 })
    }

    pub fn from_rows(a: &[Vec<f64>], r: &[Vec<f64>], s: &[Vec<f64>], p0: Option<&[Vec<f64>]>) -> Result<Self> {
        let a = to_matrix(a, "A")?;
        let n = a.nrows();
        let p0 = match p0 {
            Some(p) => to_matrix(p, "p0")?,
            None => DMatrix::zeros(n, n),
        };
        Self::new(a, to_matrix(r, "R")?, to_matrix(s, "S")?, p0)
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn drift(&self, p: &DMatrix<f64>) -> DMatrix<f64> {
        &self.a * p + p * self.a.transpose() + &self.r - p * &self.s * p
    }

    /// `||A p + p A' + R - p S p||` (Frobenius).
    pub fn residual(&self, p: &DMatrix<f64>) -> f64 {
        self.drift(p).norm()
    }
}

fn rk4_matrix_step(spec: &MatrixRiccati, p: &DMatrix<f64>, h: f64) -> DMatrix<f64> {
    let k1 = symmetrize(&spec.drift(p));
    let k2 = symmetrize(&spec.drift(&symmetrize(&(p + &k1 * (h / 2.0)))));
    let k3 = symmetrize(&spec.drift(&symmetrize(&(p + &k2 * (h / 2.0)))));
    let k4 = symmetrize(&spec.drift(&symmetrize(&(p + &k3 * h))));
    symmetrize(&(p + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)))
}

/// RK4 with symmetrized stages; rejects the flow if `p_t` leaves the PSD cone by more than 1e-8.
pub fn matrix_riccati_dt(spec: &MatrixRiccati, t: f64, dt: f64) -> Result<DMatrix<f64>> {
    if !(t >= 0.0) || !(dt > 0.0) {
        return Err(bad("t/dt", "need t >= 0 and dt > 0"));
    }
    let steps = (t / dt).ceil() as usize;
    let h = if steps > 0 { t / steps as f64 } else { 0.0 };
    let mut p = spec.p0.clone();
    for k in 0..steps {
        p = rk4_matrix_step(spec, &p, h);
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::Integration(format!("matrix Riccati flow blew up at step {k}")));
        }
        let l = min_eigenvalue(&p);
        if l < -1e-8 {
            return Err(Error::Integration(format!(
                "p_t left the PSD cone at step {k} (t = {}): smallest eigenvalue {l:e}",
                (k + 1) as f64 * h
            )));
        }
    }
    Ok(p)
}

pub fn matrix_riccati(spec: &MatrixRiccati, t: f64) -> Result<DMatrix<f64>> {
    matrix_riccati_dt(spec, t, DEFAULT_DT)
}

/// Solves `M X + X M' + Q = 0` through the Kronecker form.
fn lyapunov_solve(m: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let big = id.kronecker(m) + m.kronecker(&id);
    let rhs = -DVector::from_column_slice(q.as_slice());
    let x = big
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Integration("singular Lyapunov operator".into()))?;
    Ok(symmetrize(&DMatrix::from_column_slice(n, n, x.as_slice())))
}

/// Stabilizing solution of `A p + p A' + R - p S p = 0`: warm start from the
/// flow, then Newton-Kleinman iterations.
pub fn algebraic_riccati(a: &DMatrix<f64>, r: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let spec = MatrixRiccati::new(a.clone(), r.clone(), s.clone(), DMatrix::zeros(n, n))?;
    let mut p = spec.p0.clone();
    let mut t = 0.0;
    while spec.residual(&p) > 1e-4 * (1.0 + p.norm()) {
        if t > 1e4 {
            return Err(Error::Integration("Riccati flow does not settle".into()));
        }
        p = matrix_riccati_dt(&MatrixRiccati { p0: p, ..spec.clone() }, 1.0, DEFAULT_DT)?;
        t += 1.0;
    }
    for _ in 0..50 {
        let m = a - &p * s;
        let q = r + &p * s * &p;
        let next = lyapunov_solve(&m, &q)?;
        let step = (&next - &p).norm();
        p = next;
        if step <= 1e-15 * (1.0 + p.norm()) {
            break;
        }
    }
    Ok(p)
}

/// Rank of `[B, A B, ..., A^{n-1} B]`.
pub fn controllability_rank(a: &DMatrix<f64>, b: &DMatrix<f64>) -> usize {
    let n = a.nrows();
    let mut blocks = Vec::with_capacity(n);
    let mut cur = b.clone();
    for _ in 0..n {
        blocks.push(cur.clone());
        cur = a * &cur;
    }
    let k = DMatrix::from_fn(n, n * b.ncols(), |i, j| blocks[j / b.ncols()][(i, j % b.ncols())]);
    let sv = k.singular_values();
    let top = sv.iter().cloned().fold(0.0, f64::max);
    sv.iter().filter(|v| **v > 1e-10 * top.max(1e-300)).count()
}

/// Symmetric square root of a PSD matrix.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let e = m.clone().symmetric_eigen();
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(|l| l.max(0.0).sqrt()));
    &e.eigenvectors * d * e.eigenvectors.transpose()
}

/// Joint flow of the coupled oscillator `dX = A X dt + Sigma dB` killed at rate `x'Sx/2`.
#[derive(Debug, Clone)]
pub struct CoupledOscillator {
    pub m_t: DVector<f64>,
    pub p_t: DMatrix<f64>,
    /// `log Q_t(1)(x)`.
    pub log_q1: f64,
    /// `-Tr(S p_s)/2` averaged over the last quarter of `[0, t]`.
    pub rho_hat: f64,
    pub p_inf: DMatrix<f64>,
    /// `-Tr(p_inf S)/2` from the algebraic equation.
    pub rho: f64,
}

pub fn coupled_oscillator_semigroup(
    a: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    s: &DMatrix<f64>,
    x: &[f64],
    t: f64,
) -> Result<CoupledOscillator> {
    coupled_oscillator_dt(a, sigma, s, x, t, DEFAULT_DT)
}

pub fn coupled_oscillator_dt(
    a: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    s: &DMatrix<f64>,
    x: &[f64],
    t: f64,
    dt: f64,
) -> Result<CoupledOscillator> {
    let n = a.nrows();
    if x.len() != n || sigma.nrows() != n {
        return Err(Error::Dimension(format!("A is {n}x{n}, Sigma has {} rows, x has {}", sigma.nrows(), x.len())));
    }
    if !(t > 0.0) {
        return Err(bad("t", format!("must be positive, got {t}")));
    }
    let r = sigma * sigma.transpose();
    let spec = MatrixRiccati::new(a.clone(), r.clone(), s.clone(), DMatrix::zeros(n, n))?;
    if controllability_rank(a, &psd_sqrt(&r)) < n {
        return Err(Error::NotControllable("(A, R^{1/2})".into()));
    }
    if controllability_rank(&a.transpose(), &psd_sqrt(s)) < n {
        return Err(Error::NotControllable("(A', S^{1/2})".into()));
    }
    // State: m, p, F, G = int F'SF, trace accumulator.
    let nn = n * n;
    let unpack = |y: &[f64]| {
        (
            DVector::from_column_slice(&y[..n]),
            DMatrix::from_column_slice(n, n, &y[n..n + nn]),
            DMatrix::from_column_slice(n, n, &y[n + nn..n + 2 * nn]),
        )
    };
    let rhs = |y: &[f64]| -> Vec<f64> {
        let (m, p, f) = unpack(y);
        let k = a - &p * s;
        let dm = &k * m;
        let dp = symmetrize(&spec.drift(&p));
        let df = &k * &f;
        let dg = f.transpose() * s * &f;
        let mut out = Vec::with_capacity(y.len());
        out.extend_from_slice(dm.as_slice());
        out.extend_from_slice(dp.as_slice());
        out.extend_from_slice(df.as_slice());
        out.extend_from_slice(dg.as_slice());
        out.push((s * &p).trace());
        out
    };
    let mut y = vec![0.0; n + 3 * nn + 1];
    y[..n].copy_from_slice(x);
    for i in 0..n {
        y[n + nn + i * n + i] = 1.0;
    }
    let steps = (t / dt).ceil() as usize;
    let h = t / steps as f64;
    let tail_start = steps - steps / 4;
    let mut tail_acc = 0.0;
    let axpy = |y: &[f64], k: &[f64], c: f64| -> Vec<f64> { y.iter().zip(k).map(|(a, b)| a + c * b).collect() };
    for step in 0..steps {
        if step == tail_start {
            tail_acc = y[n + 3 * nn];
        }
        let k1 = rhs(&y);
        let k2 = rhs(&axpy(&y, &k1, h / 2.0));
        let k3 = rhs(&axpy(&y, &k2, h / 2.0));
        let k4 = rhs(&axpy(&y, &k3, h));
        for i in 0..y.len() {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Integration(format!("coupled oscillator flow blew up at step {step}")));
        }
    }
    let (m_t, p_t, _) = unpack(&y);
    let g = DMatrix::from_column_slice(n, n, &y[n + 2 * nn..n + 3 * nn]);
    let xv = DVector::from_column_slice(x);
    let trace_int = y[n + 3 * nn];
    let log_q1 = -0.5 * ((xv.transpose() * &g * &xv)[(0, 0)] + trace_int);
    let tail_len = (steps - tail_start) as f64 * h;
    let rho_hat = -0.5 * (trace_int - tail_acc) / tail_len;
    let p_inf = algebraic_riccati(a, &r, s)?;
    let rho = -0.5 * (&p_inf * s).trace();
    Ok(CoupledOscillator {
        m_t,
        p_t: symmetrize(&p_t),
        log_q1,
        rho_hat,
        p_inf,
        rho,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_points() {
        assert!((ScalarRiccati::new(1.0, 0.0, 1.0).unwrap().fixed_point() - 1.0).abs() < 1e-15);
        assert!((ScalarRiccati::new(1.0, 1.0, 2.0).unwrap().fixed_point() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn scalar_flow_reaches_root() {
        let s = ScalarRiccati::new(1.0, 1.0, 2.0).unwrap();
        assert!((scalar_riccati(&s, 5.0, 10.0).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn tanh_flow() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let spec = MatrixRiccati::new(DMatrix::zeros(1, 1), one.clone(), one, DMatrix::zeros(1, 1)).unwrap();
        let p = matrix_riccati(&spec, 1.3).unwrap();
        assert!((p[(0, 0)] - 1.3f64.tanh()).abs() < 1e-8);
    }

    #[test]
    fn rank_of_uncontrollable_pair() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]);
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(controllability_rank(&a, &b), 1);
    }
}
