//! Closed-form solvable kernels: harmonic (Mehler), Hermite series,
//! half-harmonic, Dirichlet heat, Gaussian Ornstein-Uhlenbeck and the
//! half-line linear diffusion in a quadratic well.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{bad, Error, Result};

fn normal_pdf(y: f64, m: f64, var: f64) -> f64 {
    (-(y - m) * (y - m) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

/// `P(0 <= Z <= z)` for a standard Gaussian `Z`.
pub fn gauss_half_interval(z: f64) -> f64 {
    0.5 * libm::erf(z / SQRT_2)
}

fn check_t(t: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(bad("t", format!("time must be positive, got {t}")));
    }
    Ok(())
}

/// Mean factor `m_t(x) = x / cosh(t)` of the harmonic oscillator.
pub fn harmonic_mean(t: f64, x: f64) -> f64 {
    x / t.cosh()
}

/// Variance `p_t = tanh(t)` of the harmonic oscillator.
pub fn harmonic_var(t: f64) -> f64 {
    t.tanh()
}

/// Total mass `Q_t(1)(x) = exp(-x^2 tanh(t)/2) / sqrt(cosh t)`.
pub fn harmonic_mass(t: f64, x: f64) -> Result<f64> {
    check_t(t)?;
    Ok((-x * x * t.tanh() / 2.0).exp() / t.cosh().sqrt())
}

/// Mehler density of the harmonic oscillator `Q_t(x, dy) / dy`.
pub fn mehler_kernel(t: f64, x: f64, y: f64) -> Result<f64> {
    check_t(t)?;
    let p = t.tanh();
    let m = x / t.cosh();
    Ok((-x * x * p / 2.0).exp() / t.cosh().sqrt() * normal_pdf(y, m, p))
}

/// Physicists' Hermite polynomial `H_n(x)` by the three-term recurrence.
pub fn hermite_poly(n: usize, x: f64) -> f64 {
    let (mut h0, mut h1) = (1.0, 2.0 * x);
    if n == 0 {
        return h0;
    }
    for k in 1..n {
        let h2 = 2.0 * x * h1 - 2.0 * k as f64 * h0;
        h0 = h1;
        h1 = h2;
    }
    h1
}

/// Orthonormal Hermite functions `phi_1..phi_n` at `x`, with
/// `phi_1(x) = pi^{-1/4} exp(-x^2/2)`. Computed in normalized form so no
/// factorials appear.
pub fn hermite_functions(n: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }
    let p0 = PI.powf(-0.25) * (-x * x / 2.0).exp();
    out.push(p0);
    if n == 1 {
        return out;
    }
    out.push(SQRT_2 * x * p0);
    for k in 1..n - 1 {
        let kf = k as f64;
        let next = (2.0 / (kf + 1.0)).sqrt() * x * out[k] - (kf / (kf + 1.0)).sqrt() * out[k - 1];
        out.push(next);
    }
    out
}

/// Truncated spectral series `sum_{n<=N} e^{-(n-1/2)t} phi_n(x) phi_n(y)`.
pub fn hermite_series_kernel(t: f64, x: f64, y: f64, n_terms: usize) -> Result<f64> {
    check_t(t)?;
    if !(1..=200).contains(&n_terms) {
        return Err(bad("N", format!("number of terms must lie in 1..=200, got {n_terms}")));
    }
    let fx = hermite_functions(n_terms, x);
    let fy = hermite_functions(n_terms, y);
    Ok((0..n_terms)
        .map(|k| (-(k as f64 + 0.5) * t).exp() * fx[k] * fy[k])
        .sum())
}

/// Total mass `Q_t(1)(x)` of the half-harmonic oscillator, absorbed at 0.
pub fn half_harmonic_mass(t: f64, x: f64) -> Result<f64> {
    check_t(t)?;
    if !(x > 0.0) {
        return Err(bad("x", format!("half-harmonic state must be positive, got {x}")));
    }
    let p = t.tanh();
    let m = x / t.cosh();
    Ok(2.0 * (-x * x * p / 2.0).exp() / t.cosh().sqrt() * gauss_half_interval(m / p.sqrt()))
}

/// Unnormalized half-harmonic density `Q_t(x, dy) / dy` on `y > 0`.
pub fn half_harmonic_density(t: f64, x: f64, y: f64) -> Result<f64> {
    check_t(t)?;
    if !(x > 0.0) {
        return Err(bad("x", format!("half-harmonic state must be positive, got {x}")));
    }
    if y <= 0.0 {
        return Ok(0.0);
    }
    let p = t.tanh();
    let m = x / t.cosh();
    Ok((-x * x * p / 2.0).exp() / t.cosh().sqrt() * (normal_pdf(y, m, p) - normal_pdf(y, -m, p)))
}

/// Mass and normalized transition density of the half-harmonic oscillator.
/// The density is `sinh(y m/p) exp(-(y^2+m^2)/(2p)) / (sqrt(2 pi p) P(0<=Z<=m/sqrt p))`.
pub fn half_harmonic(t: f64, x: f64) -> Result<(f64, impl Fn(f64) -> f64)> {
    let mass = half_harmonic_mass(t, x)?;
    let p = t.tanh();
    let m = x / t.cosh();
    let z = gauss_half_interval(m / p.sqrt());
    let dens = move |y: f64| {
        if y <= 0.0 {
            0.0
        } else {
            (normal_pdf(y, m, p) - normal_pdf(y, -m, p)) / (2.0 * z)
        }
    };
    Ok((mass, dens))
}

fn check_unit(name: &'static str, x: f64) -> Result<()> {
    if !(x > 0.0 && x < 1.0) {
        return Err(bad(name, format!("must lie in (0,1), got {x}")));
    }
    Ok(())
}

/// Eigenvalue `rho_n = -(n pi)^2 / 2` of the Dirichlet heat kernel on (0,1).
pub fn dirichlet_eigenvalue(n: usize) -> f64 {
    -(n as f64 * PI).powi(2) / 2.0
}

/// Truncated Dirichlet heat kernel `sum_{n<=N} e^{rho_n t} 2 sin(n pi x) sin(n pi y)`.
/// Not clamped: truncation can leave microscopically negative values.
pub fn dirichlet_heat(t: f64, x: f64, y: f64, n_terms: usize) -> Result<f64> {
    check_t(t)?;
    check_unit("x", x)?;
    check_unit("y", y)?;
    if n_terms < 1 {
        return Err(bad("N", "need at least one term"));
    }
    Ok((1..=n_terms)
        .map(|n| {
            let k = n as f64 * PI;
            (dirichlet_eigenvalue(n) * t).exp() * 2.0 * (k * x).sin() * (k * y).sin()
        })
        .sum())
}

/// Survival probability `Q_t(1)(x)` of Brownian motion killed on leaving (0,1).
pub fn dirichlet_survival(t: f64, x: f64, n_terms: usize) -> Result<f64> {
    check_t(t)?;
    check_unit("x", x)?;
    Ok((1..=n_terms)
        .filter(|n| n % 2 == 1)
        .map(|n| {
            let k = n as f64 * PI;
            (dirichlet_eigenvalue(n) * t).exp() * 4.0 * (k * x).sin() / k
        })
        .sum())
}

/// Mean map `e^{tA}` and covariance `C_t = int_0^t e^{sA} R e^{sA'} ds`, `R = Sigma Sigma'`.
#[derive(Debug, Clone)]
pub struct GaussOuSlice {
    pub mean_map: DMatrix<f64>,
    pub cov: DMatrix<f64>,
    cov_inv: DMatrix<f64>,
    log_norm: f64,
}

impl GaussOuSlice {
    pub fn new(t: f64, a: &DMatrix<f64>, sigma: &DMatrix<f64>) -> Result<Self> {
        check_t(t)?;
        let n = a.nrows();
        if a.ncols() != n || sigma.nrows() != n {
            return Err(Error::Dimension(format!(
                "A is {}x{}, Sigma is {}x{}",
                a.nrows(),
                a.ncols(),
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        let mean_map = (a * t).exp();
        let r = sigma * sigma.transpose();
        let cov = lyapunov_ode(a, &r, t)?;
        let chol = cov.clone().cholesky();
        let (cov_inv, log_norm) = match chol {
            Some(c) => {
                let logdet: f64 = 2.0 * c.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
                (c.inverse(), -0.5 * (n as f64 * (2.0 * PI).ln() + logdet))
            }
            None => (DMatrix::zeros(n, n), f64::NAN),
        };
        Ok(Self {
            mean_map,
            cov,
            cov_inv,
            log_norm,
        })
    }

    pub fn mean(&self, x: &[f64]) -> DVector<f64> {
        &self.mean_map * DVector::from_column_slice(x)
    }

    /// Smallest eigenvalue of the covariance; positive iff the pair is controllable.
    pub fn min_cov_eigenvalue(&self) -> f64 {
        let s = (&self.cov + self.cov.transpose()) * 0.5;
        s.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn density(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if !self.log_norm.is_finite() {
            return Err(Error::NotControllable("covariance is singular".into()));
        }
        let d = DVector::from_column_slice(y) - self.mean(x);
        let q = (d.transpose() * &self.cov_inv * &d)[(0, 0)];
        Ok((self.log_norm - 0.5 * q).exp())
    }
}

/// RK4 on `C' = AC + CA' + R`, `C_0 = 0`, up to time `t`.
pub fn lyapunov_ode(a: &DMatrix<f64>, r: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let scale = a.norm().max(1.0);
    let steps = ((t * scale / 2e-3).ceil() as usize).max(100);
    let h = t / steps as f64;
    let f = |c: &DMatrix<f64>| a * c + c * a.transpose() + r;
    let mut c = DMatrix::zeros(n, n);
    for _ in 0..steps {
        let k1 = f(&c);
        let k2 = f(&(&c + &k1 * (h / 2.0)));
        let k3 = f(&(&c + &k2 * (h / 2.0)));
        let k4 = f(&(&c + &k3 * h));
        c += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::Integration(format!("covariance ODE blew up with step {h:e}")));
    }
    Ok((&c + c.transpose()) * 0.5)
}

/// Mean and covariance of the Gaussian Ornstein-Uhlenbeck transition.
pub fn gauss_ou_kernel(
    t: f64,
    a: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    x: &[f64],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if x.len() != a.nrows() {
        return Err(Error::Dimension(format!("state has {} coordinates, A has {} rows", x.len(), a.nrows())));
    }
    let s = GaussOuSlice::new(t, a, sigma)?;
    Ok((s.mean(x), s.cov))
}

/// Parameters of the linear diffusion `dX = aX dt + dB` in the well `U = varsigma x^2/2`
/// at time t: `m_t(x) = f x`, variance `p`, and the mass exponents `chi`, `pbar` with
/// `Q_t(1)(x) = exp(-(varsigma/2)(chi x^2 + pbar))` on the whole line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSlice {
    pub t: f64,
    pub f: f64,
    pub p: f64,
    pub chi: f64,
    pub pbar: f64,
    pub varsigma: f64,
}

impl LinearSlice {
    /// Integrates the mean/variance ODE `p' = 2ap + 1 - varsigma p^2`,
    /// `(log f)' = a - varsigma p`, `chi' = f^2`, `pbar' = p` with RK4.
    pub fn new(t: f64, a: f64, varsigma: f64) -> Result<Self> {
        check_t(t)?;
        if !(varsigma > 0.0) {
            return Err(bad("varsigma", format!("must be positive, got {varsigma}")));
        }
        let steps = ((t / 1e-3).ceil() as usize).max(200);
        let h = t / steps as f64;
        let rhs = |s: [f64; 4]| -> [f64; 4] {
            let [p, lf, _, _] = s;
            [2.0 * a * p + 1.0 - varsigma * p * p, a - varsigma * p, (2.0 * lf).exp(), p]
        };
        let add = |s: [f64; 4], k: [f64; 4], c: f64| -> [f64; 4] {
            [s[0] + c * k[0], s[1] + c * k[1], s[2] + c * k[2], s[3] + c * k[3]]
        };
        let mut s = [0.0; 4];
        for _ in 0..steps {
            let k1 = rhs(s);
            let k2 = rhs(add(s, k1, h / 2.0));
            let k3 = rhs(add(s, k2, h / 2.0));
            let k4 = rhs(add(s, k3, h));
            for i in 0..4 {
                s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::Integration(format!("mean/variance ODE not finite with step {h:e}")));
        }
        Ok(Self {
            t,
            f: s[1].exp(),
            p: s[0],
            chi: s[2],
            pbar: s[3],
            varsigma,
        })
    }

    /// The harmonic oscillator in closed form (`a = 0`, `varsigma = 1`).
    pub fn harmonic(t: f64) -> Result<Self> {
        check_t(t)?;
        Ok(Self {
            t,
            f: 1.0 / t.cosh(),
            p: t.tanh(),
            chi: t.tanh(),
            pbar: t.cosh().ln(),
            varsigma: 1.0,
        })
    }

    fn log_prefactor(&self, x: f64) -> f64 {
        -0.5 * self.varsigma * (self.chi * x * x + self.pbar)
    }

    pub fn full_line_mass(&self, x: f64) -> f64 {
        self.log_prefactor(x).exp()
    }

    pub fn full_line_density(&self, x: f64, y: f64) -> f64 {
        self.log_prefactor(x).exp() * normal_pdf(y, self.f * x, self.p)
    }

    /// Mass of the version absorbed at the origin.
    pub fn half_line_mass(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        2.0 * self.log_prefactor(x).exp() * gauss_half_interval(self.f * x / self.p.sqrt())
    }

    /// Density of the version absorbed at the origin, by reflection.
    pub fn half_line_density(&self, x: f64, y: f64) -> f64 {
        if x <= 0.0 || y <= 0.0 {
            return 0.0;
        }
        let m = self.f * x;
        self.log_prefactor(x).exp() * (normal_pdf(y, m, self.p) - normal_pdf(y, -m, self.p))
    }
}

/// Constants of the linear diffusion in a quadratic well:
/// `beta = a + sqrt(a^2 + varsigma)` and the h-process drift `b = sqrt(a^2 + varsigma)`.
pub fn linear_well_beta(a: f64, varsigma: f64) -> (f64, f64) {
    let b = (a * a + varsigma).sqrt();
    (a + b, b)
}

/// Mass and density of the half-line linear diffusion in a quadratic well.
pub fn half_harmonic_linear(
    t: f64,
    x: f64,
    a: f64,
    varsigma: f64,
) -> Result<(f64, impl Fn(f64) -> f64)> {
    if !(x > 0.0) {
        return Err(bad("x", format!("state must be positive, got {x}")));
    }
    let s = LinearSlice::new(t, a, varsigma)?;
    Ok((s.half_line_mass(x), move |y: f64| s.half_line_density(x, y)))
}

/// A closed-form model selectable by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClosedFormKernel {
    Harmonic,
    HalfHarmonic,
    DirichletHeat {
        #[serde(default = "default_terms")]
        n_terms: usize,
    },
    GaussOu {
        a: Vec<Vec<f64>>,
        sigma: Vec<Vec<f64>>,
    },
    HalfHarmonicLinear {
        a: f64,
        varsigma: f64,
    },
}

fn default_terms() -> usize {
    60
}

pub const MODEL_NAMES: &[&str] = &[
    "harmonic",
    "half_harmonic",
    "dirichlet_heat",
    "gauss_ou",
    "half_harmonic_linear",
];

pub(crate) fn to_matrix(rows: &[Vec<f64>], name: &'static str) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 {
        return Err(bad(name, "empty matrix"));
    }
    let m = rows[0].len();
    if rows.iter().any(|r| r.len() != m) {
        return Err(bad(name, "ragged rows"));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

/// A kernel frozen at a time `t`, with expensive parameters precomputed.
#[derive(Debug, Clone)]
pub enum KernelSlice {
    Linear { slice: LinearSlice, half_line: bool },
    Dirichlet { t: f64, n_terms: usize },
    GaussOu(GaussOuSlice),
}

impl KernelSlice {
    pub fn density(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        match self {
            KernelSlice::Linear { slice, half_line } => {
                if *half_line {
                    if !(x[0] > 0.0) {
                        return Err(bad("x", format!("state must be positive, got {}", x[0])));
                    }
                    Ok(slice.half_line_density(x[0], y[0]))
                } else {
                    Ok(slice.full_line_density(x[0], y[0]))
                }
            }
            KernelSlice::Dirichlet { t, n_terms } => dirichlet_heat(*t, x[0], y[0], *n_terms),
            KernelSlice::GaussOu(s) => s.density(x, y),
        }
    }

    pub fn mass(&self, x: &[f64]) -> Result<f64> {
        match self {
            KernelSlice::Linear { slice, half_line } => Ok(if *half_line {
                slice.half_line_mass(x[0])
            } else {
                slice.full_line_mass(x[0])
            }),
            KernelSlice::Dirichlet { t, n_terms } => dirichlet_survival(*t, x[0], *n_terms),
            KernelSlice::GaussOu(_) => Ok(1.0),
        }
    }
}

impl ClosedFormKernel {
    pub fn name(&self) -> &'static str {
        match self {
            ClosedFormKernel::Harmonic => "harmonic",
            ClosedFormKernel::HalfHarmonic => "half_harmonic",
            ClosedFormKernel::DirichletHeat { .. } => "dirichlet_heat",
            ClosedFormKernel::GaussOu { .. } => "gauss_ou",
            ClosedFormKernel::HalfHarmonicLinear { .. } => "half_harmonic_linear",
        }
    }

    /// State-space dimension.
    pub fn dim(&self) -> usize {
        match self {
            ClosedFormKernel::GaussOu { a, .. } => a.len(),
            _ => 1,
        }
    }

    pub fn is_markov(&self) -> bool {
        matches!(self, ClosedFormKernel::GaussOu { .. })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ClosedFormKernel::DirichletHeat { n_terms } if *n_terms < 1 => Err(bad("n_terms", "need at least one term")),
            ClosedFormKernel::HalfHarmonicLinear { varsigma, .. } if !(*varsigma > 0.0) => {
                Err(bad("varsigma", format!("must be positive, got {varsigma}")))
            }
            ClosedFormKernel::GaussOu { a, sigma } => {
                let a = to_matrix(a, "A")?;
                let s = to_matrix(sigma, "Sigma")?;
                if a.nrows() != a.ncols() || s.nrows() != a.nrows() {
                    return Err(Error::Dimension(format!(
                        "A is {}x{}, Sigma is {}x{}",
                        a.nrows(),
                        a.ncols(),
                        s.nrows(),
                        s.ncols()
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn at(&self, t: f64) -> Result<KernelSlice> {
        check_t(t)?;
        self.validate()?;
        Ok(match self {
            ClosedFormKernel::Harmonic => KernelSlice::Linear {
                slice: LinearSlice::harmonic(t)?,
                half_line: false,
            },
            ClosedFormKernel::HalfHarmonic => KernelSlice::Linear {
                slice: LinearSlice::harmonic(t)?,
                half_line: true,
            },
            ClosedFormKernel::DirichletHeat { n_terms } => KernelSlice::Dirichlet { t, n_terms: *n_terms },
            ClosedFormKernel::GaussOu { a, sigma } => {
                KernelSlice::GaussOu(GaussOuSlice::new(t, &to_matrix(a, "A")?, &to_matrix(sigma, "Sigma")?)?)
            }
            ClosedFormKernel::HalfHarmonicLinear { a, varsigma } => KernelSlice::Linear {
                slice: LinearSlice::new(t, *a, *varsigma)?,
                half_line: true,
            },
        })
    }

    /// Exact leading eigenvalue, where known in closed form.
    pub fn leading_eigenvalue(&self) -> Option<f64> {
        match self {
            ClosedFormKernel::Harmonic => Some(-0.5),
            ClosedFormKernel::HalfHarmonic => Some(-1.5),
            ClosedFormKernel::DirichletHeat { .. } => Some(dirichlet_eigenvalue(1)),
            ClosedFormKernel::GaussOu { .. } => Some(0.0),
            ClosedFormKernel::HalfHarmonicLinear { a, varsigma } => {
                let (beta, b) = linear_well_beta(*a, *varsigma);
                Some(-beta / 2.0 - b)
            }
        }
    }

    /// Exact ground state, L2-normalized against Lebesgue measure on the state space.
    pub fn ground_state(&self, x: &[f64]) -> Option<f64> {
        let z = x[0];
        match self {
            ClosedFormKernel::Harmonic => Some(PI.powf(-0.25) * (-z * z / 2.0).exp()),
            ClosedFormKernel::HalfHarmonic => Some(2.0 * PI.powf(-0.25) * z * (-z * z / 2.0).exp()),
            ClosedFormKernel::DirichletHeat { .. } => Some(SQRT_2 * (PI * z).sin()),
            ClosedFormKernel::GaussOu { .. } => Some(1.0),
            ClosedFormKernel::HalfHarmonicLinear { a, varsigma } => {
                let (beta, _) = linear_well_beta(*a, *varsigma);
                let c = (4.0 * beta.powf(1.5) / PI.sqrt()).sqrt();
                Some(c * z * (-beta * z * z / 2.0).exp())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_two_at_one() {
        assert_eq!(hermite_poly(2, 1.0), 2.0);
        assert_eq!(hermite_poly(3, 1.0), -4.0);
    }

    #[test]
    fn hermite_functions_match_polynomials() {
        let x = 0.7;
        let f = hermite_functions(6, x);
        let mut fact = 1.0;
        for n in 0..6 {
            if n > 0 {
                fact *= n as f64;
            }
            let direct = hermite_poly(n, x) * (-x * x / 2.0).exp()
                / (2f64.powi(n as i32) * fact * PI.sqrt()).sqrt();
            assert!((f[n] - direct).abs() < 1e-13, "n={n}");
        }
    }

    #[test]
    fn linear_slice_reduces_to_harmonic() {
        let a = LinearSlice::new(1.3, 0.0, 1.0).unwrap();
        let b = LinearSlice::harmonic(1.3).unwrap();
        for (u, v) in [(a.f, b.f), (a.p, b.p), (a.chi, b.chi), (a.pbar, b.pbar)] {
            assert!((u - v).abs() < 1e-11, "{u} vs {v}");
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(mehler_kernel(0.0, 0.0, 0.0).is_err());
        assert!(half_harmonic_mass(1.0, 0.0).is_err());
        assert!(dirichlet_heat(1.0, 1.0, 0.5, 10).is_err());
        assert!(hermite_series_kernel(1.0, 0.0, 0.0, 201).is_err());
    }

    #[test]
    fn model_serde_round_trip() {
        let k = ClosedFormKernel::HalfHarmonicLinear { a: 1.0, varsigma: 3.0 };
        let s = serde_json::to_string(&k).unwrap();
        let back: ClosedFormKernel = serde_json::from_str(&s).unwrap();
        assert_eq!(k, back);
    }
}
