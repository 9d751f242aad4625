//! Diffusion generators `L(f) = b'grad f + 1/2 Tr(Sigma Sigma' hess f)` and the
//! carre du champ `Gamma_L(f,f) = grad f' Sigma Sigma' grad f`, by central
//! finite differences with one Richardson step.

use nalgebra::DMatrix;

use crate::core::LyapunovSpec;
use crate::error::{bad, Error, Result};

pub const DEFAULT_FD_STEP: f64 = 1e-4;

/// Generator value at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorValue {
    /// `L(V)(x)`.
    pub lv: f64,
    /// `Gamma_L(V,V)(x)`.
    pub gamma: f64,
    /// Gap between the step-h and step-2h estimates of `L(V)(x)`.
    pub richardson_gap: f64,
}

fn derivatives(v: &dyn Fn(&[f64]) -> Result<f64>, x: &[f64], h: f64) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = x.len();
    let at = |dx: &[(usize, f64)]| -> Result<f64> {
        let mut y = x.to_vec();
        for (k, d) in dx {
            y[*k] += d;
        }
        v(&y).map_err(|_| Error::Singularity { x: x.to_vec() })
    };
    let v0 = at(&[])?;
    let mut grad = vec![0.0; n];
    let mut hess = DMatrix::zeros(n, n);
    for i in 0..n {
        let p = at(&[(i, h)])?;
        let m = at(&[(i, -h)])?;
        grad[i] = (p - m) / (2.0 * h);
        hess[(i, i)] = (p - 2.0 * v0 + m) / (h * h);
        for j in 0..i {
            let pp = at(&[(i, h), (j, h)])?;
            let pm = at(&[(i, h), (j, -h)])?;
            let mp = at(&[(i, -h), (j, h)])?;
            let mm = at(&[(i, -h), (j, -h)])?;
            let d = (pp - pm - mp + mm) / (4.0 * h * h);
            hess[(i, j)] = d;
            hess[(j, i)] = d;
        }
    }
    Ok((grad, hess))
}

fn evaluate(b: &[f64], r: &DMatrix<f64>, grad: &[f64], hess: &DMatrix<f64>) -> (f64, f64) {
    let n = grad.len();
    let mut drift = 0.0;
    let mut diff = 0.0;
    let mut gamma = 0.0;
    for i in 0..n {
        drift += b[i] * grad[i];
        for j in 0..n {
            diff += r[(i, j)] * hess[(j, i)];
            gamma += grad[i] * r[(i, j)] * grad[j];
        }
    }
    (drift + 0.5 * diff, gamma)
}

/// `L(V)(x)` and `Gamma_L(V,V)(x)` for an arbitrary twice differentiable `V`.
pub fn generator_apply_fn(
    drift: &dyn Fn(&[f64]) -> Vec<f64>,
    diffusion: &dyn Fn(&[f64]) -> DMatrix<f64>,
    v: &dyn Fn(&[f64]) -> Result<f64>,
    x: &[f64],
    fd_step: f64,
) -> Result<GeneratorValue> {
    if !(fd_step > 0.0) {
        return Err(bad("fd_step", format!("must be positive, got {fd_step}")));
    }
    let b = drift(x);
    let s = diffusion(x);
    if b.len() != x.len() || s.nrows() != x.len() {
        return Err(Error::Dimension(format!(
            "state has {} coordinates, drift {} and diffusion {} rows",
            x.len(),
            b.len(),
            s.nrows()
        )));
    }
    let r = &s * s.transpose();
    let (g1, h1) = derivatives(v, x, fd_step)?;
    let (g2, h2) = derivatives(v, x, 2.0 * fd_step)?;
    let (l1, gam1) = evaluate(&b, &r, &g1, &h1);
    let (l2, gam2) = evaluate(&b, &r, &g2, &h2);
    Ok(GeneratorValue {
        lv: (4.0 * l1 - l2) / 3.0,
        gamma: (4.0 * gam1 - gam2) / 3.0,
        richardson_gap: (l1 - l2).abs(),
    })
}

/// `L(V)(x)` for a Lyapunov family on the whole space.
pub fn generator_apply(
    drift: &dyn Fn(&[f64]) -> Vec<f64>,
    diffusion: &dyn Fn(&[f64]) -> DMatrix<f64>,
    v: &LyapunovSpec,
    x: &[f64],
    fd_step: f64,
) -> Result<GeneratorValue> {
    let unbounded = vec![(f64::NEG_INFINITY, f64::INFINITY); x.len()];
    let f = |y: &[f64]| v.eval(y, &unbounded);
    if !v.is_regular_at(x, &unbounded) {
        return Err(Error::Singularity { x: x.to_vec() });
    }
    generator_apply_fn(drift, diffusion, &f, x, fd_step)
}

/// Two-dimensional Langevin diffusion in `(q, p)` with confining potential `W`:
/// `dq = beta p/m dt`, `dp = -beta (W'(q) + sigma^2 p/(2m)) dt + sigma dB`.
#[derive(Debug, Clone, Copy)]
pub struct Langevin2d {
    pub beta: f64,
    pub mass: f64,
    pub sigma: f64,
    /// Exponent `k` in `W(q) = q^k`.
    pub power: i32,
}

impl Langevin2d {
    pub fn potential(&self, q: f64) -> f64 {
        q.powi(self.power)
    }

    pub fn potential_grad(&self, q: f64) -> f64 {
        self.power as f64 * q.powi(self.power - 1)
    }

    pub fn drift(&self, x: &[f64]) -> Vec<f64> {
        let (q, p) = (x[0], x[1]);
        vec![
            self.beta * p / self.mass,
            -self.beta * (self.potential_grad(q) + self.sigma * self.sigma * p / (2.0 * self.mass)),
        ]
    }

    pub fn diffusion(&self, _x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, self.sigma])
    }

    /// `V(q,p) = 1 + p^2/(2m) + W(q) + (eps/2)(sigma^2 q^2/2 + 2pq)`, needs `eps < sigma^2/(2m)`.
    pub fn lyapunov(&self, eps: f64, x: &[f64]) -> f64 {
        let (q, p) = (x[0], x[1]);
        1.0 + p * p / (2.0 * self.mass)
            + self.potential(q)
            + 0.5 * eps * (self.sigma * self.sigma * q * q / 2.0 + 2.0 * p * q)
    }

    /// Exact generator of [`Self::lyapunov`], used as an oracle.
    pub fn lyapunov_generator(&self, eps: f64, x: &[f64]) -> f64 {
        let (q, p) = (x[0], x[1]);
        let s2 = self.sigma * self.sigma;
        -self.beta * ((s2 / (2.0 * self.mass) - eps) * p * p / self.mass + eps * q * self.potential_grad(q))
            + s2 / (2.0 * self.mass)
    }
}

/// Fitted drift bound `L(V) <= -a V + c` on a point cloud.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftFit {
    pub a: f64,
    pub c: f64,
    /// Largest value of `L(V) + aV - c` over the points (nonpositive by construction).
    pub max_residual: f64,
}

/// Fits `a` as half the smallest ratio `-L(V)/V` over the outer points (those with
/// `V` above its median), then `c = max(L(V) + aV)`.
pub fn fit_geometric_drift(v: &[f64], lv: &[f64]) -> Result<DriftFit> {
    if v.len() != lv.len() || v.is_empty() {
        return Err(bad("points", "need matching nonempty V and L(V) samples"));
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sorted[sorted.len() / 2];
    let ratio = v
        .iter()
        .zip(lv)
        .filter(|(vv, _)| **vv > median)
        .map(|(vv, l)| -l / vv)
        .fold(f64::INFINITY, f64::min);
    if !(ratio > 0.0) || !ratio.is_finite() {
        return Err(bad("drift", format!("no negative drift at large V (min ratio {ratio})")));
    }
    let a = ratio / 2.0;
    let c = v.iter().zip(lv).map(|(vv, l)| l + a * vv).fold(f64::NEG_INFINITY, f64::max);
    let max_residual = v.iter().zip(lv).map(|(vv, l)| l + a * vv - c).fold(f64::NEG_INFINITY, f64::max);
    Ok(DriftFit { a, c, max_residual })
}

/// Largest value of `alpha W + beta + L(W) + eps Gamma_L(W,W)` over the points;
/// nonpositive means the exponential-moment condition holds there.
pub fn exponential_moment_residual(
    drift: &dyn Fn(&[f64]) -> Vec<f64>,
    diffusion: &dyn Fn(&[f64]) -> DMatrix<f64>,
    w: &dyn Fn(&[f64]) -> Result<f64>,
    alpha: f64,
    beta: f64,
    eps: f64,
    points: &[Vec<f64>],
    fd_step: f64,
) -> Result<f64> {
    if !(alpha > 0.0) || !(eps > 0.0 && eps < 1.0) {
        return Err(bad("alpha/eps", "need alpha > 0 and 0 < eps < 1"));
    }
    let mut worst = f64::NEG_INFINITY;
    for x in points {
        let g = generator_apply_fn(drift, diffusion, w, x, fd_step)?;
        let r = alpha * w(x)? + beta + g.lv + eps * g.gamma;
        worst = worst.max(r);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ou_quadratic() {
        let v = |x: &[f64]| Ok(x[0] * x[0]);
        let g = generator_apply_fn(
            &|x| vec![-x[0]],
            &|_| DMatrix::from_element(1, 1, 1.0),
            &v,
            &[2.0],
            DEFAULT_FD_STEP,
        )
        .unwrap();
        assert!((g.lv + 7.0).abs() < 1e-6);
        assert!((g.gamma - 16.0).abs() < 1e-6);
    }

    #[test]
    fn singular_point_rejected() {
        let v: LyapunovSpec = "inv_plus_poly:2".parse().unwrap();
        let r = generator_apply(&|x| vec![-x[0]], &|_| DMatrix::from_element(1, 1, 1.0), &v, &[0.0], 1e-4);
        assert!(matches!(r, Err(Error::Singularity { .. })));
    }
}
