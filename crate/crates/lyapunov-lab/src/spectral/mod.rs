//! Normalized flows, leading eigen-triples by power iteration, the ground-state
//! product, finite-rank approximation gaps and h-transform identities.

use std::collections::VecDeque;
use std::sync::Arc;

use serde::Serialize;

use crate::core::{boltzmann_gibbs, tv_distance, v_norm_values, FunctionVec, GridDomain, LyapunovSpec, MeasureVec};
use crate::error::{bad, Error, Result};
use crate::kernels::{discretize, doob_h_transform, ClosedFormKernel, DiscreteOperator};
use crate::numerics::fit_line;

/// `Phi_{0,k tau}(eta0)` for `k = 0..=n` and the one-step masses `Phi(Q(1))`.
#[derive(Debug, Clone)]
pub struct NormalizedFlow {
    pub measures: Vec<MeasureVec>,
    pub masses: Vec<f64>,
}

impl NormalizedFlow {
    /// Product of the one-step masses, `eta0 Q^n(1)` by the denormalisation formula.
    pub fn denormalized_mass(&self) -> f64 {
        self.masses.iter().product()
    }
}

pub fn normalized_flow(q: &DiscreteOperator, eta0: &MeasureVec, n: usize) -> Result<NormalizedFlow> {
    if !eta0.is_probability(1e-10) {
        return Err(Error::NotProbability(format!("eta0 has mass {}", eta0.total_mass())));
    }
    let mut measures = vec![eta0.clone()];
    let mut masses = Vec::with_capacity(n);
    let mut cur = eta0.masses.clone();
    for step in 1..=n {
        let next = q.act(&cur);
        let m: f64 = next.iter().sum();
        if !(m > 0.0) {
            return Err(Error::Absorbed { step });
        }
        cur = next.iter().map(|x| x / m).collect();
        masses.push(m);
        measures.push(MeasureVec::new(q.grid_arc().clone(), cur.clone())?);
    }
    Ok(NormalizedFlow { measures, masses })
}

/// Leading eigen-triple `(rho, h, eta_inf)` with `eta_inf(h) = 1`.
#[derive(Debug, Clone)]
pub struct EigenTriple {
    /// From the mass ratio `eta_inf Q(1) = e^{rho tau}`.
    pub rho: f64,
    /// From the right iteration, `log(||Q h|| / ||h||) / tau`.
    pub rho_right: f64,
    pub h: FunctionVec,
    pub eta_inf: MeasureVec,
    pub converged: bool,
    pub iterations: usize,
    /// `||Q h - e^{rho tau} h||_inf / ||h||_inf`.
    pub residual: f64,
    /// `||Phi_tau(eta_inf) - eta_inf||_tv`.
    pub tv_residual: f64,
}

/// Breadth-first reachability along positive entries, forward and backward.
fn strongly_connected(q: &DiscreteOperator) -> bool {
    let n = q.len();
    let m = q.matrix();
    for forward in [true, false] {
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for j in 0..n {
                let w = if forward { m[(i, j)] } else { m[(j, i)] };
                if w > 0.0 && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return false;
        }
    }
    true
}

/// Power iteration on the left (normalized flow) and right (`Q h / ||Q h||`)
/// at once. Stops when both residuals are below `tol`.
pub fn leading_eigentriple(q: &DiscreteOperator, tol: f64, max_iter: usize) -> Result<EigenTriple> {
    let n = q.len();
    if let Some(i) = q.row_sums().iter().position(|s| !(*s > 0.0)) {
        return Err(bad("Q", format!("row {i} has zero mass")));
    }
    if !strongly_connected(q) {
        return Err(bad("Q", "not irreducible on the grid"));
    }
    let tau = q.time_step();
    let mut h = vec![1.0; n];
    let mut eta = vec![1.0 / n as f64; n];
    let sup = |v: &[f64]| v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let mut state = (0.0, 0.0, f64::INFINITY, f64::INFINITY);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let qh = q.apply(&h);
        let s = sup(&qh);
        h = qh.iter().map(|x| x / s).collect();
        let next = q.act(&eta);
        let m: f64 = next.iter().sum();
        eta = next.iter().map(|x| x / m).collect();

        let qh = q.apply(&h);
        let lam_r = sup(&qh) / sup(&h);
        let eq = q.act(&eta);
        let lam = eq.iter().sum::<f64>();
        let residual = sup(&qh.iter().zip(&h).map(|(a, b)| a - lam * b).collect::<Vec<_>>()) / sup(&h);
        let tv = eq.iter().zip(&eta).map(|(a, b)| (a / lam - b).abs()).sum::<f64>() / 2.0;
        state = (lam.ln() / tau, lam_r.ln() / tau, residual, tv);
        if residual <= tol && tv <= tol {
            converged = true;
            break;
        }
    }
    let z: f64 = eta.iter().zip(&h).map(|(a, b)| a * b).sum();
    let h: Vec<f64> = h.iter().map(|x| x / z).collect();
    if let Some(i) = h.iter().position(|x| !(*x > 0.0)) {
        return Err(bad("h", format!("power iteration produced a non-positive entry at {i}")));
    }
    let grid = q.grid_arc().clone();
    Ok(EigenTriple {
        rho: state.0,
        rho_right: state.1,
        h: FunctionVec::new(grid.clone(), h)?,
        eta_inf: MeasureVec::new(grid, eta)?,
        converged,
        iterations,
        residual: state.2,
        tv_residual: state.3,
    })
}

/// `L2` distance on the grid between `h` rescaled to unit norm and the exact `h_exact`.
pub fn ground_state_l2_error(h: &FunctionVec, h_exact: impl Fn(&[f64]) -> f64) -> f64 {
    let g = &h.grid;
    let norm = g.integrate(&h.values.iter().map(|x| x * x).collect::<Vec<_>>()).sqrt();
    let diff: Vec<f64> = (0..g.len())
        .map(|i| {
            let d = h.values[i] / norm - h_exact(g.point(i));
            d * d
        })
        .collect();
    g.integrate(&diff).sqrt()
}

/// Partial products of `1 + e^{-rho tau} [Phi_{n tau}(delta_x)(Q 1) - Phi_{n tau}(eta_inf)(Q 1)]`.
#[derive(Debug, Clone, Serialize)]
pub struct GroundStateProduct {
    pub factors: Vec<f64>,
    /// `partial[n]` is the product of the first `n + 1` factors.
    pub partial: Vec<f64>,
}

impl GroundStateProduct {
    pub fn value(&self) -> f64 {
        *self.partial.last().unwrap_or(&1.0)
    }
}

pub fn ground_state_product(
    q: &DiscreteOperator,
    triple: &EigenTriple,
    x_index: usize,
    n: usize,
) -> Result<GroundStateProduct> {
    if !triple.converged {
        return Err(bad("triple", "eigen-triple did not converge"));
    }
    if x_index >= q.len() {
        return Err(bad("x_index", format!("{x_index} is outside the grid")));
    }
    let tau = q.time_step();
    let q1 = q.row_sums();
    let eta_mass: f64 = triple.eta_inf.masses.iter().zip(&q1).map(|(a, b)| a * b).sum();
    let mut cur = vec![0.0; q.len()];
    cur[x_index] = 1.0;
    let mut factors = Vec::with_capacity(n);
    let mut partial = Vec::with_capacity(n);
    let mut acc = 1.0;
    for step in 0..n {
        let m: f64 = cur.iter().zip(&q1).map(|(a, b)| a * b).sum();
        let f = 1.0 + (-triple.rho * tau).exp() * (m - eta_mass);
        if !(f > 0.0) {
            return Err(bad("grid", format!("factor {step} is {f}; grid too coarse")));
        }
        acc *= f;
        factors.push(f);
        partial.push(acc);
        let next = q.act(&cur);
        let s: f64 = next.iter().sum();
        cur = next.iter().map(|x| x / s).collect();
    }
    Ok(GroundStateProduct { factors, partial })
}

/// V-operator-norm distance between `Q_t / mu Q_t(1)` and the rank-one
/// `T^{mu,H}_t(f) = Q_t(H) mu_t(f) / mu Q_t(1)`, for `t = tau..T tau`.
///
/// The distance only tends to 0 when `eta_inf(H) = 1`; otherwise it settles at
/// `|1 - eta_inf(H)|` times the limit of `h / mu(h)`.
#[derive(Debug, Clone, Serialize)]
pub struct GapCurve {
    pub times: Vec<f64>,
    pub gaps: Vec<f64>,
    /// Fitted `b` in `gap ~ e^{-b t}`, over the tail above the rounding floor.
    pub rate: Option<f64>,
}

pub fn finite_rank_gap(
    q: &DiscreteOperator,
    mu: &MeasureVec,
    h: &FunctionVec,
    v: &LyapunovSpec,
    t_max: usize,
) -> Result<GapCurve> {
    if let Some(i) = h.values.iter().position(|x| !(*x > 0.0)) {
        return Err(bad("H", format!("must be positive, H[{i}] = {}", h.values[i])));
    }
    let vv = v.eval_on(q.grid())?;
    let n = q.len();
    let tau = q.time_step();
    let mut qt = q.clone();
    let mut times = Vec::with_capacity(t_max);
    let mut gaps = Vec::with_capacity(t_max);
    for k in 1..=t_max {
        if k > 1 {
            qt = qt.compose(q)?;
        }
        let m = qt.matrix();
        let mu_q1: f64 = (0..n).map(|i| mu.masses[i] * m.row(i).sum()).sum();
        let qh = qt.apply(&h.values);
        let mu_t: Vec<f64> = qt.act(&mu.masses).iter().map(|x| x / mu_q1).collect();
        let mut worst = 0.0f64;
        for i in 0..n {
            let row: Vec<f64> = (0..n).map(|j| (m[(i, j)] - qh[i] * mu_t[j]) / mu_q1).collect();
            worst = worst.max(v_norm_values(&row, &vv) / vv[i]);
        }
        times.push(k as f64 * tau);
        gaps.push(worst);
    }
    let floor = 1e-11 * gaps.iter().cloned().fold(0.0, f64::max);
    let usable: Vec<usize> = (0..gaps.len()).filter(|&k| gaps[k] > floor).collect();
    let tail: Vec<usize> = usable.iter().cloned().skip(usable.len() / 4).collect();
    let rate = if tail.len() >= 2 {
        let x: Vec<f64> = tail.iter().map(|&k| times[k]).collect();
        let y: Vec<f64> = tail.iter().map(|&k| gaps[k].ln()).collect();
        Some(-fit_line(&x, &y)?.0)
    } else {
        None
    };
    Ok(GapCurve { times, gaps, rate })
}

/// `rho_2 - rho_1` for the self-adjoint closed-form models.
pub fn h_spectral_gap(model: &ClosedFormKernel) -> Option<f64> {
    match model {
        ClosedFormKernel::Harmonic => Some(-1.0),
        ClosedFormKernel::HalfHarmonic => Some(-2.0),
        ClosedFormKernel::DirichletHeat { .. } => Some(-1.5 * std::f64::consts::PI.powi(2)),
        _ => None,
    }
}

/// Both sides of `||e^{-rho t} Q_t f - h eta_inf(f)/eta_inf(h)||_{L2} <= e^{rho^h_2 t} (nu(f^2) - nu(h f)^2)^{1/2}`.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralDecayReport {
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// Quadrature allowance added to the right side.
    pub slack: f64,
    pub holds: bool,
}

pub fn spectral_decay_check(model: &ClosedFormKernel, f: &FunctionVec, t: f64) -> Result<SpectralDecayReport> {
    let gap2 = h_spectral_gap(model).ok_or_else(|| bad("model", format!("{} is not self-adjoint", model.name())))?;
    let rho = model.leading_eigenvalue().expect("closed-form models know rho_1");
    let grid = f.grid.clone();
    let h: Vec<f64> = (0..grid.len()).map(|i| model.ground_state(grid.point(i)).unwrap()).collect();
    let prod = |a: &[f64], b: &[f64]| grid.integrate(&a.iter().zip(b).map(|(x, y)| x * y).collect::<Vec<_>>());
    let nu_h2 = prod(&h, &h);
    let nu_hf = prod(&h, &f.values);
    let nu_f2 = prod(&f.values, &f.values);
    let qf = if t > 0.0 {
        discretize(model, grid.clone(), t)?.apply(&f.values)
    } else {
        f.values.clone()
    };
    let scale = (-rho * t).exp();
    let diff: Vec<f64> = (0..grid.len()).map(|i| scale * qf[i] - h[i] * nu_hf / nu_h2).collect();
    let lhs = prod(&diff, &diff).sqrt();
    let rhs = (gap2 * t).exp() * (nu_f2 - nu_hf * nu_hf / nu_h2).max(0.0).sqrt();
    let slack = 1e-6 * nu_f2.sqrt();
    Ok(SpectralDecayReport {
        t,
        lhs,
        rhs,
        slack,
        holds: lhs <= rhs + slack,
    })
}

/// `||Psi_h(Phi_t(eta)) - Psi_h(eta) P^h_t||_tv` at each requested step count.
#[derive(Debug, Clone, Serialize)]
pub struct CommuteReport {
    pub steps: Vec<usize>,
    pub tv: Vec<f64>,
    pub max_tv: f64,
}

pub fn h_transform_commute(q: &DiscreteOperator, triple: &EigenTriple, eta: &MeasureVec) -> Result<CommuteReport> {
    h_transform_commute_at(q, triple, eta, &[1, 2, 5])
}

pub fn h_transform_commute_at(
    q: &DiscreteOperator,
    triple: &EigenTriple,
    eta: &MeasureVec,
    steps: &[usize],
) -> Result<CommuteReport> {
    let p = doob_h_transform(q, &triple.h, triple.rho)?;
    let max_step = steps.iter().cloned().max().unwrap_or(0);
    let flow = normalized_flow(q, &eta.normalized()?, max_step)?;
    let mut right = boltzmann_gibbs(&triple.h, eta)?;
    let mut tv = Vec::with_capacity(steps.len());
    for k in 1..=max_step {
        right = p.act_measure(&right)?;
        if steps.contains(&k) {
            let left = boltzmann_gibbs(&triple.h, &flow.measures[k])?;
            tv.push(tv_distance(&left, &right)?);
        }
    }
    let max_tv = tv.iter().cloned().fold(0.0, f64::max);
    Ok(CommuteReport {
        steps: steps.to_vec(),
        tv,
        max_tv,
    })
}

/// Eigen-triple of a closed-form model discretized on `grid` with step `tau`.
pub fn model_eigentriple(model: &ClosedFormKernel, grid: Arc<GridDomain>, tau: f64) -> Result<EigenTriple> {
    let q = discretize(model, grid, tau)?;
    leading_eigentriple(&q, 1e-12, 20_000)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn markov_flow_has_unit_masses() {
        let g = Arc::new(GridDomain::lattice(0, 2).unwrap());
        let p = DiscreteOperator::from_rows(g.clone(), &[vec![0.9, 0.1], vec![0.2, 0.8]], 1.0).unwrap();
        let f = normalized_flow(&p, &MeasureVec::dirac(g, 0), 5).unwrap();
        assert!(f.masses.iter().all(|m| (m - 1.0).abs() < 1e-15));
    }

    #[test]
    fn two_state_triple() {
        let g = Arc::new(GridDomain::lattice(0, 2).unwrap());
        let q = DiscreteOperator::from_rows(g, &[vec![0.5, 0.2], vec![0.2, 0.5]], 1.0).unwrap();
        let t = leading_eigentriple(&q, 1e-13, 1000).unwrap();
        assert!(t.converged);
        assert!((t.rho - 0.7f64.ln()).abs() < 1e-12);
        assert!((t.h.values[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn absorbed_flow_reports_step() {
        let g = Arc::new(GridDomain::lattice(0, 2).unwrap());
        let q = DiscreteOperator::from_rows(g.clone(), &[vec![0.0, 0.5], vec![0.0, 0.0]], 1.0).unwrap();
        let e = normalized_flow(&q, &MeasureVec::dirac(g, 0), 3).unwrap_err();
        assert_eq!(e, Error::Absorbed { step: 2 });
    }
}
