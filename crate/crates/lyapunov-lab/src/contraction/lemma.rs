use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::dobrushin::{local_minorization_values, v_dobrushin_values, MinorizationProfile};
use crate::core::{v_norm_values, vanishes_at_edges, LyapunovSpec, MeasureVec};
use crate::error::{bad, Result};
use crate::kernels::DiscreteOperator;
use crate::numerics::fit_line;

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(bad("eps", format!("must lie in (0,1), got {eps}")));
    }
    Ok(())
}

/// `alpha_eps(r) = (alpha/2) (1-eps)/((1+eps) + alpha/2) (1 - r_eps/r)` with `r_eps = 1/(1-eps)`.
pub fn rescaled_alpha(eps: f64, alpha_r: f64, r: f64) -> Result<f64> {
    check_eps(eps)?;
    if !(alpha_r > 0.0 && alpha_r <= 1.0) {
        return Err(bad("alpha_r", format!("must lie in (0,1], got {alpha_r}")));
    }
    let r_eps = 1.0 / (1.0 - eps);
    if !(r > r_eps) {
        return Err(bad("r", format!("must exceed r_eps = {r_eps}, got {r}")));
    }
    Ok(alpha_r / 2.0 * (1.0 - eps) / ((1.0 + eps) + alpha_r / 2.0) * (1.0 - r_eps / r))
}

/// Constant `c_{eps,r} = 1 + 2r(1+eps)/alpha(r)` of the geometric contraction bound.
pub fn theorem_constant(eps: f64, alpha_r: f64, r: f64) -> f64 {
    1.0 + 2.0 * r * (1.0 + eps) / alpha_r
}

/// Coefficients `(a, b)` with `V_{eps,r} = a + b V`, where the drift
/// `P V <= eps V + c` is first normalized to `V' = (1 + eps V / c)/2` (which has
/// `c = 1/2`) and then `V_{eps,r} = (1 + alpha(r) V' / ((1+eps) r)) / 2`.
pub fn rescaled_affine(eps: f64, c: f64, alpha_r: f64, r: f64) -> (f64, f64) {
    let k = alpha_r / (2.0 * (1.0 + eps) * r);
    (0.5 + k / 2.0, k * eps / (2.0 * c))
}

/// Normalized `V' = (1 + eps V / c) / 2`, which satisfies `P V' <= eps V' + 1/2`.
pub fn normalize_drift(v: &LyapunovSpec, eps: f64, c: f64) -> Result<LyapunovSpec> {
    check_eps(eps)?;
    if !(c > 0.0) {
        return Err(bad("c", format!("must be positive, got {c}")));
    }
    Ok(LyapunovSpec::affine_rescale(v.clone(), 0.5, eps / (2.0 * c)))
}

/// Rescaled Lyapunov function `V_{eps,r}` and its contraction margin `alpha_eps(r)`.
/// `alpha_r` and `r` refer to sub-level sets of the normalized `V' = (1 + eps V/c)/2`.
pub fn rescaled_lyapunov(
    eps: f64,
    c: f64,
    alpha_r: f64,
    r: f64,
    v: &LyapunovSpec,
) -> Result<(LyapunovSpec, f64)> {
    let alpha_eps = rescaled_alpha(eps, alpha_r, r)?;
    let vn = normalize_drift(v, eps, c)?;
    let k = alpha_r / ((1.0 + eps) * r);
    Ok((LyapunovSpec::affine_rescale(vn, 0.5, k / 2.0), alpha_eps))
}

/// Certified drift `P V <= eps V + c` together with a local minorization of the
/// normalized function and the resulting contraction margin.
#[derive(Debug, Clone, Serialize)]
pub struct DriftCertificate {
    pub epsilon: f64,
    pub c: f64,
    /// Sub-level radius, measured on the normalized `V' = (1 + eps V/c)/2`.
    pub r: f64,
    pub alpha_r: f64,
    pub alpha_eps_r: f64,
    /// `V_{eps,r} = a + b V`.
    pub rescaled_affine: (f64, f64),
    pub theta: Vec<f64>,
}

/// `Q(V) <= eps V + 1_{K_eps} c_eps` with `K_eps = {Theta > eps}` and `c_eps = sup_{K_eps} Q(V)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EpsilonBound {
    pub epsilon: f64,
    pub c_eps: f64,
    pub k_eps_size: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct FosterReport {
    pub certified: bool,
    pub reason: Option<String>,
    /// `Theta = P(V)/V` per grid point.
    pub theta: Vec<f64>,
    pub bounds: Vec<EpsilonBound>,
    pub theta_vanishes_at_edges: bool,
    pub certificate: Option<DriftCertificate>,
}

const EPS_LADDER: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

/// Foster-Lyapunov verification on precomputed V values.
pub fn foster_lyapunov_values(p: &DiscreteOperator, v: &[f64]) -> FosterReport {
    let pv = p.apply(v);
    let theta: Vec<f64> = pv.iter().zip(v).map(|(a, b)| a / b).collect();
    let theta_vanishes_at_edges = vanishes_at_edges(&theta, p.grid());
    let min_theta = theta.iter().cloned().fold(f64::INFINITY, f64::min);
    let bounds: Vec<EpsilonBound> = EPS_LADDER
        .iter()
        .map(|&e| {
            let k: Vec<usize> = (0..v.len()).filter(|&i| theta[i] > e).collect();
            EpsilonBound {
                epsilon: e,
                c_eps: k.iter().map(|&i| pv[i]).fold(0.0, f64::max),
                k_eps_size: k.len(),
            }
        })
        .collect();
    let fail = |reason: String, bounds: Vec<EpsilonBound>, theta: Vec<f64>| FosterReport {
        certified: false,
        reason: Some(reason),
        theta,
        bounds,
        theta_vanishes_at_edges,
        certificate: None,
    };
    if min_theta >= 1.0 - 1e-12 {
        return fail(format!("P(V)/V >= 1 everywhere (min {min_theta})"), bounds, theta);
    }
    // V' is increasing in V, so one profile over V serves every epsilon.
    let profile = MinorizationProfile::new(p, v);
    let vmax = v.iter().cloned().fold(0.0, f64::max);
    let mut best: Option<DriftCertificate> = None;
    for &eps in &EPS_LADDER {
        let c_raw = pv.iter().zip(v).map(|(a, b)| a - eps * b).fold(0.0, f64::max);
        let c = c_raw.max(1e-12 * vmax);
        let r_eps = 1.0 / (1.0 - eps);
        for (k, level) in profile.levels.iter().enumerate() {
            let r = 0.5 * (1.0 + eps * level / c);
            let alpha = profile.alpha[k];
            if r <= r_eps || alpha <= 0.0 {
                continue;
            }
            let a_eps = match rescaled_alpha(eps, alpha, r) {
                Ok(a) => a,
                Err(_) => continue,
            };
            if best.as_ref().is_none_or(|b| a_eps > b.alpha_eps_r) {
                best = Some(DriftCertificate {
                    epsilon: eps,
                    c,
                    r,
                    alpha_r: alpha,
                    alpha_eps_r: a_eps,
                    rescaled_affine: rescaled_affine(eps, c, alpha, r),
                    theta: theta.clone(),
                });
            }
        }
    }
    match best {
        Some(cert) => FosterReport {
            certified: true,
            reason: None,
            theta,
            bounds,
            theta_vanishes_at_edges,
            certificate: Some(cert),
        },
        None => fail("no sub-level set with positive minorization beyond r_eps".into(), bounds, theta),
    }
}

pub fn foster_lyapunov_verify(p: &DiscreteOperator, v: &LyapunovSpec) -> Result<FosterReport> {
    let vals = v.eval_on(p.grid())?;
    Ok(foster_lyapunov_values(p, &vals))
}

/// `|||(mu - eta) P^t|||_V` for `t = 0..=T` with a fitted exponential rate.
#[derive(Debug, Clone, Serialize)]
pub struct DecayCurve {
    pub values: Vec<f64>,
    /// Decay rate per step from a least-squares fit of `log value` over the tail half.
    pub rate_per_step: Option<f64>,
    /// Same rate per unit time (divided by the operator's time step).
    pub rate: Option<f64>,
    /// `(C, beta)` with `value_t <= C beta^t value_0`, from a drift certificate.
    pub envelope: Option<(f64, f64)>,
    pub envelope_holds: Option<bool>,
}

pub fn decay_rate_fit(values: &[f64]) -> Option<f64> {
    let t_max = values.len().saturating_sub(1);
    let start = t_max / 2;
    let floor = values.first().copied().unwrap_or(0.0) * 1e-13;
    let (ts, ls): (Vec<f64>, Vec<f64>) = (start..=t_max)
        .filter(|&t| values[t] > floor && values[t] > 0.0)
        .map(|t| (t as f64, values[t].ln()))
        .unzip();
    fit_line(&ts, &ls).ok().map(|(s, _)| -s)
}

pub fn geometric_decay_curve_values(
    p: &DiscreteOperator,
    v: &[f64],
    mu: &MeasureVec,
    eta: &MeasureVec,
    t_max: usize,
) -> Result<DecayCurve> {
    let mut nu = mu.sub(eta)?.masses;
    let mut values = Vec::with_capacity(t_max + 1);
    values.push(v_norm_values(&nu, v));
    for _ in 0..t_max {
        nu = p.act(&nu);
        values.push(v_norm_values(&nu, v));
    }
    let rate_per_step = decay_rate_fit(&values);
    let rate = rate_per_step.map(|b| b / p.time_step());
    let report = foster_lyapunov_values(p, v);
    let (envelope, envelope_holds) = match report.certificate {
        Some(cert) => {
            let (a, b) = cert.rescaled_affine;
            let w: Vec<f64> = v.iter().map(|x| a + b * x).collect();
            let (beta, _) = v_dobrushin_values(p, &w);
            let v_min = v.iter().cloned().fold(f64::INFINITY, f64::min);
            let c = 1.0 + a / (b * v_min);
            let v0 = values[0];
            let holds = values
                .iter()
                .enumerate()
                .all(|(t, x)| *x <= c * beta.powi(t as i32) * v0 * (1.0 + 1e-9) + 1e-300);
            (Some((c, beta)), Some(holds))
        }
        None => (None, None),
    };
    Ok(DecayCurve {
        values,
        rate_per_step,
        rate,
        envelope,
        envelope_holds,
    })
}

pub fn geometric_decay_curve(
    p: &DiscreteOperator,
    v: &LyapunovSpec,
    mu: &MeasureVec,
    eta: &MeasureVec,
    t_max: usize,
) -> Result<DecayCurve> {
    let vals = v.eval_on(p.grid())?;
    geometric_decay_curve_values(p, &vals, mu, eta, t_max)
}

/// Outcome of the non-expansiveness check in the `1 + rho V` norm.
#[derive(Debug, Clone, Serialize)]
pub struct NonexpansiveReport {
    /// Smallest `c` with `P(V) <= V - phi(V) + c`.
    pub c: f64,
    /// Minorization on `{phi(V) <= r}`.
    pub alpha1: f64,
    pub window_ok: bool,
    pub violated: Option<String>,
    /// Whether `phi(V)/V` falls below its interior median on the outermost points.
    pub phi_ratio_vanishes_at_edges: bool,
    /// Largest `|||mu P^t|||_{1+rho V} / |||mu|||_{1+rho V}` over the random measures and `t <= T`.
    pub max_ratio: f64,
    /// `beta_{1+rho V}(P)`.
    pub beta_one_step: f64,
    pub holds: bool,
}

/// Admissibility window of the non-expansive estimate: `rho c <= alpha1(r)` and `rho >= 2 alpha1(r)/r`.
pub fn nonexpansive_window(c: f64, alpha1: f64, rho: f64, r: f64) -> Option<String> {
    if rho * c > alpha1 {
        return Some(format!("rho*c = {} exceeds alpha1(r) = {alpha1}", rho * c));
    }
    if rho < 2.0 * alpha1 / r {
        return Some(format!("rho = {rho} is below 2*alpha1(r)/r = {}", 2.0 * alpha1 / r));
    }
    None
}

#[allow(clippy::too_many_arguments)]
pub fn nonexpansive_check_values(
    p: &DiscreteOperator,
    v: &[f64],
    phi: &dyn Fn(f64) -> f64,
    rho: f64,
    r: f64,
    t_max: usize,
    n_measures: usize,
    seed: u64,
) -> Result<NonexpansiveReport> {
    if !(rho > 0.0) {
        return Err(bad("rho", format!("must be positive, got {rho}")));
    }
    let pv = p.apply(v);
    let phiv: Vec<f64> = v.iter().map(|x| phi(*x)).collect();
    let c = (0..v.len()).map(|i| pv[i] - v[i] + phiv[i]).fold(0.0, f64::max);
    let alpha1 = local_minorization_values(p, &phiv, r)?;
    let violated = nonexpansive_window(c, alpha1, rho, r);
    let ratio: Vec<f64> = phiv.iter().zip(v).map(|(a, b)| a / b).collect();
    let phi_ratio_vanishes_at_edges = vanishes_at_edges(&ratio, p.grid());
    let w: Vec<f64> = v.iter().map(|x| 1.0 + rho * x).collect();
    let (beta_one_step, _) = v_dobrushin_values(p, &w);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_ratio = 0.0f64;
    for _ in 0..n_measures {
        let raw: Vec<f64> = (0..v.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mean = raw.iter().sum::<f64>() / raw.len() as f64;
        let mut mu: Vec<f64> = raw.iter().map(|x| x - mean).collect();
        let n0 = v_norm_values(&mu, &w);
        if n0 == 0.0 {
            continue;
        }
        for _ in 0..t_max {
            mu = p.act(&mu);
            max_ratio = max_ratio.max(v_norm_values(&mu, &w) / n0);
        }
    }
    Ok(NonexpansiveReport {
        c,
        alpha1,
        window_ok: violated.is_none(),
        violated,
        phi_ratio_vanishes_at_edges,
        max_ratio,
        beta_one_step,
        holds: max_ratio <= 1.0 + 1e-9 && beta_one_step <= 1.0 + 1e-9,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn nonexpansive_check(
    p: &DiscreteOperator,
    v: &LyapunovSpec,
    phi: &dyn Fn(f64) -> f64,
    rho: f64,
    r: f64,
    t_max: usize,
    seed: u64,
) -> Result<NonexpansiveReport> {
    let vals = v.eval_on(p.grid())?;
    nonexpansive_check_values(p, &vals, phi, rho, r, t_max, 50, seed)
}
