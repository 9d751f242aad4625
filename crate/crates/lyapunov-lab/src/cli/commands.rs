//! One function per config command. Each reads its `params`, runs the
//! library, and turns the outcome into a [`Report`].

use nalgebra::DMatrix;
use rand::Rng;
use serde::Deserialize;
use serde_json::{json, Value};

use super::{from_value, Assertion, Curve, ExperimentConfig, Report};
use crate::contraction::{foster_lyapunov_values, geometric_decay_curve, random_lemma_trial, v_dobrushin_values};
use crate::core::MeasureVec;
use crate::error::{Error, Result};
use crate::geometry::{
    boundary_lyapunov, coarea_check, dirichlet_boundary_check, level_set_density, offset_jacobian, signed_distance,
    Atlas, BoundaryDomain, BoundaryProfile, MongeSurface, SubGaussianKernel, SurfaceSpec,
};
use crate::kernels::{discretize, doob_h_transform, to_matrix, ClosedFormKernel, DiscreteOperator};
use crate::numerics::stream_rng;
use crate::riccati::{
    algebraic_riccati, bd_moment_bound, coupled_oscillator_semigroup, matrix_riccati_dt, scalar_riccati_with_error,
    BirthDeathSpec, MatrixRiccati, ScalarRiccati,
};
use crate::simulate::{
    feynman_kac_curve, mc_validate_batch, named_model, qsd_particle_estimate, qsd_replicas, AbsorptionSpec, InitialLaw,
    McBudget, Observable, SdeModel, MC_CASES,
};
use crate::spectral::{ground_state_l2_error, h_spectral_gap, model_eigentriple};
use crate::subgeometric::{
    loglog_slope, polynomial_chain, polynomial_rate_check_values, power_tail_measure, prototype_drift, PolyChainSpec,
};

fn to_json<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn report(command: &str, results: Value, assertions: Vec<Assertion>, curves: Vec<Curve>, headline: (&str, f64)) -> Report {
    Report {
        command: command.into(),
        inputs: Value::Null,
        results,
        assertions,
        curves,
        headline: (headline.0.into(), headline.1),
    }
}

fn coord_columns(dim: usize) -> Vec<String> {
    if dim == 1 {
        vec!["x".into()]
    } else {
        (0..dim).map(|i| format!("x{i}")).collect()
    }
}

fn mat_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn time_curve(name: &str, times: &[f64], values: &[f64]) -> Result<Curve> {
    let mut c = Curve::new(name, &["t", "value"]);
    for (t, v) in times.iter().zip(values) {
        c.push(vec![*t, *v])?;
    }
    Ok(c)
}

// ---------------------------------------------------------------- eigen

fn one_percent() -> f64 {
    1e-2
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EigenParams {
    /// Allowed `|rho_hat - rho|` when the exact value is known.
    #[serde(default = "one_percent")]
    tolerance: f64,
    /// Allowed L2 error of the ground state, checked only when set.
    #[serde(default)]
    h_tolerance: Option<f64>,
}

pub(super) fn eigen(cfg: &ExperimentConfig) -> Result<Report> {
    let p: EigenParams = cfg.params()?;
    let k = cfg.kernel()?;
    let grid = cfg.grid_for(Some(&k))?;
    let tau = cfg.tau()?;
    let t = model_eigentriple(&k, grid.clone(), tau)?;
    let exact = k.leading_eigenvalue();
    let h_err = k
        .ground_state(grid.point(0))
        .map(|_| ground_state_l2_error(&t.h, |x| k.ground_state(x).unwrap_or(f64::NAN)));
    let mut assertions = vec![Assertion::holds("converged", t.converged)];
    if let Some(e) = exact {
        assertions.push(Assertion::le("abs(rho_hat - rho)", (t.rho - e).abs(), p.tolerance));
    }
    if let (Some(tol), Some(err)) = (p.h_tolerance, h_err) {
        assertions.push(Assertion::le("h_l2_error", err, tol));
    }
    let mut cols = coord_columns(grid.dim());
    cols.extend(["h".to_string(), "eta_inf_density".to_string()]);
    let col_refs: Vec<&str> = cols.iter().map(|s| s.as_str()).collect();
    let mut curve = Curve::new("eigenfunctions", &col_refs);
    let dens = t.eta_inf.density();
    for i in 0..grid.len() {
        let mut row = grid.point(i).to_vec();
        row.push(t.h.values[i]);
        row.push(dens[i]);
        curve.push(row)?;
    }
    let results = json!({
        "model": k.name(),
        "rho": t.rho,
        "rho_right": t.rho_right,
        "rho_exact": exact,
        "h_l2_error": h_err,
        "converged": t.converged,
        "iterations": t.iterations,
        "residual": t.residual,
        "tv_residual": t.tv_residual,
    });
    Ok(report("eigen", results, assertions, vec![curve], ("rho", t.rho)))
}

// ---------------------------------------------------------------- contract / decay

/// Markov operator for contraction commands: the model itself when it is
/// Markov, its Doob h-transform otherwise (or when asked).
fn markov_operator(cfg: &ExperimentConfig, h_transform: Option<bool>) -> Result<(ClosedFormKernel, DiscreteOperator, bool)> {
    let k = cfg.kernel()?;
    let grid = cfg.grid_for(Some(&k))?;
    let tau = cfg.tau()?;
    let q = discretize(&k, grid.clone(), tau)?;
    let use_h = h_transform.unwrap_or(!k.is_markov());
    if !use_h {
        return Ok((k, q, false));
    }
    let t = model_eigentriple(&k, grid, tau)?;
    Ok((k, doob_h_transform(&q, &t.h, t.rho)?, true))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ContractParams {
    #[serde(default)]
    h_transform: Option<bool>,
    /// Random certified chains to test the contraction lemma on, besides the model.
    #[serde(default)]
    trials: usize,
}

pub(super) fn contract(cfg: &ExperimentConfig) -> Result<Report> {
    let p: ContractParams = cfg.params()?;
    let v = cfg.lyapunov()?;
    let (k, op, used_h) = markov_operator(cfg, p.h_transform)?;
    let vals = v.eval_on(op.grid())?;
    let (beta_v, witness) = v_dobrushin_values(&op, &vals);
    let foster = foster_lyapunov_values(&op, &vals);
    let mut assertions = vec![];
    let mut lemma = Value::Null;
    if let Some(cert) = &foster.certificate {
        let (a, b) = cert.rescaled_affine;
        let w: Vec<f64> = vals.iter().map(|x| a + b * x).collect();
        let (beta_w, _) = v_dobrushin_values(&op, &w);
        assertions.push(Assertion::le("beta_V_eps_r", beta_w, 1.0 - cert.alpha_eps_r + 1e-12));
        lemma = json!({"beta_v_eps_r": beta_w, "one_minus_alpha_eps_r": 1.0 - cert.alpha_eps_r});
    }
    let mut trials = vec![];
    if p.trials > 0 {
        let base = cfg.seed();
        for i in 0..p.trials {
            trials.push(random_lemma_trial(base.wrapping_add(i as u64))?);
        }
        let held = trials.iter().filter(|t| t.holds).count();
        assertions.push(Assertion::le("lemma_trial_failures", (trials.len() - held) as f64, 0.0));
    }
    let mut curve = Curve::new("theta", &["x", "theta"]);
    if op.grid().dim() == 1 {
        for (i, th) in foster.theta.iter().enumerate() {
            curve.push(vec![op.grid().x(i), *th])?;
        }
    }
    let worst_trial = trials
        .iter()
        .map(|t| t.beta - (1.0 - t.alpha_eps_r))
        .fold(f64::NEG_INFINITY, f64::max);
    let results = json!({
        "model": k.name(),
        "h_transform": used_h,
        "lyapunov": v.to_string(),
        "beta_v": beta_v,
        "witness_pair": [witness.0, witness.1],
        "certified": foster.certified,
        "reason": foster.reason,
        "certificate": foster.certificate.as_ref().map(|c| json!({
            "epsilon": c.epsilon, "c": c.c, "r": c.r, "alpha_r": c.alpha_r,
            "alpha_eps_r": c.alpha_eps_r, "rescaled_affine": [c.rescaled_affine.0, c.rescaled_affine.1],
        })),
        "lemma": lemma,
        "trials": trials.len(),
        "trial_max_excess": if trials.is_empty() { Value::Null } else { json!(worst_trial) },
    });
    let curves = if curve.rows.is_empty() { vec![] } else { vec![curve] };
    Ok(report("contract", results, assertions, curves, ("beta_v", beta_v)))
}

fn ten_percent() -> f64 {
    0.1
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DecayParams {
    #[serde(default)]
    h_transform: Option<bool>,
    /// Starting points of the two Dirac masses.
    x0: Vec<f64>,
    y0: Vec<f64>,
    /// Expected rate; defaults to the model's spectral gap.
    #[serde(default)]
    gap: Option<f64>,
    #[serde(default = "ten_percent")]
    rel_tolerance: f64,
}

pub(super) fn decay(cfg: &ExperimentConfig) -> Result<Report> {
    let p: DecayParams = cfg.params()?;
    let v = cfg.lyapunov()?;
    let (k, op, used_h) = markov_operator(cfg, p.h_transform)?;
    let steps = cfg.steps(20)?;
    let grid = op.grid_arc().clone();
    let nearest = |x: &[f64], key: &str| -> Result<usize> {
        if x.len() != grid.dim() {
            return Err(Error::Config {
                path: format!("params.{key}"),
                reason: format!("needs {} coordinates", grid.dim()),
            });
        }
        Ok((0..grid.len())
            .min_by(|&i, &j| {
                let d = |k: usize| grid.point(k).iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
                d(i).total_cmp(&d(j))
            })
            .unwrap_or(0))
    };
    let mu = MeasureVec::dirac(grid.clone(), nearest(&p.x0, "x0")?);
    let eta = MeasureVec::dirac(grid.clone(), nearest(&p.y0, "y0")?);
    let curve_data = geometric_decay_curve(&op, &v, &mu, &eta, steps)?;
    let gap = p.gap.or_else(|| match &k {
        ClosedFormKernel::GaussOu { a, .. } if a.len() == 1 => Some(-a[0][0]),
        _ => h_spectral_gap(&k).map(|g| -g),
    });
    let mut assertions = vec![];
    if let (Some(g), Some(rate)) = (gap, curve_data.rate) {
        assertions.push(Assertion::le("abs(rate - gap)/gap", ((rate - g) / g).abs(), p.rel_tolerance));
    } else if gap.is_some() {
        assertions.push(Assertion::holds("rate_fitted", false));
    }
    if let Some(h) = curve_data.envelope_holds {
        assertions.push(Assertion::holds("envelope", h));
    }
    let tau = op.time_step();
    let times: Vec<f64> = (0..curve_data.values.len()).map(|i| i as f64 * tau).collect();
    let curve = time_curve("decay", &times, &curve_data.values)?;
    let results = json!({
        "model": k.name(),
        "h_transform": used_h,
        "lyapunov": v.to_string(),
        "values": curve_data.values,
        "rate": curve_data.rate,
        "rate_per_step": curve_data.rate_per_step,
        "gap": gap,
        "envelope": curve_data.envelope.map(|(c, b)| json!({"c": c, "beta": b})),
        "envelope_holds": curve_data.envelope_holds,
    });
    Ok(report("decay", results, assertions, vec![curve], ("rate", curve_data.rate.unwrap_or(f64::NAN))))
}

// ---------------------------------------------------------------- rate

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainParams {
    n: Option<usize>,
    s: Option<f64>,
    kappa: Option<f64>,
    delta: Option<f64>,
    /// `[x_b, q]`, or `null` for no regeneration.
    #[serde(default)]
    regeneration: Option<Option<(usize, f64)>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DriftParams {
    delta: f64,
    upsilon: f64,
    kappa0: f64,
    kappa1: f64,
}

fn default_drift() -> DriftParams {
    DriftParams {
        delta: 0.5,
        upsilon: 0.5,
        kappa0: 0.25,
        kappa1: 1.0,
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RateParams {
    #[serde(default)]
    chain: Option<ChainParams>,
    #[serde(default = "default_drift")]
    drift: DriftParams,
    /// `V(x) = x^v_power` on the chain's states.
    #[serde(default = "three")]
    v_power: f64,
    /// Tail exponent of the initial law.
    #[serde(default = "four")]
    tail: f64,
    /// Number of chain steps; falls back to `time.steps`, then `time.t_max`.
    #[serde(default)]
    t_max: Option<usize>,
    #[serde(default = "window")]
    slope_window: (usize, usize),
    #[serde(default = "max_slope")]
    max_slope: f64,
}

fn three() -> f64 {
    3.0
}
fn four() -> f64 {
    4.0
}
fn window() -> (usize, usize) {
    (50, 500)
}
fn max_slope() -> f64 {
    -0.4
}

pub(super) fn rate(cfg: &ExperimentConfig) -> Result<Report> {
    let p: RateParams = cfg.params()?;
    let mut spec = PolyChainSpec::certified();
    if let Some(c) = &p.chain {
        spec.n = c.n.unwrap_or(spec.n);
        spec.s = c.s.unwrap_or(spec.s);
        spec.kappa = c.kappa.unwrap_or(spec.kappa);
        spec.delta = c.delta.unwrap_or(spec.delta);
        if let Some(r) = c.regeneration {
            spec.regeneration = r;
        }
    }
    let chain = polynomial_chain(&spec)?;
    let d = &p.drift;
    let drift = prototype_drift(d.delta, d.upsilon, d.kappa0, d.kappa1)?;
    let v: Vec<f64> = chain.grid().xs().iter().map(|x| x.powf(p.v_power)).collect();
    let mu = power_tail_measure(&chain, p.tail)?;
    let t_max = match p.t_max {
        Some(t) => t,
        None => cfg.steps(500)?,
    };
    let r = polynomial_rate_check_values(&chain, &v, &drift, None, &mu, t_max)?;
    let slope = loglog_slope(&r.tv, p.slope_window.0, p.slope_window.1)?;
    let mut assertions = vec![Assertion::le("tv_loglog_slope", slope, p.max_slope)];
    if let Some(h) = r.envelope_holds {
        assertions.push(Assertion::holds("envelope", h));
    }
    let times: Vec<f64> = (0..r.tv.len()).map(|t| t as f64).collect();
    let mut curves = vec![time_curve("tv", &times, &r.tv)?, time_curve("norms", &times, &r.norms)?];
    if let Some(env) = &r.envelope {
        curves.push(time_curve("envelope", &times[1..], &env[1..])?);
    }
    let results = json!({
        "chain": to_json(&spec),
        "drift": to_json(&drift),
        "chi": drift.chi,
        "certified": r.certified,
        "reason": r.reason,
        "c": r.c,
        "c1": r.c1,
        "r": r.r,
        "rho": r.rho,
        "omega": r.omega,
        "c_rho_chi": r.c_rho_chi,
        "tv_loglog_slope": slope,
        "envelope_holds": r.envelope_holds,
    });
    Ok(report("rate", results, assertions, curves, ("tv_loglog_slope", slope)))
}

// ---------------------------------------------------------------- riccati

fn dt_default() -> f64 {
    1e-3
}
fn tight() -> f64 {
    1e-8
}
fn coupled_tol() -> f64 {
    1e-6
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum RiccatiParams {
    Scalar {
        a0: f64,
        a1: f64,
        b: f64,
        #[serde(default)]
        z0: f64,
        t: f64,
        #[serde(default = "dt_default")]
        dt: f64,
        #[serde(default = "tight")]
        tolerance: f64,
    },
    Matrix {
        a: Vec<Vec<f64>>,
        r: Vec<Vec<f64>>,
        s: Vec<Vec<f64>>,
        #[serde(default)]
        p0: Option<Vec<Vec<f64>>>,
        t: f64,
        #[serde(default = "dt_default")]
        dt: f64,
        /// Reference `p_t`; `"tanh"` means `tanh(t)` (scalar case `A = 0`, `R = S = 1`).
        #[serde(default)]
        expect: Option<Value>,
        #[serde(default = "tight")]
        tolerance: f64,
    },
    Coupled {
        a: Vec<Vec<f64>>,
        sigma: Vec<Vec<f64>>,
        s: Vec<Vec<f64>>,
        x: Vec<f64>,
        t: f64,
        #[serde(default = "coupled_tol")]
        tolerance: f64,
        /// Expected `rho`, e.g. `-0.5` for the harmonic reduction.
        #[serde(default)]
        expect_rho: Option<f64>,
    },
    BirthDeath {
        spec: BirthDeathSpec,
        x0: Vec<i64>,
        t_max: f64,
        n_paths: usize,
    },
}

pub(super) fn riccati(cfg: &ExperimentConfig) -> Result<Report> {
    let p: RiccatiParams = cfg.params()?;
    match p {
        RiccatiParams::Scalar {
            a0,
            a1,
            b,
            z0,
            t,
            dt,
            tolerance,
        } => {
            let spec = ScalarRiccati::new(a0, a1, b)?;
            let n = 50usize;
            let mut times = vec![];
            let mut zs = vec![];
            for i in 0..=n {
                let ti = t * i as f64 / n as f64;
                times.push(ti);
                zs.push(if i == 0 { z0 } else { scalar_riccati_with_error(&spec, z0, ti, dt)?.0 });
            }
            let (z_t, err) = scalar_riccati_with_error(&spec, z0, t, dt)?;
            let z_inf = spec.fixed_point();
            let results = json!({"z_t": z_t, "richardson_error": err, "z_inf": z_inf, "t": t});
            Ok(report(
                "riccati",
                results,
                vec![Assertion::le("abs(z_t - z_inf)", (z_t - z_inf).abs(), tolerance)],
                vec![time_curve("z", &times, &zs)?],
                ("z_t", z_t),
            ))
        }
        RiccatiParams::Matrix {
            a,
            r,
            s,
            p0,
            t,
            dt,
            expect,
            tolerance,
        } => {
            let spec = MatrixRiccati::from_rows(&a, &r, &s, p0.as_deref())?;
            let p_t = matrix_riccati_dt(&spec, t, dt)?;
            let p_inf = algebraic_riccati(&spec.a, &spec.r, &spec.s).ok();
            let n = 50usize;
            let mut times = vec![0.0];
            let mut tr = vec![spec.p0.trace()];
            for i in 1..=n {
                let ti = t * i as f64 / n as f64;
                times.push(ti);
                tr.push(matrix_riccati_dt(&spec, ti, dt)?.trace());
            }
            let mut assertions = vec![];
            if let Some(e) = expect {
                let reference = match &e {
                    Value::String(s) if s == "tanh" => DMatrix::from_element(1, 1, t.tanh()),
                    other => to_matrix(&from_value::<Vec<Vec<f64>>>(other, "params.expect")?, "expect")?,
                };
                if reference.shape() != p_t.shape() {
                    return Err(Error::Config {
                        path: "params.expect".into(),
                        reason: format!("shape {:?} does not match p_t {:?}", reference.shape(), p_t.shape()),
                    });
                }
                assertions.push(Assertion::le("max_abs(p_t - expect)", (&p_t - reference).amax(), tolerance));
            }
            let results = json!({
                "p_t": mat_rows(&p_t),
                "p_inf": p_inf.as_ref().map(mat_rows),
                "residual_p_t": spec.residual(&p_t),
                "t": t,
            });
            Ok(report("riccati", results, assertions, vec![time_curve("trace", &times, &tr)?], ("trace_p_t", p_t.trace())))
        }
        RiccatiParams::Coupled {
            a,
            sigma,
            s,
            x,
            t,
            tolerance,
            expect_rho,
        } => {
            let (a, sigma, s) = (to_matrix(&a, "A")?, to_matrix(&sigma, "Sigma")?, to_matrix(&s, "S")?);
            let c = coupled_oscillator_semigroup(&a, &sigma, &s, &x, t)?;
            let mut assertions = vec![Assertion::le("abs(rho_hat - rho)", (c.rho_hat - c.rho).abs(), tolerance)];
            if let Some(e) = expect_rho {
                assertions.push(Assertion::le("abs(rho - expect_rho)", (c.rho - e).abs(), tolerance));
            }
            let results = json!({
                "rho_hat": c.rho_hat,
                "rho": c.rho,
                "log_q1": c.log_q1,
                "m_t": c.m_t.iter().copied().collect::<Vec<f64>>(),
                "p_t": mat_rows(&c.p_t),
                "p_inf": mat_rows(&c.p_inf),
            });
            Ok(report("riccati", results, assertions, vec![], ("rho_hat", c.rho_hat)))
        }
        RiccatiParams::BirthDeath {
            spec,
            x0,
            t_max,
            n_paths,
        } => {
            let r = bd_moment_bound(&spec, &x0, t_max, n_paths, cfg.seed())?;
            let mut c = Curve::new("moments", &["t", "value", "stderr", "majorant"]);
            for i in 0..r.times.len() {
                c.push(vec![r.times[i], r.mean[i], r.stderr[i], r.majorant[i]])?;
            }
            let last = r.mean.last().copied().unwrap_or(f64::NAN);
            let assertions = vec![Assertion::holds("mean_below_majorant", r.holds)];
            Ok(report("riccati", to_json(&r), assertions, vec![c], ("mean_v_t_max", last)))
        }
    }
}

// ---------------------------------------------------------------- geometry

fn surface_from(v: &Value, path: &str) -> Result<MongeSurface> {
    match v {
        Value::String(name) => MongeSurface::fixture(name),
        other => from_value::<SurfaceSpec>(other, path)?.build(),
    }
}

fn hundred() -> usize {
    100
}
fn weingarten_tol() -> f64 {
    1e-5
}
fn coarea_tol() -> f64 {
    1e-3
}
fn n_r_default() -> usize {
    48
}

#[derive(Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
enum GeometryParams {
    /// Frame, fundamental forms and shape matrix at a chart point.
    Frame { surface: Value, theta: Vec<f64> },
    /// Shape matrix and principal curvatures.
    Shape { surface: Value, theta: Vec<f64> },
    /// Weingarten residuals at random chart points.
    Weingarten {
        surface: Value,
        #[serde(default = "hundred")]
        points: usize,
        #[serde(default = "weingarten_tol")]
        tolerance: f64,
    },
    /// Offset Jacobian and its log-derivative against `-Tr W`.
    Offset {
        surface: Value,
        theta: Vec<f64>,
        u: f64,
        #[serde(default = "coupled_tol")]
        tolerance: f64,
    },
    Distance {
        surface: Value,
        x: Vec<f64>,
        #[serde(default)]
        alpha: Option<f64>,
    },
    /// Two-way evaluation of the tube integral of `r^{-power}`.
    Coarea {
        surface: Value,
        alpha: f64,
        #[serde(default)]
        power: f64,
        #[serde(default = "n_r_default")]
        n_r: usize,
        #[serde(default = "coarea_tol")]
        tolerance: f64,
    },
    LevelSet {
        surface: Value,
        kernel: SubGaussianKernel,
        x: Vec<f64>,
        r: f64,
        alpha: f64,
    },
    /// Boundary Lyapunov function `chi(d(x))` on an interval or a surface domain.
    Boundary {
        epsilon_exp: f64,
        alpha: f64,
        #[serde(default)]
        interval: Option<(f64, f64)>,
        #[serde(default)]
        surface: Option<Value>,
        points: Vec<Vec<f64>>,
    },
    DirichletBoundary {
        epsilon_exp: f64,
        alpha: f64,
        t: f64,
        #[serde(default = "hundred")]
        n_grid: usize,
    },
    /// Principal curvatures from every chart of an atlas at shared points.
    CrossChart {
        atlas: String,
        points: Vec<Vec<f64>>,
        #[serde(default = "tight")]
        tolerance: f64,
    },
}

/// Uniform random points in the interior of a chart (5% margin), drawn from `seed`.
pub(crate) fn random_chart_points(s: &MongeSurface, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = stream_rng(seed, 0);
    (0..n)
        .map(|_| {
            s.chart()
                .iter()
                .map(|&(a, b)| {
                    let m = 0.05 * (b - a);
                    rng.random_range(a + m..b - m)
                })
                .collect()
        })
        .collect()
}

/// `d/du log |det(I - u W)|` at `u`, by central differences.
pub(crate) fn offset_log_derivative(s: &MongeSurface, theta: &[f64], u: f64) -> Result<f64> {
    let h = 1e-5;
    Ok((offset_jacobian(s, theta, u + h)?.ln() - offset_jacobian(s, theta, u - h)?.ln()) / (2.0 * h))
}

pub(super) fn geometry(cfg: &ExperimentConfig) -> Result<Report> {
    let p: GeometryParams = cfg.params()?;
    match p {
        GeometryParams::Frame { surface, theta } | GeometryParams::Shape { surface, theta } => {
            let s = surface_from(&surface, "params.surface")?;
            let f = s.frame(&theta)?;
            let k = f.principal_curvatures();
            let results = json!({
                "surface": s.name,
                "theta": theta,
                "point": f.point.iter().copied().collect::<Vec<f64>>(),
                "normal": f.normal.iter().copied().collect::<Vec<f64>>(),
                "g": mat_rows(&f.g),
                "omega": mat_rows(&f.omega),
                "w": mat_rows(&f.w),
                "principal_curvatures": k,
                "det_g": f.det_g(),
            });
            Ok(report("geometry", results, vec![], vec![], ("w_00", f.w[(0, 0)])))
        }
        GeometryParams::Weingarten {
            surface,
            points,
            tolerance,
        } => {
            let s = surface_from(&surface, "params.surface")?;
            let pts = random_chart_points(&s, points, cfg.seed());
            let res: Vec<f64> = pts.iter().map(|th| s.weingarten_residual(th, 1e-4)).collect::<Result<_>>()?;
            let worst = res.iter().cloned().fold(0.0, f64::max);
            let results = json!({"surface": s.name, "points": pts.len(), "max_residual": worst});
            Ok(report(
                "geometry",
                results,
                vec![Assertion::le("max_weingarten_residual", worst, tolerance)],
                vec![],
                ("max_residual", worst),
            ))
        }
        GeometryParams::Offset {
            surface,
            theta,
            u,
            tolerance,
        } => {
            let s = surface_from(&surface, "params.surface")?;
            let f = s.frame(&theta)?;
            let jac = offset_jacobian(&s, &theta, u)?;
            let dlog = offset_log_derivative(&s, &theta, 0.0)?;
            let tr = f.w.trace();
            let results = json!({"surface": s.name, "theta": theta, "u": u, "jacobian": jac, "dlog_at_0": dlog, "trace_w": tr});
            Ok(report(
                "geometry",
                results,
                vec![Assertion::le("abs(dlog + tr W)", (dlog + tr).abs(), tolerance)],
                vec![],
                ("jacobian", jac),
            ))
        }
        GeometryParams::Distance { surface, x, alpha } => {
            let s = surface_from(&surface, "params.surface")?;
            let d = signed_distance(&s, &x, alpha.unwrap_or(f64::INFINITY))?;
            Ok(report("geometry", to_json(&d), vec![], vec![], ("d", d.d)))
        }
        GeometryParams::Coarea {
            surface,
            alpha,
            power,
            n_r,
            tolerance,
        } => {
            let s = surface_from(&surface, "params.surface")?;
            if !(0.0..1.0).contains(&power) {
                return Err(Error::Config {
                    path: "params.power".into(),
                    reason: format!("must lie in [0, 1), got {power}"),
                });
            }
            let r = coarea_check(&s, move |d| d.powf(-power), alpha, n_r)?;
            Ok(report(
                "geometry",
                to_json(&r),
                vec![Assertion::le("coarea_rel_diff", r.rel_diff, tolerance)],
                vec![],
                ("rel_diff", r.rel_diff),
            ))
        }
        GeometryParams::LevelSet {
            surface,
            kernel,
            x,
            r,
            alpha,
        } => {
            let s = surface_from(&surface, "params.surface")?;
            let l = level_set_density(&kernel, &s, &x, r, alpha)?;
            Ok(report(
                "geometry",
                to_json(&l),
                vec![Assertion::le("density <= bound", l.density, l.bound)],
                vec![],
                ("density", l.density),
            ))
        }
        GeometryParams::Boundary {
            epsilon_exp,
            alpha,
            interval,
            surface,
            points,
        } => {
            let profile = BoundaryProfile::new(epsilon_exp, alpha)?;
            let domain = match (interval, surface) {
                (Some((lo, hi)), None) => BoundaryDomain::Interval { lo, hi },
                (None, Some(sv)) => BoundaryDomain::Surface(surface_from(&sv, "params.surface")?),
                _ => {
                    return Err(Error::Config {
                        path: "params".into(),
                        reason: "give exactly one of `interval` or `surface`".into(),
                    })
                }
            };
            let vals: Vec<f64> = points.iter().map(|x| boundary_lyapunov(&profile, &domain, x)).collect::<Result<_>>()?;
            let first = vals.first().copied().unwrap_or(f64::NAN);
            Ok(report("geometry", json!({"points": points, "v": vals}), vec![], vec![], ("v_0", first)))
        }
        GeometryParams::DirichletBoundary {
            epsilon_exp,
            alpha,
            t,
            n_grid,
        } => {
            let profile = BoundaryProfile::new(epsilon_exp, alpha)?;
            let r = dirichlet_boundary_check(&profile, t, n_grid)?;
            let mut c = Curve::new("q_v", &["x", "q_v", "v"]);
            for i in 0..r.xs.len() {
                c.push(vec![r.xs[i], r.qv[i], r.v[i]])?;
            }
            Ok(report(
                "geometry",
                to_json(&r),
                vec![Assertion::le("c_t <= a priori bound", r.c_t, r.c_t_bound)],
                vec![c],
                ("c_t", r.c_t),
            ))
        }
        GeometryParams::CrossChart {
            atlas,
            points,
            tolerance,
        } => {
            let at = Atlas::fixture(&atlas)?;
            let reports: Vec<_> = points.iter().map(|x| at.curvature_agreement(x)).collect::<Result<_>>()?;
            let worst = reports.iter().map(|r| r.spread).fold(0.0, f64::max);
            Ok(report(
                "geometry",
                json!({"atlas": atlas, "points": to_json(&reports), "max_spread": worst}),
                vec![Assertion::le("max_curvature_spread", worst, tolerance)],
                vec![],
                ("max_spread", worst),
            ))
        }
    }
}

// ---------------------------------------------------------------- simulate

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CustomModel {
    sde: SdeModel,
    #[serde(default)]
    absorb: Option<AbsorptionSpec>,
}

fn n_default() -> usize {
    100_000
}
fn max_z() -> f64 {
    3.0
}
fn every_default() -> usize {
    50
}
fn half() -> f64 {
    0.5
}

#[derive(Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
enum SimulateParams {
    /// Feynman-Kac estimates `Q_t(1)(x0)` and `Q_t(f)(x0)` at checkpoint times.
    Fk {
        model: Value,
        x0: Vec<f64>,
        times: Vec<f64>,
        #[serde(default = "n_default")]
        n_particles: usize,
        #[serde(default = "dt_default")]
        dt: f64,
        #[serde(default)]
        observables: Vec<Observable>,
        /// Exact `Q_t(1)(x0)` at the last time, tested at `max_z` standard errors.
        #[serde(default)]
        oracle: Option<f64>,
        #[serde(default = "max_z")]
        max_z: f64,
    },
    /// Resampling particle estimate of the quasi-stationary law and `rho`.
    Qsd {
        model: Value,
        eta0: InitialLaw,
        t: f64,
        #[serde(default = "n_default")]
        n_particles: usize,
        #[serde(default = "dt_default")]
        dt: f64,
        #[serde(default = "every_default")]
        resample_every: usize,
        #[serde(default = "half")]
        burn_in: f64,
        /// Independent sub-populations for error bars; one population when unset.
        #[serde(default)]
        replicas: Option<usize>,
        #[serde(default)]
        oracle_rho: Option<f64>,
        #[serde(default)]
        band: Option<f64>,
    },
}

fn sim_model(v: &Value) -> Result<(SdeModel, AbsorptionSpec)> {
    match v {
        Value::String(name) => named_model(name),
        other => {
            let c: CustomModel = from_value(other, "params.model")?;
            Ok((c.sde, c.absorb.unwrap_or_default()))
        }
    }
}

pub(super) fn simulate(cfg: &ExperimentConfig) -> Result<Report> {
    let p: SimulateParams = cfg.params()?;
    let seed = cfg.seed();
    match p {
        SimulateParams::Fk {
            model,
            x0,
            times,
            n_particles,
            dt,
            observables,
            oracle,
            max_z,
        } => {
            let (m, a) = sim_model(&model)?;
            let est = feynman_kac_curve(&m, &a, &x0, &times, n_particles, dt, seed, &observables)?;
            let mut c = Curve::new("mass", &["t", "value", "stderr"]);
            for e in &est {
                c.push(vec![e.t, e.q1, e.q1_stderr])?;
            }
            let mut curves = vec![c];
            for k in 0..observables.len() {
                let mut c = Curve::new(&format!("observable_{k}"), &["t", "value", "stderr"]);
                for e in &est {
                    c.push(vec![e.t, e.qf[k], e.qf_stderr[k]])?;
                }
                curves.push(c);
            }
            let last = est.last().ok_or_else(|| Error::Config {
                path: "params.times".into(),
                reason: "needs at least one time".into(),
            })?;
            let mut assertions = vec![];
            let mut z = Value::Null;
            if let Some(o) = oracle {
                let zz = (last.q1 - o) / last.q1_stderr;
                z = json!(zz);
                assertions.push(Assertion::le("abs(q1 - oracle)/stderr", zz.abs(), max_z));
            }
            let results = json!({"estimates": to_json(&est), "oracle": oracle, "z": z});
            Ok(report("simulate", results, assertions, curves, ("q1", last.q1)))
        }
        SimulateParams::Qsd {
            model,
            eta0,
            t,
            n_particles,
            dt,
            resample_every,
            burn_in,
            replicas,
            oracle_rho,
            band,
        } => {
            let (m, a) = sim_model(&model)?;
            let (rho, results) = match replicas {
                Some(r) => {
                    let q = qsd_replicas(&m, &a, &eta0, t, n_particles, resample_every, dt, burn_in, seed, r)?;
                    (q.rho, to_json(&q))
                }
                None => {
                    let q = qsd_particle_estimate(&m, &a, &eta0, t, n_particles, resample_every, dt, burn_in, seed)?;
                    let res = json!({
                        "rho_hat": q.rho_hat,
                        "rho_stderr": q.rho_stderr,
                        "mean": q.mean,
                        "variance": q.variance,
                        "time_avg_variance": q.time_avg_variance,
                        "periods": q.periods,
                        "burn_in": q.burn_in,
                    });
                    (q.rho_hat, res)
                }
            };
            let mut assertions = vec![];
            if let Some(o) = oracle_rho {
                let b = band.ok_or_else(|| Error::Config {
                    path: "params.band".into(),
                    reason: "required with `oracle_rho`".into(),
                })?;
                assertions.push(Assertion::le("abs(rho_hat - oracle_rho)", (rho - o).abs(), b));
            }
            Ok(report("simulate", results, assertions, vec![], ("rho_hat", rho)))
        }
    }
}

// ---------------------------------------------------------------- validate

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ValidateParams {
    /// Case names, or `["all"]`.
    #[serde(default = "all_cases")]
    cases: Vec<String>,
    #[serde(default = "n_default")]
    n_particles: usize,
    #[serde(default = "dt_default")]
    dt: f64,
}

fn all_cases() -> Vec<String> {
    vec!["all".into()]
}

pub(super) fn validate(cfg: &ExperimentConfig) -> Result<Report> {
    let p: ValidateParams = cfg.params()?;
    let cases: Vec<String> = if p.cases.iter().any(|c| c == "all") {
        MC_CASES.iter().map(|c| c.to_string()).collect()
    } else {
        p.cases.clone()
    };
    let budget = McBudget {
        n_particles: p.n_particles,
        dt: p.dt,
        seed: cfg.seed(),
    };
    let names: Vec<&str> = cases.iter().map(String::as_str).collect();
    let reports = mc_validate_batch(&names, &budget)?;
    let assertions = reports
        .iter()
        .map(|r| match r.band {
            Some(b) => Assertion::le(&format!("{}: abs(estimate - oracle)", r.case), (r.estimate - r.oracle).abs(), b),
            None => Assertion::le(&format!("{}: abs(z)", r.case), r.z.abs(), 3.0),
        })
        .collect();
    let worst = reports.iter().map(|r| r.z.abs()).fold(0.0, f64::max);
    Ok(report("validate", json!({"cases": to_json(&reports)}), assertions, vec![], ("max_abs_z", worst)))
}
