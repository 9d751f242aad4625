//! Feynman-Kac Monte Carlo for diffusions with soft (potential) and hard
//! (domain exit) killing, and a resampling particle estimate of the
//! quasi-stationary law and the leading eigenvalue.
//!
//! Particles are split into [`PARTITIONS`] contiguous blocks, each driven by its
//! own substream of the seed. Reductions run in block order, so results depend
//! only on the seed and the particle count, never on the thread pool.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{bad, Error, Result};
use crate::kernels::{dirichlet_survival, harmonic_mass};
use crate::numerics::stream_rng;

pub const PARTITIONS: usize = 64;
/// Substream reserved for resampling draws.
const RESAMPLE_STREAM: u64 = 1 << 32;
/// Substreams deriving replica seeds.
const REPLICA_STREAM: u64 = 1 << 40;

type VecField = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
type ScalarField = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type Indicator = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

/// Drift `b` of `dX = b(X) dt + sigma dB`.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Drift {
    Zero,
    /// `b(x) = A x`, rows of `A`.
    Linear { a: Vec<Vec<f64>> },
    #[serde(skip)]
    Custom(VecField),
}

/// Constant diffusion coefficient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Diffusion {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

/// Soft killing rate `U >= 0`.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Potential {
    Zero,
    /// `U(x) = c |x|^2`.
    Quadratic { c: f64 },
    Constant { c: f64 },
    #[serde(skip)]
    Custom(ScalarField),
}

/// Hard obstacle: particles are killed on leaving the domain.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HardDomain {
    Whole,
    /// Open box; infinite bounds allowed (null in JSON).
    Box { lo: Vec<Option<f64>>, hi: Vec<Option<f64>> },
    #[serde(skip)]
    Custom(Indicator),
}

impl fmt::Debug for Drift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Drift::Zero => f.write_str("Zero"),
            Drift::Linear { a } => f.debug_struct("Linear").field("a", a).finish(),
            Drift::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Potential::Zero => f.write_str("Zero"),
            Potential::Quadratic { c } => write!(f, "Quadratic {{ c: {c} }}"),
            Potential::Constant { c } => write!(f, "Constant {{ c: {c} }}"),
            Potential::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl fmt::Debug for HardDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HardDomain::Whole => f.write_str("Whole"),
            HardDomain::Box { lo, hi } => f.debug_struct("Box").field("lo", lo).field("hi", hi).finish(),
            HardDomain::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdeModel {
    pub dim: usize,
    pub drift: Drift,
    pub diffusion: Diffusion,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbsorptionSpec {
    #[serde(default = "zero_potential")]
    pub potential: Potential,
    #[serde(default = "whole")]
    pub domain: HardDomain,
    /// Kill with the Brownian-bridge crossing probability between grid times
    /// (box domains only).
    #[serde(default = "yes")]
    pub bridge: bool,
}

fn zero_potential() -> Potential {
    Potential::Zero
}

fn whole() -> HardDomain {
    HardDomain::Whole
}

fn yes() -> bool {
    true
}

impl Default for AbsorptionSpec {
    fn default() -> Self {
        Self {
            potential: Potential::Zero,
            domain: HardDomain::Whole,
            bridge: true,
        }
    }
}

impl SdeModel {
    pub fn brownian(dim: usize, sigma: f64) -> Self {
        Self {
            dim,
            drift: Drift::Zero,
            diffusion: Diffusion::Scalar(sigma),
        }
    }

    /// `dX = -theta X dt + sigma dB` in one dimension.
    pub fn ou(theta: f64, sigma: f64) -> Self {
        Self {
            dim: 1,
            drift: Drift::Linear { a: vec![vec![-theta]] },
            diffusion: Diffusion::Scalar(sigma),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(bad("dim", "must be positive"));
        }
        if let Drift::Linear { a } = &self.drift {
            if a.len() != self.dim || a.iter().any(|r| r.len() != self.dim || r.iter().any(|v| !v.is_finite())) {
                return Err(bad("drift.a", format!("need a finite {0}x{0} matrix", self.dim)));
            }
        }
        match &self.diffusion {
            Diffusion::Scalar(s) if !s.is_finite() || *s < 0.0 => {
                return Err(bad("diffusion", format!("scalar must be finite and >= 0, got {s}")))
            }
            Diffusion::Matrix(m) if m.len() != self.dim || m.iter().any(|r| r.len() != self.dim) => {
                return Err(bad("diffusion", format!("matrix must be {0}x{0}", self.dim)))
            }
            _ => {}
        }
        Ok(())
    }

    fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.drift {
            Drift::Zero => out.iter_mut().for_each(|v| *v = 0.0),
            Drift::Linear { a } => {
                for (o, row) in out.iter_mut().zip(a) {
                    *o = row.iter().zip(x).map(|(p, q)| p * q).sum();
                }
            }
            Drift::Custom(f) => f(x, out),
        }
    }

    /// Variance rate `(sigma sigma')_ii` of coordinate `i`.
    fn coord_var(&self, i: usize) -> f64 {
        match &self.diffusion {
            Diffusion::Scalar(s) => s * s,
            Diffusion::Matrix(m) => m[i].iter().map(|v| v * v).sum(),
        }
    }
}

impl Potential {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Potential::Zero => 0.0,
            Potential::Quadratic { c } => c * x.iter().map(|v| v * v).sum::<f64>(),
            Potential::Constant { c } => *c,
            Potential::Custom(f) => f(x),
        }
    }

    fn is_zero(&self) -> bool {
        matches!(self, Potential::Zero)
    }
}

impl HardDomain {
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            HardDomain::Whole => true,
            HardDomain::Box { lo, hi } => x.iter().zip(lo).zip(hi).all(|((v, l), h)| {
                l.is_none_or(|l| *v > l) && h.is_none_or(|h| *v < h)
            }),
            HardDomain::Custom(f) => f(x),
        }
    }

    /// Unit interval `(0, 1)`.
    pub fn unit_interval() -> Self {
        HardDomain::Box {
            lo: vec![Some(0.0)],
            hi: vec![Some(1.0)],
        }
    }

    /// Half line `(0, inf)`.
    pub fn half_line() -> Self {
        HardDomain::Box {
            lo: vec![Some(0.0)],
            hi: vec![None],
        }
    }
}

impl AbsorptionSpec {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if let Potential::Quadratic { c } | Potential::Constant { c } = &self.potential {
            if !(*c >= 0.0) || !c.is_finite() {
                return Err(bad("potential", format!("coefficient must be finite and >= 0, got {c}")));
            }
        }
        if let HardDomain::Box { lo, hi } = &self.domain {
            if lo.len() != dim || hi.len() != dim {
                return Err(bad("domain", format!("box needs {dim} lower and upper bounds")));
            }
            for (l, h) in lo.iter().zip(hi) {
                if let (Some(l), Some(h)) = (l, h) {
                    if !(l < h) {
                        return Err(bad("domain", format!("empty box side ({l}, {h})")));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Particles with log-weights; dead particles carry `-inf`.
#[derive(Clone, Debug)]
pub struct ParticleEnsemble {
    pub dim: usize,
    pub positions: Vec<f64>,
    pub log_weights: Vec<f64>,
    pub alive: Vec<bool>,
    /// Particles killed because a step produced a non-finite position.
    pub nonfinite: usize,
    rngs: Vec<ChaCha8Rng>,
    chunk: usize,
}

impl ParticleEnsemble {
    /// `n` particles with unit weight, started by `init` from the partition substreams.
    pub fn new(dim: usize, n: usize, seed: u64, mut init: impl FnMut(&mut ChaCha8Rng, &mut [f64])) -> Result<Self> {
        if n == 0 || dim == 0 {
            return Err(bad("n_particles", "need at least one particle in dimension >= 1"));
        }
        let chunk = n.div_ceil(PARTITIONS);
        let blocks = n.div_ceil(chunk);
        let mut rngs: Vec<ChaCha8Rng> = (0..blocks as u64).map(|p| stream_rng(seed, p)).collect();
        let mut positions = vec![0.0; n * dim];
        for (i, x) in positions.chunks_mut(dim).enumerate() {
            init(&mut rngs[i / chunk], x);
        }
        Ok(Self {
            dim,
            positions,
            log_weights: vec![0.0; n],
            alive: vec![true; n],
            nonfinite: 0,
            rngs,
            chunk,
        })
    }

    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    pub fn alive_count(&self) -> usize {
        self.alive.iter().filter(|a| **a).count()
    }

    /// Advances every particle `steps` Euler-Maruyama steps, in parallel over partitions.
    pub fn advance(&mut self, model: &SdeModel, absorb: &AbsorptionSpec, dt: f64, steps: usize) {
        let dim = self.dim;
        let c = self.chunk;
        let bad: usize = self
            .positions
            .par_chunks_mut(c * dim)
            .zip(self.log_weights.par_chunks_mut(c))
            .zip(self.alive.par_chunks_mut(c))
            .zip(self.rngs.par_iter_mut())
            .map(|(((xs, lw), al), rng)| {
                let mut scratch = Stepper::new(dim);
                let mut bad = 0;
                for (k, x) in xs.chunks_mut(dim).enumerate() {
                    for _ in 0..steps {
                        if !al[k] {
                            break;
                        }
                        if scratch.step(model, absorb, x, &mut lw[k], &mut al[k], dt, rng) {
                            bad += 1;
                        }
                    }
                }
                bad
            })
            .collect::<Vec<_>>()
            .iter()
            .sum();
        self.nonfinite += bad;
    }

    /// Weights `exp(log_weight)` (0 for dead particles).
    pub fn weights(&self) -> Vec<f64> {
        self.log_weights
            .iter()
            .zip(&self.alive)
            .map(|(l, a)| if *a { l.exp() } else { 0.0 })
            .collect()
    }
}

struct Stepper {
    b: Vec<f64>,
    xi: Vec<f64>,
    old: Vec<f64>,
}

impl Stepper {
    fn new(dim: usize) -> Self {
        Self {
            b: vec![0.0; dim],
            xi: vec![0.0; dim],
            old: vec![0.0; dim],
        }
    }

    /// One step for one particle; returns true when it died of a non-finite value.
    #[allow(clippy::too_many_arguments)]
    fn step(
        &mut self,
        model: &SdeModel,
        absorb: &AbsorptionSpec,
        x: &mut [f64],
        lw: &mut f64,
        alive: &mut bool,
        dt: f64,
        rng: &mut ChaCha8Rng,
    ) -> bool {
        let u_old = if absorb.potential.is_zero() { 0.0 } else { absorb.potential.eval(x) };
        self.old.copy_from_slice(x);
        model.drift_into(x, &mut self.b);
        for v in self.xi.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let sq = dt.sqrt();
        match &model.diffusion {
            Diffusion::Scalar(s) => {
                for i in 0..x.len() {
                    x[i] += self.b[i] * dt + s * sq * self.xi[i];
                }
            }
            Diffusion::Matrix(m) => {
                for i in 0..x.len() {
                    let noise: f64 = m[i].iter().zip(&self.xi).map(|(p, q)| p * q).sum();
                    x[i] += self.b[i] * dt + sq * noise;
                }
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            *alive = false;
            *lw = f64::NEG_INFINITY;
            return true;
        }
        if !absorb.domain.contains(x) {
            *alive = false;
            *lw = f64::NEG_INFINITY;
            return false;
        }
        if absorb.bridge {
            if let HardDomain::Box { lo, hi } = &absorb.domain {
                for i in 0..x.len() {
                    let v = model.coord_var(i) * dt;
                    if v <= 0.0 {
                        continue;
                    }
                    let mut p = 0.0;
                    if let Some(l) = lo[i] {
                        p += (-2.0 * (self.old[i] - l) * (x[i] - l) / v).exp();
                    }
                    if let Some(h) = hi[i] {
                        p += (-2.0 * (h - self.old[i]) * (h - x[i]) / v).exp();
                    }
                    if p >= 1.0 {
                        *alive = false;
                        *lw = f64::NEG_INFINITY;
                        return false;
                    }
                    *lw += (-p).ln_1p();
                }
            }
        }
        if !absorb.potential.is_zero() {
            *lw -= 0.5 * dt * (u_old + absorb.potential.eval(x));
        }
        false
    }
}

/// Test function for Feynman-Kac estimates.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Observable {
    One,
    Coord { i: usize },
    Square { i: usize },
    NormSq,
    #[serde(skip)]
    Custom(ScalarField),
}

impl fmt::Debug for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Observable::One => f.write_str("One"),
            Observable::Coord { i } => write!(f, "Coord({i})"),
            Observable::Square { i } => write!(f, "Square({i})"),
            Observable::NormSq => f.write_str("NormSq"),
            Observable::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl Observable {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Observable::One => 1.0,
            Observable::Coord { i } => x[*i],
            Observable::Square { i } => x[*i] * x[*i],
            Observable::NormSq => x.iter().map(|v| v * v).sum(),
            Observable::Custom(f) => f(x),
        }
    }
}

/// `Q_t(1)(x0)` and `Q_t(f)(x0)` estimates with standard errors.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FkEstimate {
    pub t: f64,
    pub q1: f64,
    pub q1_stderr: f64,
    pub qf: Vec<f64>,
    pub qf_stderr: Vec<f64>,
    pub alive: usize,
    pub nonfinite: usize,
    /// Every particle was killed; all estimates are 0.
    pub extinct: bool,
}

fn mean_stderr(vals: &[f64]) -> (f64, f64) {
    let n = vals.len() as f64;
    let m = vals.iter().sum::<f64>() / n;
    if vals.len() < 2 {
        return (m, 0.0);
    }
    let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn snapshot(ens: &ParticleEnsemble, t: f64, observables: &[Observable]) -> FkEstimate {
    let w = ens.weights();
    let (q1, q1_stderr) = mean_stderr(&w);
    let mut qf = Vec::with_capacity(observables.len());
    let mut qf_stderr = Vec::with_capacity(observables.len());
    for o in observables {
        let vals: Vec<f64> = w
            .iter()
            .zip(ens.positions.chunks(ens.dim))
            .map(|(wi, x)| if *wi > 0.0 { wi * o.eval(x) } else { 0.0 })
            .collect();
        let (m, s) = mean_stderr(&vals);
        qf.push(m);
        qf_stderr.push(s);
    }
    let alive = ens.alive_count();
    FkEstimate {
        t,
        q1,
        q1_stderr,
        qf,
        qf_stderr,
        alive,
        nonfinite: ens.nonfinite,
        extinct: alive == 0,
    }
}

fn steps_for(t: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(bad("dt", format!("must be positive, got {dt}")));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(bad("t", format!("must be finite and >= 0, got {t}")));
    }
    let n = (t / dt).round();
    if (n * dt - t).abs() > 1e-9 * t.max(1.0) {
        return Err(bad("t", format!("{t} is not a multiple of dt = {dt}")));
    }
    Ok(n as usize)
}

/// Estimates at each checkpoint time (ascending multiples of `dt`) for paths from `x0`.
#[allow(clippy::too_many_arguments)]
pub fn feynman_kac_curve(
    model: &SdeModel,
    absorb: &AbsorptionSpec,
    x0: &[f64],
    times: &[f64],
    n_particles: usize,
    dt: f64,
    seed: u64,
    observables: &[Observable],
) -> Result<Vec<FkEstimate>> {
    model.validate()?;
    absorb.validate(model.dim)?;
    if x0.len() != model.dim {
        return Err(Error::Dimension(format!("x0 has {} coordinates, model has {}", x0.len(), model.dim)));
    }
    if !absorb.domain.contains(x0) {
        return Err(bad("x0", format!("{x0:?} is outside the hard domain")));
    }
    let mut ens = ParticleEnsemble::new(model.dim, n_particles, seed, |_, x| x.copy_from_slice(x0))?;
    let mut done = 0usize;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let target = steps_for(t, dt)?;
        if target < done {
            return Err(bad("times", "checkpoints must be ascending"));
        }
        ens.advance(model, absorb, dt, target - done);
        done = target;
        out.push(snapshot(&ens, t, observables));
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
pub fn feynman_kac_estimate(
    model: &SdeModel,
    absorb: &AbsorptionSpec,
    x0: &[f64],
    t: f64,
    n_particles: usize,
    dt: f64,
    seed: u64,
    observables: &[Observable],
) -> Result<FkEstimate> {
    Ok(feynman_kac_curve(model, absorb, x0, &[t], n_particles, dt, seed, observables)?.remove(0))
}

/// Initial law of the particle system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialLaw {
    Point { x: Vec<f64> },
    /// Independent normal coordinates.
    Gaussian { mean: Vec<f64>, sd: f64 },
    /// Uniform on a box.
    Uniform { lo: Vec<f64>, hi: Vec<f64> },
}

impl InitialLaw {
    pub fn dim(&self) -> usize {
        match self {
            InitialLaw::Point { x } => x.len(),
            InitialLaw::Gaussian { mean, .. } => mean.len(),
            InitialLaw::Uniform { lo, .. } => lo.len(),
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng, x: &mut [f64]) {
        match self {
            InitialLaw::Point { x: p } => x.copy_from_slice(p),
            InitialLaw::Gaussian { mean, sd } => {
                for (v, m) in x.iter_mut().zip(mean) {
                    *v = m + sd * rng.sample::<f64, _>(StandardNormal);
                }
            }
            InitialLaw::Uniform { lo, hi } => {
                for ((v, l), h) in x.iter_mut().zip(lo).zip(hi) {
                    *v = l + (h - l) * rng.random::<f64>();
                }
            }
        }
    }
}

/// Weighted empirical measure after the last period, and the growth rate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QsdEstimate {
    pub positions: Vec<f64>,
    /// Normalised weights of the final particles.
    pub weights: Vec<f64>,
    pub dim: usize,
    /// Mean of `log(mass decrement) / period` over the periods after burn-in.
    pub rho_hat: f64,
    /// Standard error of `rho_hat` from the spread of per-period values.
    pub rho_stderr: f64,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    /// Weighted variance averaged over the resampling times after burn-in.
    pub time_avg_variance: Vec<f64>,
    pub periods: usize,
    pub burn_in: usize,
}

/// Resampling particle approximation of the normalised flow.
///
/// Every `resample_every` steps the mean weight is recorded as the mass
/// decrement and particles are resampled multinomially with weights reset.
/// The first `burn_in` fraction of periods is discarded for `rho_hat`.
#[allow(clippy::too_many_arguments)]
pub fn qsd_particle_estimate(
    model: &SdeModel,
    absorb: &AbsorptionSpec,
    eta0: &InitialLaw,
    t: f64,
    n_particles: usize,
    resample_every: usize,
    dt: f64,
    burn_in: f64,
    seed: u64,
) -> Result<QsdEstimate> {
    model.validate()?;
    absorb.validate(model.dim)?;
    if eta0.dim() != model.dim {
        return Err(Error::Dimension(format!("initial law has dimension {}, model {}", eta0.dim(), model.dim)));
    }
    if resample_every == 0 {
        return Err(bad("resample_every", "must be at least one step"));
    }
    if !(0.0..1.0).contains(&burn_in) {
        return Err(bad("burn_in", format!("fraction must lie in [0,1), got {burn_in}")));
    }
    let steps = steps_for(t, dt)?;
    let periods = steps / resample_every;
    if periods < 2 || periods * resample_every != steps {
        return Err(bad("t", "t must cover at least two whole resampling periods"));
    }
    let mut ens = ParticleEnsemble::new(model.dim, n_particles, seed, |rng, x| eta0.sample(rng, x))?;
    if ens.positions.chunks(model.dim).any(|x| !absorb.domain.contains(x)) {
        return Err(bad("eta0", "initial law charges points outside the hard domain"));
    }
    let mut resample_rng = stream_rng(seed, RESAMPLE_STREAM);
    let period = resample_every as f64 * dt;
    let skip = (burn_in * periods as f64).floor() as usize;
    let mut rates = Vec::with_capacity(periods - skip);
    let n = ens.len();
    let dim = model.dim;
    let mut var_acc = vec![0.0; dim];
    for k in 0..periods {
        ens.advance(model, absorb, dt, resample_every);
        let w = ens.weights();
        let total: f64 = w.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Absorbed {
                step: (k + 1) * resample_every,
            });
        }
        if k >= skip {
            rates.push((total / n as f64).ln() / period);
            let (_, v) = weighted_moments(&ens.positions, &w, dim);
            var_acc.iter_mut().zip(v).for_each(|(a, b)| *a += b);
        }
        if k + 1 == periods {
            break;
        }
        // Multinomial resampling by sorted uniforms against the cumulative weights.
        let mut u: Vec<f64> = (0..n).map(|_| resample_rng.random::<f64>() * total).collect();
        u.sort_by(f64::total_cmp);
        let mut next = vec![0.0; n * dim];
        let (mut j, mut acc) = (0usize, w[0]);
        for (i, ui) in u.iter().enumerate() {
            while *ui >= acc && j + 1 < n {
                j += 1;
                acc += w[j];
            }
            while w[j] == 0.0 && j + 1 < n {
                j += 1;
                acc += w[j];
            }
            next[i * dim..(i + 1) * dim].copy_from_slice(&ens.positions[j * dim..(j + 1) * dim]);
        }
        ens.positions = next;
        ens.log_weights.iter_mut().for_each(|l| *l = 0.0);
        ens.alive.iter_mut().for_each(|a| *a = true);
    }
    let w = ens.weights();
    let total: f64 = w.iter().sum();
    let weights: Vec<f64> = w.iter().map(|v| v / total).collect();
    let (mean, variance) = weighted_moments(&ens.positions, &weights, dim);
    let time_avg_variance = var_acc.iter().map(|v| v / rates.len() as f64).collect();
    let (rho_hat, rho_stderr) = mean_stderr(&rates);
    Ok(QsdEstimate {
        positions: ens.positions,
        weights,
        dim,
        rho_hat,
        rho_stderr,
        mean,
        variance,
        time_avg_variance,
        periods,
        burn_in: skip,
    })
}

fn weighted_moments(pos: &[f64], w: &[f64], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let total: f64 = w.iter().sum();
    let mut mean = vec![0.0; dim];
    for (wi, x) in w.iter().zip(pos.chunks(dim)) {
        for d in 0..dim {
            mean[d] += wi * x[d];
        }
    }
    mean.iter_mut().for_each(|m| *m /= total);
    let mut var = vec![0.0; dim];
    for (wi, x) in w.iter().zip(pos.chunks(dim)) {
        for d in 0..dim {
            var[d] += wi * (x[d] - mean[d]).powi(2);
        }
    }
    var.iter_mut().for_each(|v| *v /= total);
    (mean, var)
}

/// Replica summary of the resampling estimator: means and standard errors of
/// `rho_hat` and of the time-averaged variance (first coordinate) over
/// independent sub-populations.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QsdReplicas {
    pub replicas: usize,
    pub particles_each: usize,
    pub rho: f64,
    pub rho_stderr: f64,
    pub variance: f64,
    pub variance_stderr: f64,
}

/// Runs `replicas` independent particle systems splitting `n_particles`.
#[allow(clippy::too_many_arguments)]
pub fn qsd_replicas(
    model: &SdeModel,
    absorb: &AbsorptionSpec,
    eta0: &InitialLaw,
    t: f64,
    n_particles: usize,
    resample_every: usize,
    dt: f64,
    burn_in: f64,
    seed: u64,
    replicas: usize,
) -> Result<QsdReplicas> {
    if replicas < 2 {
        return Err(bad("replicas", "need at least two replicas for an error bar"));
    }
    let each = n_particles / replicas;
    let mut rho = Vec::with_capacity(replicas);
    let mut var = Vec::with_capacity(replicas);
    for r in 0..replicas {
        let sub = stream_rng(seed, REPLICA_STREAM + r as u64).random::<u64>();
        let q = qsd_particle_estimate(model, absorb, eta0, t, each, resample_every, dt, burn_in, sub)?;
        rho.push(q.rho_hat);
        var.push(q.time_avg_variance[0]);
    }
    let (rho_m, rho_se) = mean_stderr(&rho);
    let (var_m, var_se) = mean_stderr(&var);
    Ok(QsdReplicas {
        replicas,
        particles_each: each,
        rho: rho_m,
        rho_stderr: rho_se,
        variance: var_m,
        variance_stderr: var_se,
    })
}

/// Named sub-Markov models: dynamics plus absorption.
pub const SIM_MODELS: [&str; 5] = ["brownian", "harmonic", "dirichlet", "half_harmonic", "ou"];

pub fn named_model(name: &str) -> Result<(SdeModel, AbsorptionSpec)> {
    let bm = SdeModel::brownian(1, 1.0);
    let harmonic = Potential::Quadratic { c: 0.5 };
    Ok(match name {
        "brownian" => (bm, AbsorptionSpec::default()),
        "harmonic" => (
            bm,
            AbsorptionSpec {
                potential: harmonic,
                ..Default::default()
            },
        ),
        "dirichlet" => (
            bm,
            AbsorptionSpec {
                domain: HardDomain::unit_interval(),
                ..Default::default()
            },
        ),
        "half_harmonic" => (
            bm,
            AbsorptionSpec {
                potential: harmonic,
                domain: HardDomain::half_line(),
                bridge: true,
            },
        ),
        "ou" => (SdeModel::ou(1.0, 1.0), AbsorptionSpec::default()),
        _ => {
            return Err(Error::Unknown {
                name: name.into(),
                available: SIM_MODELS.join(", "),
            })
        }
    })
}

/// Sample size, step and seed for [`mc_validate`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McBudget {
    pub n_particles: usize,
    pub dt: f64,
    pub seed: u64,
}

impl Default for McBudget {
    fn default() -> Self {
        Self {
            n_particles: 100_000,
            dt: 1e-3,
            seed: 20_240_601,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McReport {
    pub case: String,
    pub estimate: f64,
    pub oracle: f64,
    pub stderr: f64,
    pub z: f64,
    /// Absolute band used instead of the z-test, when the case has one.
    pub band: Option<f64>,
    pub pass: bool,
    pub n_particles: usize,
    pub dt: f64,
    pub seed: u64,
}

pub const MC_CASES: [&str; 7] = [
    "harmonic_mass_t1",
    "dirichlet_survival_t03",
    "ou_stationary_var",
    "qsd_harmonic_rho",
    "qsd_harmonic_var",
    "qsd_dirichlet_rho",
    "qsd_ou_var",
];

/// Independent sub-populations behind the resampling cases' error bars.
const QSD_REPLICAS: usize = 16;
/// Resampling period (steps) of the validation cases; longer periods shrink
/// the O(1/(N period)) variance loss from repeated resampling.
const QSD_EVERY: usize = 50;

fn report(case: &str, est: f64, oracle: f64, stderr: f64, band: Option<f64>, n: usize, b: &McBudget) -> McReport {
    let z = if stderr > 0.0 { (est - oracle) / stderr } else { f64::INFINITY * (est - oracle).signum() };
    let pass = match band {
        Some(bd) => (est - oracle).abs() <= bd,
        None => (est - oracle).abs() <= 3.0 * stderr,
    };
    McReport {
        case: case.into(),
        estimate: est,
        oracle,
        stderr,
        z,
        band,
        pass,
        n_particles: n,
        dt: b.dt,
        seed: b.seed,
    }
}

/// Runs a named validation case; passes when `|z| <= 3` (or inside the band).
pub fn mc_validate(case: &str, budget: &McBudget) -> Result<McReport> {
    validate_case(case, budget, &mut None)
}

/// Runs several cases in order. The two harmonic QSD cases share one simulation.
pub fn mc_validate_batch(cases: &[&str], budget: &McBudget) -> Result<Vec<McReport>> {
    let mut harmonic = None;
    cases.iter().map(|c| validate_case(c, budget, &mut harmonic)).collect()
}

fn validate_case(case: &str, b: &McBudget, harmonic: &mut Option<QsdReplicas>) -> Result<McReport> {
    match case {
        "harmonic_mass_t1" => {
            let (m, a) = named_model("harmonic")?;
            let e = feynman_kac_estimate(&m, &a, &[0.0], 1.0, b.n_particles, b.dt, b.seed, &[])?;
            Ok(report(case, e.q1, harmonic_mass(1.0, 0.0)?, e.q1_stderr, None, b.n_particles, b))
        }
        "dirichlet_survival_t03" => {
            let (m, a) = named_model("dirichlet")?;
            let e = feynman_kac_estimate(&m, &a, &[0.5], 0.3, b.n_particles, b.dt, b.seed, &[])?;
            Ok(report(case, e.q1, dirichlet_survival(0.3, 0.5, 200)?, e.q1_stderr, None, b.n_particles, b))
        }
        "ou_stationary_var" => {
            let (m, a) = named_model("ou")?;
            let ens = {
                let mut ens = ParticleEnsemble::new(1, b.n_particles, b.seed, |_, x| x[0] = 0.0)?;
                ens.advance(&m, &a, b.dt, steps_for(5.0, b.dt)?);
                ens
            };
            let xs = &ens.positions;
            let (mean, _) = mean_stderr(xs);
            let sq: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
            let (var, se) = mean_stderr(&sq);
            Ok(report(case, var, 0.5, se, None, b.n_particles, b))
        }
        "qsd_harmonic_rho" | "qsd_harmonic_var" => {
            if harmonic.is_none() {
                let (m, a) = named_model("harmonic")?;
                let eta0 = InitialLaw::Gaussian { mean: vec![0.0], sd: 1.2 };
                *harmonic = Some(qsd_replicas(&m, &a, &eta0, 6.0, b.n_particles, QSD_EVERY, b.dt, 0.5, b.seed, QSD_REPLICAS)?);
            }
            let q = harmonic.as_ref().expect("filled above");
            if case == "qsd_harmonic_rho" {
                Ok(report(case, q.rho, -0.5, q.rho_stderr, Some(0.02), b.n_particles, b))
            } else {
                Ok(report(case, q.variance, 1.0, q.variance_stderr, None, b.n_particles, b))
            }
        }
        "qsd_dirichlet_rho" => {
            let (m, a) = named_model("dirichlet")?;
            let eta0 = InitialLaw::Uniform { lo: vec![0.0], hi: vec![1.0] };
            let q = qsd_replicas(&m, &a, &eta0, 1.5, b.n_particles, QSD_EVERY, b.dt, 1.0 / 3.0, b.seed, QSD_REPLICAS)?;
            let oracle = -std::f64::consts::PI.powi(2) / 2.0;
            Ok(report(case, q.rho, oracle, q.rho_stderr, Some(0.1), b.n_particles, b))
        }
        "qsd_ou_var" => {
            let (m, a) = named_model("ou")?;
            let eta0 = InitialLaw::Point { x: vec![0.0] };
            let q = qsd_replicas(&m, &a, &eta0, 6.0, b.n_particles, QSD_EVERY, b.dt, 0.5, b.seed, QSD_REPLICAS)?;
            Ok(report(case, q.variance, 0.5, q.variance_stderr, None, b.n_particles, b))
        }
        _ => Err(Error::Unknown {
            name: case.into(),
            available: MC_CASES.join(", "),
        }),
    }
}

/// Stationary variance `sigma^2 / (2 theta - theta^2 dt)` of the Euler-Maruyama OU chain.
pub fn ou_euler_stationary_var(theta: f64, sigma: f64, dt: f64) -> f64 {
    sigma * sigma / (2.0 * theta - theta * theta * dt)
}

/// Uses the ensemble's first partition stream for a single scalar step, for callers
/// that want to drive particles by hand.
pub fn sde_step(model: &SdeModel, absorb: &AbsorptionSpec, ens: &mut ParticleEnsemble, dt: f64) -> Result<()> {
    if !(dt > 0.0) {
        return Err(bad("dt", format!("must be positive, got {dt}")));
    }
    ens.advance(model, absorb, dt, 1);
    Ok(())
}

#[doc(hidden)]
pub fn diffusion_matrix(d: &Diffusion, dim: usize) -> DMatrix<f64> {
    match d {
        Diffusion::Scalar(s) => DMatrix::identity(dim, dim) * *s,
        Diffusion::Matrix(m) => DMatrix::from_fn(dim, dim, |i, j| m[i][j]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn markov_mass_is_one() {
        let (m, a) = named_model("brownian").unwrap();
        let e = feynman_kac_estimate(&m, &a, &[0.3], 0.5, 1000, 1e-2, 1, &[Observable::One]).unwrap();
        assert_eq!(e.q1, 1.0);
        assert_eq!(e.qf[0], 1.0);
    }

    #[test]
    fn frozen_particles() {
        let m = SdeModel::brownian(2, 0.0);
        let e = feynman_kac_estimate(&m, &AbsorptionSpec::default(), &[0.3, -1.0], 1.0, 10, 0.1, 1, &[Observable::Coord { i: 1 }]).unwrap();
        assert_eq!(e.qf[0], -1.0);
    }

    #[test]
    fn same_seed_same_bits() {
        let (m, a) = named_model("dirichlet").unwrap();
        let r1 = feynman_kac_estimate(&m, &a, &[0.5], 0.1, 500, 1e-2, 7, &[]).unwrap();
        let r2 = feynman_kac_estimate(&m, &a, &[0.5], 0.1, 500, 1e-2, 7, &[]).unwrap();
        assert_eq!(r1.q1.to_bits(), r2.q1.to_bits());
    }

    #[test]
    fn rejects_bad_times() {
        let (m, a) = named_model("brownian").unwrap();
        assert!(feynman_kac_estimate(&m, &a, &[0.0], 0.105, 10, 1e-2, 1, &[]).is_err());
        assert!(mc_validate("nope", &McBudget::default()).is_err());
    }
}
