//! Hypersurface boundaries given by Monge charts: frames, shape matrices,
//! offset volume factors, signed distance, tube integrals, level-set densities
//! and boundary Lyapunov functions.
//!
//! Sign conventions. `N` is the chart normal (outward for the epigraph when the
//! orientation is `+1`). The domain `E` is the side `N` points away from, signed
//! distances are positive in `E`, and the tube `D_alpha` is
//! `{psi(theta) - r N(theta) : 0 <= r <= alpha}` with volume factor
//! `|det(I + r W)| sqrt(det g)`.

mod surface;

pub use surface::{
    atlas_side_chart, Atlas, BoundaryFrame, ChartAgreement, Height, Monomial, MongeSurface, SurfaceSpec, FD_GRAD_STEP,
    FD_HESS_STEP, ATLAS_SIDE_TOP, SURFACE_FIXTURES,
};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{bad, Error, Result};
use crate::kernels::dirichlet_heat;
use crate::numerics::integrate_left_singular;

/// `|det(I - u W(theta))|`, rejected when some principal curvature `k` has
/// `u k >= 1` (a focal point lies between the surface and the offset).
pub fn offset_jacobian(s: &MongeSurface, theta: &[f64], u: f64) -> Result<f64> {
    let fr = s.frame(theta)?;
    for k in fr.principal_curvatures() {
        if u * k >= 1.0 {
            return Err(Error::Focal(format!(
                "offset {u} reaches the focal distance {} at theta {theta:?}",
                1.0 / k
            )));
        }
    }
    Ok(fr.offset_det(u).abs())
}

/// Result of [`signed_distance`]: `x = psi(foot) - d N(foot)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignedDistance {
    pub d: f64,
    pub foot: Vec<f64>,
    pub residual: f64,
}

fn project_newton(s: &MongeSurface, x: &DVector<f64>, start: &[f64]) -> (Vec<f64>, f64) {
    let chart = s.chart().to_vec();
    let clamp = |th: &mut [f64]| {
        for (t, &(a, b)) in th.iter_mut().zip(&chart) {
            *t = t.clamp(a, b);
        }
    };
    let obj = |th: &[f64]| s.psi(th).map(|p| 0.5 * (x - p).norm_squared()).unwrap_or(f64::INFINITY);
    // Near focal points the objective is flat to rounding; ties are broken by the gradient.
    let gnorm = |th: &[f64]| match s.frame(th) {
        Ok(fr) => {
            let r = x - &fr.point;
            fr.tangents.iter().map(|t| r.dot(t).powi(2)).sum::<f64>().sqrt()
        }
        Err(_) => f64::INFINITY,
    };
    let mut th = start.to_vec();
    let mut f = obj(&th);
    for _ in 0..300 {
        let Ok(fr) = s.frame(&th) else { break };
        let r = x - &fr.point;
        let d = th.len();
        let grad = DVector::from_fn(d, |i, _| -r.dot(&fr.tangents[i]));
        if grad.norm() == 0.0 {
            break;
        }
        let hphi = s.phi_hessian(&th);
        let ra = r[s.axis()];
        let hess = DMatrix::from_fn(d, d, |i, k| fr.tangents[i].dot(&fr.tangents[k]) - ra * hphi[(i, k)]);
        let step = match hess.clone().cholesky() {
            Some(ch) => -ch.solve(&grad),
            None => -&grad,
        };
        let mut lam = 1.0;
        let mut moved = false;
        while lam > 1e-12 {
            let mut cand: Vec<f64> = th.iter().zip(step.iter()).map(|(t, st)| t + lam * st).collect();
            clamp(&mut cand);
            let fc = obj(&cand);
            if fc < f || (fc <= f + 4.0 * f64::EPSILON * f && gnorm(&cand) < grad.norm()) {
                let shift: f64 = cand.iter().zip(&th).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                th = cand;
                f = fc;
                moved = shift > 1e-15;
                break;
            }
            lam *= 0.5;
        }
        if !moved {
            break;
        }
    }
    (th, f)
}

/// Nearest surface point of `x` by multi-start Newton on `|x - psi(theta)|^2`
/// (9 starts on a coarse chart lattice).
///
/// Rejected when the minimiser sits on the chart boundary, when `|d| > tube_alpha`,
/// or when `x` is not on the normal line through the foot to within 1e-8.
pub fn signed_distance(s: &MongeSurface, x: &[f64], tube_alpha: f64) -> Result<SignedDistance> {
    if x.len() != s.dim() || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Dimension(format!("point {x:?} is not a finite {}-vector", s.dim())));
    }
    let xv = DVector::from_column_slice(x);
    let starts = s.lattice(if s.dim() == 2 { 9 } else { 3 });
    let (foot, _) = starts
        .iter()
        .map(|st| project_newton(s, &xv, st))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty start set");
    for (t, &(a, b)) in foot.iter().zip(s.chart()) {
        let tol = 1e-9 * (b - a);
        if *t - a <= tol || b - *t <= tol {
            return Err(Error::OutsideChart(format!(
                "nearest point of {x:?} lies on the chart boundary (theta {foot:?})"
            )));
        }
    }
    let fr = s.frame(&foot)?;
    let d = -(&xv - &fr.point).dot(&fr.normal);
    let residual = (&fr.point - &fr.normal * d - &xv).norm();
    if d.abs() > tube_alpha {
        return Err(Error::OutsideChart(format!("point {x:?} at distance {} is outside the {tube_alpha}-tube", d.abs())));
    }
    if residual > 1e-8 {
        return Err(Error::Integration(format!("projection of {x:?} did not converge (residual {residual:e})")));
    }
    Ok(SignedDistance { d, foot, residual })
}

/// Smallest positive focal distance on the `E` side found on a chart lattice,
/// i.e. the least `r` with `1 + r k = 0` for a principal curvature `k < 0`.
pub fn inner_focal_distance(s: &MongeSurface) -> Result<f64> {
    let k = if s.dim() == 2 { 400 } else { 40 };
    let mut best = f64::INFINITY;
    for th in s.lattice(k) {
        for c in s.frame(&th)?.principal_curvatures() {
            if c < 0.0 {
                best = best.min(-1.0 / c);
            }
        }
    }
    Ok(best)
}

fn theta_panels(s: &MongeSurface) -> usize {
    if s.dim() == 2 {
        64
    } else {
        12
    }
}

/// Two evaluations of `int_{D_alpha} f(d(y)) dy`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoareaReport {
    pub alpha: f64,
    /// Requested radius when it had to be shrunk below the focal distance.
    pub shrunk_from: Option<f64>,
    /// Volume side: chart-outer, radius-inner, numerical Jacobian of the Fermi map.
    pub volume: f64,
    /// Level-set side: radius-outer integral of offset surface integrals.
    pub level_sets: f64,
    pub rel_diff: f64,
    pub holds: bool,
}

/// Checks the co-area identity on the inner tube of radius `alpha`.
///
/// `f` may blow up like `r^{-s}`, `s < 1`, at `r = 0`. `n_r` is the number of
/// radial panels.
pub fn coarea_check<F>(s: &MongeSurface, f: F, alpha: f64, n_r: usize) -> Result<CoareaReport>
where
    F: Fn(f64) -> f64 + Sync,
{
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(bad("alpha", format!("tube radius must be positive, got {alpha}")));
    }
    let focal = inner_focal_distance(s)?;
    let mut a = alpha;
    while a >= 0.9 * focal {
        a *= 0.5;
    }
    let shrunk_from = (a != alpha).then_some(alpha);
    let n_r = n_r.max(1);
    let d = s.dim() - 1;
    let h = 1e-6;
    let fermi = |th: &[f64], r: f64| -> Option<DVector<f64>> {
        let fr = s.frame(th).ok()?;
        Some(fr.point - fr.normal * r)
    };
    let jac_det = |th: &[f64], r: f64| -> f64 {
        let mut cols = Vec::with_capacity(d + 1);
        for i in 0..d {
            let mut p = th.to_vec();
            let mut m = th.to_vec();
            p[i] += h;
            m[i] -= h;
            match (fermi(&p, r), fermi(&m, r)) {
                (Some(fp), Some(fm)) => cols.push((fp - fm) / (2.0 * h)),
                _ => return f64::NAN,
            }
        }
        let Ok(fr) = s.frame(th) else { return f64::NAN };
        cols.push(-fr.normal);
        DMatrix::from_columns(&cols).determinant().abs()
    };
    // Keep finite differences inside the chart.
    let inner: Vec<(f64, f64)> = s.chart().iter().map(|&(lo, hi)| (lo, hi)).collect();
    let tp = theta_panels(s);
    let volume = surface::box_integral(&inner, tp, |th| {
        let mut th = th.to_vec();
        for (t, &(lo, hi)) in th.iter_mut().zip(&inner) {
            *t = t.clamp(lo + 2.0 * h, hi - 2.0 * h);
        }
        integrate_left_singular(|r| f(r) * jac_det(&th, r), 0.0, a, 4, n_r)
    });
    let level_sets = integrate_left_singular(
        |r| {
            f(r) * s.chart_integral(tp, |th| match s.frame(th) {
                Ok(fr) => fr.offset_det(-r).abs() * fr.det_g().sqrt(),
                Err(_) => f64::NAN,
            })
        },
        0.0,
        a,
        4,
        n_r,
    );
    if !volume.is_finite() || !level_sets.is_finite() {
        return Err(Error::Integration("non-finite tube integral".into()));
    }
    let rel_diff = (volume - level_sets).abs() / level_sets.abs().max(1e-300);
    Ok(CoareaReport {
        alpha: a,
        shrunk_from,
        volume,
        level_sets,
        rel_diff,
        holds: rel_diff <= 1e-3,
    })
}

/// Dominating density `q_t(x, y) = c_t (2 pi sigma^2)^{-n/2} exp(-|y - m(x)|^2 / (2 sigma^2))`
/// with affine mean `m(x) = mean_scale * x + mean_shift`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubGaussianKernel {
    pub c_t: f64,
    pub sigma_t: f64,
    #[serde(default = "unit")]
    pub mean_scale: f64,
    #[serde(default)]
    pub mean_shift: Vec<f64>,
}

fn unit() -> f64 {
    1.0
}

impl SubGaussianKernel {
    pub fn gaussian(sigma_t: f64) -> Self {
        Self {
            c_t: 1.0,
            sigma_t,
            mean_scale: 1.0,
            mean_shift: vec![],
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.c_t > 0.0) || !self.c_t.is_finite() {
            return Err(bad("c_t", format!("must be positive, got {}", self.c_t)));
        }
        if !(self.sigma_t > 0.0) || !self.sigma_t.is_finite() {
            return Err(bad("sigma_t", format!("must be positive, got {}", self.sigma_t)));
        }
        if !self.mean_shift.is_empty() && self.mean_shift.len() != n {
            return Err(bad("mean_shift", format!("needs {n} entries or none")));
        }
        Ok(())
    }

    pub fn mean(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, v)| self.mean_scale * v + self.mean_shift.get(i).copied().unwrap_or(0.0))
            .collect()
    }

    pub fn density(&self, x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let s2 = self.sigma_t * self.sigma_t;
        let m = self.mean(x);
        let d2: f64 = y.iter().zip(&m).map(|(a, b)| (a - b) * (a - b)).sum();
        self.c_t * (2.0 * std::f64::consts::PI * s2).powf(-n / 2.0) * (-d2 / (2.0 * s2)).exp()
    }

    /// `iota_t(alpha)`: best constant over `eps in (0,1)` in
    /// `sup_{|u| <= alpha} g(y + u) <= iota g_eps(y)` with `sigma(eps)^2 = sigma^2/(1-eps)`.
    pub fn iota(&self, alpha: f64, n: usize) -> f64 {
        let s2 = self.sigma_t * self.sigma_t;
        (1..200)
            .map(|k| {
                let e = k as f64 / 200.0;
                (1.0 - e).powf(-(n as f64) / 2.0) * ((1.0 / e - 1.0) * alpha * alpha / (2.0 * s2)).exp()
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Level-set density at radius `r` and the uniform bound
/// `c_t iota_t(alpha) kappa^-(alpha) kappa(alpha) / alpha`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelSetReport {
    pub density: f64,
    pub bound: f64,
    pub iota: f64,
    pub kappa: f64,
    pub kappa_minus: f64,
    pub panels: usize,
    pub holds: bool,
}

/// `kappa(alpha) = sup |det(I - r W)|` and `kappa^-(alpha) = sup |det(I + r W)|`
/// over `0 <= r <= alpha` and a chart lattice.
pub fn offset_suprema(s: &MongeSurface, alpha: f64) -> Result<(f64, f64)> {
    let lat = s.lattice(if s.dim() == 2 { 400 } else { 40 });
    let (mut kp, mut km) = (0.0f64, 0.0f64);
    for th in lat {
        let fr = s.frame(&th)?;
        for j in 0..=20 {
            let r = alpha * j as f64 / 20.0;
            kp = kp.max(fr.offset_det(r).abs());
            km = km.max(fr.offset_det(-r).abs());
        }
    }
    Ok((kp, km))
}

/// `q^d_t(x, r) = int q_t(x, psi - r N) |det(I + r W)| sqrt(det g) dtheta` over the
/// chart, refined until two panel counts agree, with the uniform bound for the
/// `alpha`-tube.
pub fn level_set_density(
    kernel: &SubGaussianKernel,
    s: &MongeSurface,
    x: &[f64],
    r: f64,
    alpha: f64,
) -> Result<LevelSetReport> {
    kernel.validate(s.dim())?;
    if x.len() != s.dim() {
        return Err(Error::Dimension(format!("point {x:?} is not a {}-vector", s.dim())));
    }
    if !(alpha > 0.0) || !(0.0..=alpha).contains(&r) {
        return Err(bad("r", format!("need 0 <= r <= alpha with alpha > 0, got r={r}, alpha={alpha}")));
    }
    let integrand = |th: &[f64]| match s.frame(th) {
        Ok(fr) => {
            let y: Vec<f64> = (&fr.point - &fr.normal * r).iter().copied().collect();
            kernel.density(x, &y) * fr.offset_det(-r).abs() * fr.det_g().sqrt()
        }
        Err(_) => f64::NAN,
    };
    let (mut panels, cap) = if s.dim() == 2 { (64, 4096) } else { (16, 256) };
    let mut prev = s.chart_integral(panels, integrand);
    let density = loop {
        let next = s.chart_integral(2 * panels, integrand);
        panels *= 2;
        if !next.is_finite() {
            return Err(Error::Integration("non-finite level-set density".into()));
        }
        if (next - prev).abs() <= 1e-12 + 1e-8 * next.abs() {
            break next;
        }
        if panels >= cap {
            return Err(Error::Integration(format!(
                "level-set quadrature did not settle ({prev} vs {next} at {panels} panels)"
            )));
        }
        prev = next;
    };
    let (kappa, kappa_minus) = offset_suprema(s, alpha)?;
    let iota = kernel.iota(alpha, s.dim());
    let bound = kernel.c_t * iota * kappa_minus * kappa / alpha;
    Ok(LevelSetReport {
        density,
        bound,
        iota,
        kappa,
        kappa_minus,
        panels,
        holds: density <= bound,
    })
}

/// Profile `chi(u) = u^{-(1-eps)}` of a boundary Lyapunov function on a tube of radius `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryProfile {
    pub epsilon_exp: f64,
    pub alpha: f64,
}

impl BoundaryProfile {
    pub fn new(epsilon_exp: f64, alpha: f64) -> Result<Self> {
        if !(epsilon_exp > 0.0 && epsilon_exp < 1.0) {
            return Err(bad("epsilon_exp", format!("must lie in (0,1), got {epsilon_exp}")));
        }
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(bad("alpha", format!("must be positive, got {alpha}")));
        }
        Ok(Self { epsilon_exp, alpha })
    }

    pub fn chi(&self, u: f64) -> f64 {
        u.powf(-(1.0 - self.epsilon_exp))
    }

    /// `int_0^a chi(u) du = a^eps / eps`.
    pub fn chi_bar(&self, a: f64) -> f64 {
        a.powf(self.epsilon_exp) / self.epsilon_exp
    }
}

/// Domain whose boundary distance feeds `V_d = chi(d(x, dE))`.
#[derive(Debug, Clone)]
pub enum BoundaryDomain {
    Interval { lo: f64, hi: f64 },
    Surface(MongeSurface),
}

/// `V_d(x) = chi(d(x, dE))` for `x` inside the domain.
pub fn boundary_lyapunov(profile: &BoundaryProfile, domain: &BoundaryDomain, x: &[f64]) -> Result<f64> {
    let d = match domain {
        BoundaryDomain::Interval { lo, hi } => {
            if x.len() != 1 {
                return Err(Error::Dimension("interval domains take scalar points".into()));
            }
            if !(x[0] > *lo && x[0] < *hi) {
                return Err(Error::OutsideChart(format!("{} is not inside ({lo}, {hi})", x[0])));
            }
            (x[0] - lo).min(hi - x[0])
        }
        BoundaryDomain::Surface(s) => {
            let sd = signed_distance(s, x, f64::INFINITY)?;
            if sd.d <= 0.0 {
                return Err(Error::OutsideChart(format!("{x:?} is not inside the domain (d = {})", sd.d)));
            }
            sd.d
        }
    };
    Ok(profile.chi(d))
}

/// Boundedness of `Q_t(V_d)` for Brownian motion killed on leaving (0,1).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryDriftReport {
    pub t: f64,
    pub xs: Vec<f64>,
    pub qv: Vec<f64>,
    pub v: Vec<f64>,
    /// `c_t = max_x Q_t(V_d)(x)`, so that `Q_t(V_d)/V_d <= c_t / V_d` on the grid.
    pub c_t: f64,
    /// A priori bound `(2 pi t)^{-1/2} * 2 chi_bar(1/2)` from the free heat kernel.
    pub c_t_bound: f64,
    pub ratio_max: f64,
    pub holds: bool,
}

pub fn dirichlet_boundary_check(profile: &BoundaryProfile, t: f64, n_grid: usize) -> Result<BoundaryDriftReport> {
    if !(t > 0.0) {
        return Err(bad("t", format!("must be positive, got {t}")));
    }
    let n_grid = n_grid.max(2);
    let n_terms = 60;
    let xs: Vec<f64> = (0..n_grid).map(|i| (i as f64 + 0.5) / n_grid as f64).collect();
    let mut qv = Vec::with_capacity(n_grid);
    let mut v = Vec::with_capacity(n_grid);
    for &x in &xs {
        let left = integrate_left_singular(
            |y| dirichlet_heat(t, x, y, n_terms).unwrap_or(f64::NAN) * profile.chi(y),
            0.0,
            0.5,
            4,
            40,
        );
        let right = integrate_left_singular(
            |s| dirichlet_heat(t, x, 1.0 - s, n_terms).unwrap_or(f64::NAN) * profile.chi(s),
            0.0,
            0.5,
            4,
            40,
        );
        qv.push(left + right);
        v.push(profile.chi(x.min(1.0 - x)));
    }
    if qv.iter().any(|q| !q.is_finite()) {
        return Err(Error::Integration("non-finite Q_t(V)".into()));
    }
    let c_t = qv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ratio_max = qv.iter().zip(&v).map(|(q, w)| q / w).fold(f64::NEG_INFINITY, f64::max);
    let c_t_bound = (2.0 * std::f64::consts::PI * t).powf(-0.5) * 2.0 * profile.chi_bar(0.5);
    let ok_grid = qv.iter().zip(&v).all(|(q, w)| q / w <= c_t / w * (1.0 + 1e-12));
    Ok(BoundaryDriftReport {
        t,
        xs,
        qv,
        v,
        c_t,
        c_t_bound,
        ratio_max,
        holds: ok_grid && c_t <= c_t_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn parabola_frames() {
        let s = MongeSurface::fixture("parabola").unwrap();
        let f0 = s.frame(&[0.0]).unwrap();
        assert!(close(f0.normal[1], -1.0, 1e-15) && close(f0.g[(0, 0)], 1.0, 0.0));
        assert!(close(f0.w[(0, 0)], -2.0, 1e-14));
        let f1 = s.frame(&[1.0]).unwrap();
        assert!(close(f1.g[(0, 0)], 5.0, 1e-14));
        assert!(close(f1.normal[0], 2.0 / 5f64.sqrt(), 1e-15));
        assert!(close(f1.w[(0, 0)], -2.0 / 5f64.powf(1.5), 1e-14));
        assert!(s.frame(&[4.0]).is_err());
    }

    #[test]
    fn paraboloid_forms() {
        let s = MongeSurface::fixture("paraboloid").unwrap();
        let f = s.frame(&[1.0, 0.0]).unwrap();
        assert!(close(f.g[(0, 0)], 5.0, 1e-14) && close(f.g[(1, 1)], 1.0, 1e-14) && close(f.g[(0, 1)], 0.0, 1e-14));
        let f0 = s.frame(&[0.0, 0.0]).unwrap();
        assert!((f0.w.clone() + DMatrix::identity(2, 2) * 2.0).norm() < 1e-14);
        assert!(close(offset_jacobian(&s, &[0.0, 0.0], 0.1).unwrap(), 1.44, 1e-14));
    }

    #[test]
    fn offsets_and_focal() {
        let s = MongeSurface::fixture("parabola").unwrap();
        assert!(close(offset_jacobian(&s, &[0.0], 0.1).unwrap(), 1.2, 1e-14));
        assert!(close(offset_jacobian(&s, &[0.3], 0.0).unwrap(), 1.0, 0.0));
        assert!(matches!(offset_jacobian(&s, &[0.0], -0.6), Err(Error::Focal(_))));
    }

    #[test]
    fn distances() {
        let flat = MongeSurface::fixture("flat").unwrap();
        let sd = signed_distance(&flat, &[0.3, 0.7], 1.0).unwrap();
        assert!(close(sd.d, 0.7, 1e-12) && close(sd.foot[0], 0.3, 1e-10));
        let p = MongeSurface::fixture("parabola").unwrap();
        let sd = signed_distance(&p, &[0.0, 0.5], 1.0).unwrap();
        assert!(close(sd.d, 0.5, 1e-10) && sd.foot[0].abs() < 1e-8);
        assert!(signed_distance(&p, &[0.0, 0.5], 0.1).is_err());
        assert!(signed_distance(&flat, &[20.0, 0.1], 1.0).is_err());
    }

    #[test]
    fn weingarten_small() {
        let p = MongeSurface::fixture("parabola").unwrap();
        assert!(p.weingarten_residual(&[0.7], 1e-5).unwrap() <= 1e-5);
        let q = MongeSurface::fixture("paraboloid").unwrap();
        assert!(q.weingarten_residual(&[0.5, -0.3], 1e-5).unwrap() <= 1e-5);
    }

    #[test]
    fn profile_values() {
        let pr = BoundaryProfile::new(0.5, 0.25).unwrap();
        let v = boundary_lyapunov(&pr, &BoundaryDomain::Interval { lo: 0.0, hi: 1.0 }, &[0.5]).unwrap();
        assert!(close(v, 2f64.sqrt(), 1e-14));
        assert!(close(pr.chi_bar(0.5), 2.0 * 0.5f64.sqrt(), 1e-14));
    }
}
