//! Subgeometric drift: the prototype `phi(v) = kappa0 v^delta`, its Jensen
//! transfer to `phi1(V)`, the ODE majorant of decreasing sequences and the
//! polynomial and general convex-rate convergence bounds.

use std::sync::Arc;

use serde::Serialize;

use crate::contraction::MinorizationProfile;
use crate::core::{v_norm_values, GridDomain, LyapunovSpec, MeasureVec};
use crate::error::{bad, Result};
use crate::kernels::DiscreteOperator;
use crate::numerics::{bisect, fit_line, gauss_legendre};

/// Prototype drift `phi(v) = kappa0 v^delta`, `phi1(v) = kappa1 v^{1 - upsilon delta}`,
/// `phi2(v) = kappa2 v (phi1(v)/v)^{1+chi}` with the derived `chi` and `kappa2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubGeoDrift {
    pub delta: f64,
    pub upsilon: f64,
    pub kappa0: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub chi: f64,
}

pub fn prototype_drift(delta: f64, upsilon: f64, kappa0: f64, kappa1: f64) -> Result<SubGeoDrift> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(bad("delta", format!("must lie in (0,1), got {delta}")));
    }
    if !(upsilon > 0.0 && upsilon < 1.0) {
        return Err(bad("upsilon", format!("must lie in (0,1), got {upsilon}")));
    }
    if !(kappa0 > 0.0) {
        return Err(bad("kappa0", format!("must be positive, got {kappa0}")));
    }
    if !(kappa1 >= 1.0) {
        return Err(bad("kappa1", format!("must be at least 1, got {kappa1}")));
    }
    let chi = (1.0 - delta) / (upsilon * delta);
    let kappa2 = kappa0 * kappa1.powf(-chi) * (1.0 - upsilon * delta);
    Ok(SubGeoDrift {
        delta,
        upsilon,
        kappa0,
        kappa1,
        kappa2,
        chi,
    })
}

/// `(delta, upsilon) = ((n-1)/n, (i-1)/(n-1))`, which gives `1/chi = i - 1`.
pub fn polynomial_family(n: u32, i: u32) -> Result<(f64, f64)> {
    if !(1 < i && i < n) {
        return Err(bad("i", format!("need 1 < i < n, got n={n}, i={i}")));
    }
    Ok(((n as f64 - 1.0) / n as f64, (i as f64 - 1.0) / (n as f64 - 1.0)))
}

impl SubGeoDrift {
    pub fn phi(&self, v: f64) -> f64 {
        self.kappa0 * v.powf(self.delta)
    }

    pub fn phi1(&self, v: f64) -> f64 {
        self.kappa1 * v.powf(1.0 - self.upsilon * self.delta)
    }

    pub fn dphi1(&self, v: f64) -> f64 {
        self.kappa1 * (1.0 - self.upsilon * self.delta) * v.powf(-self.upsilon * self.delta)
    }

    pub fn phi2(&self, v: f64) -> f64 {
        self.kappa2 * v * (self.phi1(v) / v).powf(1.0 + self.chi)
    }
}

/// Jensen transfer `P(phi1(V)) <= phi1(V) - phi2(V) + c1`, `c1 = c phi1'(1)`.
#[derive(Debug, Clone, Serialize)]
pub struct JensenReport {
    /// Whether `P(V) <= V - phi(V) + c` holds on the grid.
    pub hypothesis_ok: bool,
    /// Worst grid point of the hypothesis and its excess.
    pub hypothesis_worst: (usize, f64),
    pub c1: f64,
    /// Largest `P(phi1 V) - phi1 V + phi2 V - c1` over the grid.
    pub max_excess: f64,
    pub worst_index: usize,
    pub holds: bool,
}

pub fn jensen_drift_check_values(p: &DiscreteOperator, v: &[f64], drift: &SubGeoDrift, c: f64) -> JensenReport {
    let pv = p.apply(v);
    let mut hyp = (0, f64::NEG_INFINITY);
    for i in 0..v.len() {
        let e = pv[i] - (v[i] - drift.phi(v[i]) + c);
        if e > hyp.1 {
            hyp = (i, e);
        }
    }
    let hypothesis_ok = hyp.1 <= 1e-9 * (1.0 + c);
    let phi1: Vec<f64> = v.iter().map(|x| drift.phi1(*x)).collect();
    let pphi1 = p.apply(&phi1);
    let c1 = c * drift.dphi1(1.0);
    let mut worst = (0, f64::NEG_INFINITY);
    for i in 0..v.len() {
        let e = pphi1[i] - phi1[i] + drift.phi2(v[i]) - c1;
        if e > worst.1 {
            worst = (i, e);
        }
    }
    JensenReport {
        hypothesis_ok,
        hypothesis_worst: hyp,
        c1,
        max_excess: worst.1,
        worst_index: worst.0,
        holds: hypothesis_ok && worst.1 <= 1e-9 * (1.0 + c1),
    }
}

pub fn jensen_drift_check(
    p: &DiscreteOperator,
    v: &LyapunovSpec,
    drift: &SubGeoDrift,
    c: f64,
) -> Result<JensenReport> {
    let vals = v.eval_on(p.grid())?;
    Ok(jensen_drift_check_values(p, &vals, drift, c))
}

/// Smallest `c >= 0` with `P(V) <= V - phi(V) + c` on the grid.
pub fn drift_constant(p: &DiscreteOperator, v: &[f64], phi: impl Fn(f64) -> f64) -> f64 {
    let pv = p.apply(v);
    (0..v.len()).map(|i| pv[i] - v[i] + phi(v[i])).fold(0.0, f64::max)
}

/// Inverts `t -> u` with `int_u^upper g = t` for increasing `t`, carrying the
/// last root so that each step only integrates the new piece.
struct IntegralInverter<'a> {
    g: &'a dyn Fn(f64) -> f64,
    /// Last root in log space and the integral from it up to `upper`.
    s: f64,
    acc: f64,
    floor: f64,
}

impl<'a> IntegralInverter<'a> {
    fn new(g: &'a dyn Fn(f64) -> f64, upper: f64) -> Self {
        Self {
            g,
            s: upper.ln(),
            acc: 0.0,
            floor: upper.ln() - 690.0,
        }
    }

    /// `u` for the next `t` (not smaller than the previous one); 0 once the
    /// integral converges below `t` at the floor.
    fn next(&mut self, t: f64) -> Result<f64> {
        if self.acc.is_infinite() {
            return Ok(0.0);
        }
        let need = t - self.acc;
        if need <= 0.0 {
            return Ok(self.s.exp());
        }
        let g = self.g;
        let dens = |s: f64| s.exp() * g(s.exp());
        // Short pieces in log space; panels track the width.
        let piece = |lo: f64, hi: f64| {
            let panels = (((hi - lo) * 16.0).ceil() as usize).max(4);
            gauss_legendre(dens, lo, hi, panels)
        };
        let mut width = 1e-3;
        let mut lo = self.s - width;
        loop {
            lo = lo.max(self.floor);
            if piece(lo, self.s) >= need {
                break;
            }
            if lo <= self.floor {
                self.s = self.floor;
                self.acc = f64::INFINITY;
                return Ok(0.0);
            }
            width *= 2.0;
            lo = self.s - width;
        }
        let hi = self.s;
        // Newton on F(x) = piece(x, hi) - need, which decreases with F'(x) = -dens(x),
        // falling back to bisection whenever a step leaves the bracket.
        let (mut a, mut b) = (lo, hi);
        let mut x = 0.5 * (a + b);
        let mut root = None;
        for _ in 0..200 {
            let f = piece(x, hi) - need;
            if f > 0.0 {
                a = x;
            } else {
                b = x;
            }
            let d = dens(x);
            let newton = if d > 0.0 && d.is_finite() { x + f / d } else { f64::NAN };
            let next = if newton > a && newton < b { newton } else { 0.5 * (a + b) };
            if (next - x).abs() <= 1e-14 * x.abs().max(1.0) || b - a <= 1e-14 {
                root = Some(next);
                break;
            }
            x = next;
        }
        let root = match root {
            Some(r) => r,
            None => bisect(|x| piece(x, hi) - need, a, b, 1e-14)?,
        };
        self.acc += piece(root, hi);
        self.s = root;
        Ok(root.exp())
    }
}

/// Bounds `u_t <= I^{-1}(t)`, `I(u) = int_u^{u0} dv/varsigma(v)`, for `t = 0..=T`.
pub fn ode_majorant(u0: f64, varsigma: &dyn Fn(f64) -> f64, t_max: usize) -> Result<Vec<f64>> {
    if !(u0 > 0.0) {
        return Err(bad("u0", format!("must be positive, got {u0}")));
    }
    let s0 = varsigma(u0);
    if !(s0 > 0.0) || !s0.is_finite() {
        return Err(bad("varsigma", format!("1/varsigma is not integrable at u0: varsigma(u0) = {s0}")));
    }
    let g = |v: f64| 1.0 / varsigma(v);
    let mut inv = IntegralInverter::new(&g, u0);
    let mut out = vec![u0];
    for t in 1..=t_max {
        out.push(inv.next(t as f64)?);
    }
    Ok(out)
}

/// `J_{psi_rho}^{-1}(t)`; `vacuous` when `t <= 0` and the bound is just `iota`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateBound {
    pub value: f64,
    pub vacuous: bool,
}

/// `psi_rho(v) = psi(rho^2 v / (1+rho)^2) / (1+rho)`.
pub fn rescaled_psi(psi: &dyn Fn(f64) -> f64, rho: f64, v: f64) -> f64 {
    psi(rho * rho * v / ((1.0 + rho) * (1.0 + rho))) / (1.0 + rho)
}

/// General convex-rate bound `J_{psi_rho}^{-1}(t)` with `J(u) = int_u^iota dv / psi_rho(v)`.
pub fn general_rate_bound(psi: &dyn Fn(f64) -> f64, rho: f64, iota: f64, t: f64) -> Result<RateBound> {
    if !(rho > 0.0) || !(iota > 0.0) {
        return Err(bad("rho/iota", "both must be positive"));
    }
    if t <= 0.0 {
        return Ok(RateBound {
            value: iota,
            vacuous: true,
        });
    }
    let g = |v: f64| 1.0 / rescaled_psi(psi, rho, v);
    Ok(RateBound {
        value: IntegralInverter::new(&g, iota).next(t)?,
        vacuous: false,
    })
}

/// Shape of the canonical polynomial-drift chain on `{1..n}`: hold with
/// probability `1 - s`, otherwise step down/up with `p_down - p_up = kappa x^{delta-1}`,
/// reflected at both ends. With `regeneration = Some((x_b, q))`, states `x <= x_b`
/// jump to 1 with probability `q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PolyChainSpec {
    pub n: usize,
    pub s: f64,
    pub kappa: f64,
    pub delta: f64,
    pub regeneration: Option<(usize, f64)>,
}

impl Default for PolyChainSpec {
    fn default() -> Self {
        Self {
            n: 200,
            s: 0.5,
            kappa: 0.25,
            delta: 0.5,
            regeneration: None,
        }
    }
}

impl PolyChainSpec {
    /// The certified variant: regeneration from `{x <= 20}` with probability 1/2.
    pub fn certified() -> Self {
        Self {
            regeneration: Some((20, 0.5)),
            ..Self::default()
        }
    }
}

pub fn polynomial_chain(spec: &PolyChainSpec) -> Result<DiscreteOperator> {
    let n = spec.n;
    if n < 2 || !(spec.s > 0.0 && spec.s <= 1.0) || spec.kappa > spec.s {
        return Err(bad("chain", "need n >= 2, s in (0,1] and kappa <= s"));
    }
    let mut rows = vec![vec![0.0; n]; n];
    for (i, row) in rows.iter_mut().enumerate() {
        let x = (i + 1) as f64;
        let d = spec.kappa * x.powf(spec.delta - 1.0);
        let up = (spec.s - d) / 2.0;
        let down = (spec.s + d) / 2.0;
        row[(i + 1).min(n - 1)] += up;
        row[i.saturating_sub(1)] += down;
        row[i] += 1.0 - spec.s;
        if let Some((xb, q)) = spec.regeneration {
            if i < xb {
                row.iter_mut().for_each(|w| *w *= 1.0 - q);
                row[0] += q;
            }
        }
    }
    let grid = Arc::new(GridDomain::lattice(1, n)?);
    DiscreteOperator::from_rows(grid, &rows, 1.0)
}

/// Outcome of the polynomial convergence check.
#[derive(Debug, Clone, Serialize)]
pub struct PolynomialRateReport {
    pub certified: bool,
    pub reason: Option<String>,
    pub c: f64,
    pub c1: f64,
    pub jensen_holds: bool,
    pub r: Option<f64>,
    pub rho: Option<f64>,
    pub alpha1: Option<f64>,
    pub alpha2: Option<f64>,
    pub omega: Option<f64>,
    /// `c_rho^chi = (chi omega)^{-1/chi}`.
    pub c_rho_chi: Option<f64>,
    /// `|||mu P^t|||_{1 + rho phi1(V)}` for `t = 0..=T` (rho = 1 when uncertified).
    pub norms: Vec<f64>,
    /// `||mu P^t||_tv` for `t = 0..=T`.
    pub tv: Vec<f64>,
    pub envelope: Option<Vec<f64>>,
    pub envelope_holds: Option<bool>,
}

/// Admissible `(r, rho)` found by the window search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateWindow {
    pub r: f64,
    pub rho: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub omega: f64,
}

/// `omega(rho) = rho^chi delta_rho / (1+rho)^{1+chi}` with `delta_rho = kappa2 (rho - 2 max(alpha1, alpha2)/r)`.
pub fn omega(drift: &SubGeoDrift, rho: f64, r: f64, alpha1: f64, alpha2: f64) -> f64 {
    let d = drift.kappa2 * (rho - 2.0 * alpha1.max(alpha2) / r);
    rho.powf(drift.chi) * d / (1.0 + rho).powf(1.0 + drift.chi)
}

/// Searches sub-level radii `r` and `rho` for the largest `omega(rho)` subject to
/// `rho max(c, c1) <= min(alpha1, alpha2)` and `delta_rho(r) > 0`. With `rho`
/// fixed, only `r` is searched.
pub fn rate_window(
    p: &DiscreteOperator,
    v: &[f64],
    drift: &SubGeoDrift,
    c: f64,
    c1: f64,
    rho_fixed: Option<f64>,
) -> Option<RateWindow> {
    // phi and phi2 are increasing in V, so both sub-level families are prefixes
    // of the same V-ordering and share one minorization profile.
    let profile = MinorizationProfile::new(p, v);
    let mut radii: Vec<f64> = profile
        .levels
        .iter()
        .flat_map(|l| [drift.phi(*l), drift.phi2(*l)])
        .collect();
    radii.sort_by(|a, b| a.partial_cmp(b).unwrap());
    radii.dedup();
    let cmax = c.max(c1);
    let mut best: Option<RateWindow> = None;
    for &r in &radii {
        let a1 = profile.levels.iter().rposition(|l| drift.phi(*l) <= r).map(|k| profile.alpha[k]);
        let a2 = profile.levels.iter().rposition(|l| drift.phi2(*l) <= r).map(|k| profile.alpha[k]);
        let (a1, a2) = match (a1, a2) {
            (Some(a), Some(b)) if a > 0.0 && b > 0.0 => (a, b),
            _ => continue,
        };
        let lo = 2.0 * a1.max(a2) / r;
        let hi = if cmax > 0.0 { a1.min(a2) / cmax } else { f64::INFINITY };
        let candidates: Vec<f64> = match rho_fixed {
            Some(rho) => vec![rho],
            None => {
                if !(hi > lo) {
                    continue;
                }
                let top = if hi.is_finite() { hi } else { lo * 1e3 + 1.0 };
                (1..=200).map(|k| lo + (top - lo) * k as f64 / 200.0).collect()
            }
        };
        for rho in candidates {
            if !(rho > lo) || rho > hi {
                continue;
            }
            let w = omega(drift, rho, r, a1, a2);
            if w > 0.0 && best.is_none_or(|b| w > b.omega) {
                best = Some(RateWindow {
                    r,
                    rho,
                    alpha1: a1,
                    alpha2: a2,
                    omega: w,
                });
            }
        }
    }
    best
}

/// Runs the hypotheses, the window search and the envelope comparison
/// `|||mu P^t|||_{1+rho phi1(V)} <= c_rho^chi t^{-1/chi} |||mu|||_{1+rho V}`.
pub fn polynomial_rate_check_values(
    p: &DiscreteOperator,
    v: &[f64],
    drift: &SubGeoDrift,
    rho: Option<f64>,
    mu: &MeasureVec,
    t_max: usize,
) -> Result<PolynomialRateReport> {
    let c = drift_constant(p, v, |x| drift.phi(x));
    let jensen = jensen_drift_check_values(p, v, drift, c);
    let window = if jensen.holds {
        rate_window(p, v, drift, c, jensen.c1, rho)
    } else {
        None
    };
    let rho_used = window.map_or(rho.unwrap_or(1.0), |w| w.rho);
    let phi1: Vec<f64> = v.iter().map(|x| drift.phi1(*x)).collect();
    let w1: Vec<f64> = phi1.iter().map(|x| 1.0 + rho_used * x).collect();
    let mut nu = mu.masses.clone();
    let mut norms = vec![v_norm_values(&nu, &w1)];
    let mut tv = vec![nu.iter().map(|x| x.abs()).sum::<f64>() / 2.0];
    for _ in 0..t_max {
        nu = p.act(&nu);
        norms.push(v_norm_values(&nu, &w1));
        tv.push(nu.iter().map(|x| x.abs()).sum::<f64>() / 2.0);
    }
    let reason = if !jensen.hypothesis_ok {
        Some(format!(
            "drift hypothesis fails at grid index {} by {}",
            jensen.hypothesis_worst.0, jensen.hypothesis_worst.1
        ))
    } else if !jensen.holds {
        Some(format!("Jensen transfer fails at grid index {} by {}", jensen.worst_index, jensen.max_excess))
    } else if window.is_none() {
        Some("admissible (r, rho) window is empty".into())
    } else {
        None
    };
    let (envelope, envelope_holds, c_rho_chi) = match window {
        Some(w) => {
            let cr = (drift.chi * w.omega).powf(-1.0 / drift.chi);
            let base: Vec<f64> = v.iter().map(|x| 1.0 + w.rho * x).collect();
            let m0 = v_norm_values(&mu.masses, &base);
            let env: Vec<f64> = (0..=t_max)
                .map(|t| if t == 0 { f64::INFINITY } else { cr * (t as f64).powf(-1.0 / drift.chi) * m0 })
                .collect();
            let holds = (1..=t_max).all(|t| norms[t] <= env[t] * (1.0 + 1e-12));
            (Some(env), Some(holds), Some(cr))
        }
        None => (None, None, None),
    };
    Ok(PolynomialRateReport {
        certified: window.is_some(),
        reason,
        c,
        c1: jensen.c1,
        jensen_holds: jensen.holds,
        r: window.map(|w| w.r),
        rho: window.map(|w| w.rho),
        alpha1: window.map(|w| w.alpha1),
        alpha2: window.map(|w| w.alpha2),
        omega: window.map(|w| w.omega),
        c_rho_chi,
        norms,
        tv,
        envelope,
        envelope_holds,
    })
}

pub fn polynomial_rate_check(
    p: &DiscreteOperator,
    v: &LyapunovSpec,
    drift: &SubGeoDrift,
    rho: Option<f64>,
    mu: &MeasureVec,
    t_max: usize,
) -> Result<PolynomialRateReport> {
    let vals = v.eval_on(p.grid())?;
    polynomial_rate_check_values(p, &vals, drift, rho, mu, t_max)
}

/// Log-log slope of `values[t]` over `t in [lo, hi]`.
pub fn loglog_slope(values: &[f64], lo: usize, hi: usize) -> Result<f64> {
    let (x, y): (Vec<f64>, Vec<f64>) = (lo.max(1)..=hi.min(values.len() - 1))
        .filter(|&t| values[t] > 0.0)
        .map(|t| ((t as f64).ln(), values[t].ln()))
        .unzip();
    Ok(fit_line(&x, &y)?.0)
}

/// Zero-mass measure `eta0 - delta_1` with `eta0 ∝ x^{-a}` on the chain's lattice.
pub fn power_tail_measure(p: &DiscreteOperator, a: f64) -> Result<MeasureVec> {
    let grid = p.grid_arc().clone();
    let w: Vec<f64> = grid.xs().iter().map(|x| x.powf(-a)).collect();
    let s: f64 = w.iter().sum();
    let mut masses: Vec<f64> = w.iter().map(|x| x / s).collect();
    masses[0] -= 1.0;
    MeasureVec::new(grid, masses)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prototype_constants() {
        let d = prototype_drift(0.5, 0.5, 1.0, 1.0).unwrap();
        assert!((d.chi - 2.0).abs() < 1e-15);
        assert!((d.kappa2 - 0.75).abs() < 1e-15);
    }

    #[test]
    fn family_gives_integer_rates() {
        for (n, i) in [(4, 2), (4, 3), (5, 4)] {
            let (de, up) = polynomial_family(n, i).unwrap();
            let d = prototype_drift(de, up, 1.0, 1.0).unwrap();
            assert!((1.0 / d.chi - (i - 1) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn majorant_closed_form() {
        let b = ode_majorant(1.0, &|v| v * v, 9).unwrap();
        assert!((b[9] - 0.1).abs() < 1e-10);
        assert_eq!(b[0], 1.0);
    }

    #[test]
    fn general_bound_closed_form() {
        let b = general_rate_bound(&|v| v * v, 1.0, 1.0, 32.0).unwrap();
        assert!((b.value - 0.5).abs() < 1e-8);
    }
}
