use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{bad, Error, Result};

/// Step for central-difference gradients of user surfaces.
pub const FD_GRAD_STEP: f64 = 1e-5;
/// Step for central-difference Hessians. Larger than the gradient step so
/// rounding (~eps/h^2) stays below 1e-8.
pub const FD_HESS_STEP: f64 = 1e-4;

/// One monomial `coef * prod_j theta_j^powers[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Monomial {
    pub coef: f64,
    pub powers: Vec<u32>,
}

/// Height function of a Monge chart.
#[derive(Clone)]
pub enum Height {
    /// Polynomial with exact derivatives.
    Polynomial(Vec<Monomial>),
    /// `scale * sqrt(theta)` in one variable, exact derivatives.
    Sqrt { scale: f64 },
    /// Arbitrary callback; derivatives by central differences.
    Custom(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

impl fmt::Debug for Height {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Height::Polynomial(t) => f.debug_tuple("Polynomial").field(t).finish(),
            Height::Sqrt { scale } => f.debug_struct("Sqrt").field("scale", scale).finish(),
            Height::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

fn pow_u(x: f64, p: u32) -> f64 {
    if p == 0 {
        1.0
    } else {
        x.powi(p as i32)
    }
}

impl Height {
    fn value(&self, th: &[f64]) -> f64 {
        match self {
            Height::Polynomial(terms) => terms
                .iter()
                .map(|m| m.coef * m.powers.iter().zip(th).map(|(&p, &x)| pow_u(x, p)).product::<f64>())
                .sum(),
            Height::Sqrt { scale } => scale * th[0].sqrt(),
            Height::Custom(f) => f(th),
        }
    }

    fn gradient(&self, th: &[f64]) -> Vec<f64> {
        let d = th.len();
        match self {
            Height::Polynomial(terms) => (0..d)
                .map(|i| {
                    terms
                        .iter()
                        .filter(|m| m.powers[i] > 0)
                        .map(|m| {
                            let mut v = m.coef * m.powers[i] as f64;
                            for (j, (&p, &x)) in m.powers.iter().zip(th).enumerate() {
                                v *= if j == i { pow_u(x, p - 1) } else { pow_u(x, p) };
                            }
                            v
                        })
                        .sum()
                })
                .collect(),
            Height::Sqrt { scale } => vec![scale / (2.0 * th[0].sqrt())],
            Height::Custom(f) => {
                let h = FD_GRAD_STEP;
                (0..d)
                    .map(|i| {
                        let mut p = th.to_vec();
                        let mut m = th.to_vec();
                        p[i] += h;
                        m[i] -= h;
                        (f(&p) - f(&m)) / (2.0 * h)
                    })
                    .collect()
            }
        }
    }

    fn hessian(&self, th: &[f64]) -> DMatrix<f64> {
        let d = th.len();
        match self {
            Height::Polynomial(terms) => DMatrix::from_fn(d, d, |i, k| {
                terms
                    .iter()
                    .map(|m| {
                        let mut pw = m.powers.clone();
                        let mut c = m.coef;
                        for idx in [i, k] {
                            if pw[idx] == 0 {
                                return 0.0;
                            }
                            c *= pw[idx] as f64;
                            pw[idx] -= 1;
                        }
                        c * pw.iter().zip(th).map(|(&p, &x)| pow_u(x, p)).product::<f64>()
                    })
                    .sum()
            }),
            Height::Sqrt { scale } => DMatrix::from_element(1, 1, -scale / (4.0 * th[0].powf(1.5))),
            Height::Custom(f) => {
                let h = FD_HESS_STEP;
                let at = |di: f64, i: usize, dk: f64, k: usize| {
                    let mut p = th.to_vec();
                    p[i] += di;
                    p[k] += dk;
                    f(&p)
                };
                DMatrix::from_fn(d, d, |i, k| {
                    if i == k {
                        let mut p = th.to_vec();
                        let mut m = th.to_vec();
                        p[i] += h;
                        m[i] -= h;
                        (f(&p) - 2.0 * f(th) + f(&m)) / (h * h)
                    } else {
                        (at(h, i, h, k) - at(h, i, -h, k) - at(-h, i, h, k) + at(-h, i, -h, k)) / (4.0 * h * h)
                    }
                })
            }
        }
    }
}

/// Boundary piece given as a graph over a box: the point `psi(theta)` has
/// coordinate `axis` equal to `phi(theta)` and the remaining coordinates equal
/// to `theta` in order.
///
/// The unit normal is `N = orientation * (grad phi, -1) / sqrt(1 + |grad phi|^2)`
/// (components placed the same way). With `orientation = +1` and the default
/// last axis, `N` points out of the epigraph `E = {x_n > phi(x_{-n})}`.
#[derive(Debug, Clone)]
pub struct MongeSurface {
    pub name: String,
    n: usize,
    axis: usize,
    orientation: f64,
    chart: Vec<(f64, f64)>,
    phi: Height,
}

/// Frame and fundamental forms at one chart point.
#[derive(Debug, Clone)]
pub struct BoundaryFrame {
    pub theta: Vec<f64>,
    pub point: DVector<f64>,
    pub tangents: Vec<DVector<f64>>,
    pub normal: DVector<f64>,
    pub g: DMatrix<f64>,
    pub omega: DMatrix<f64>,
    /// Shape matrix `g^{-1} Omega`.
    pub w: DMatrix<f64>,
    pub grad_phi: Vec<f64>,
}

impl BoundaryFrame {
    /// Eigenvalues of the shape matrix (principal curvatures), ascending.
    pub fn principal_curvatures(&self) -> Vec<f64> {
        let d = self.g.nrows();
        if d == 1 {
            return vec![self.w[(0, 0)]];
        }
        // g^{-1} Omega is similar to L^{-1} Omega L^{-T} with g = L L'.
        let l = self.g.clone().cholesky().expect("metric is positive definite").l();
        let li = l.try_inverse().expect("cholesky factor invertible");
        let s = &li * &self.omega * li.transpose();
        let s = (&s + s.transpose()) * 0.5;
        let mut ev: Vec<f64> = s.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn det_g(&self) -> f64 {
        self.g.determinant()
    }

    /// `det(I - u W)`.
    pub fn offset_det(&self, u: f64) -> f64 {
        let d = self.w.nrows();
        (DMatrix::identity(d, d) - &self.w * u).determinant()
    }
}

impl MongeSurface {
    pub fn new(n: usize, axis: usize, orientation: f64, chart: Vec<(f64, f64)>, phi: Height) -> Result<Self> {
        if !(n == 2 || n == 3) {
            return Err(bad("n", format!("ambient dimension must be 2 or 3, got {n}")));
        }
        if axis >= n {
            return Err(bad("axis", format!("graph axis {axis} out of range for n={n}")));
        }
        if orientation != 1.0 && orientation != -1.0 {
            return Err(bad("orientation", format!("must be +1 or -1, got {orientation}")));
        }
        if chart.len() != n - 1 || chart.iter().any(|&(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return Err(bad("chart", format!("need {} finite intervals with lo < hi, got {chart:?}", n - 1)));
        }
        if let Height::Polynomial(terms) = &phi {
            if let Some(m) = terms.iter().find(|m| m.powers.len() != n - 1 || !m.coef.is_finite()) {
                return Err(bad("terms", format!("monomial {m:?} must be finite with {} powers", n - 1)));
            }
        }
        if let Height::Sqrt { .. } = &phi {
            if n != 2 || chart[0].0 < 0.0 {
                return Err(bad("chart", "sqrt height needs n = 2 and a chart in [0, inf)"));
            }
        }
        Ok(Self {
            name: "custom".into(),
            n,
            axis,
            orientation,
            chart,
            phi,
        })
    }

    /// Graph `x_n = phi(x_{-n})` of a polynomial, normal oriented out of the epigraph.
    pub fn polynomial(n: usize, terms: Vec<Monomial>, chart: Vec<(f64, f64)>, orientation: f64) -> Result<Self> {
        Self::new(n, n - 1, orientation, chart, Height::Polynomial(terms))
    }

    pub fn with_name(mut self, name: &str) -> Self {
        self.name = name.into();
        self
    }

    /// Same chart with the normal reversed.
    pub fn flipped(&self) -> Self {
        let mut s = self.clone();
        s.orientation = -s.orientation;
        s
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn axis(&self) -> usize {
        self.axis
    }

    pub fn orientation(&self) -> f64 {
        self.orientation
    }

    pub fn chart(&self) -> &[(f64, f64)] {
        &self.chart
    }

    pub fn height(&self) -> &Height {
        &self.phi
    }

    /// Named fixture: `parabola`, `paraboloid`, `flat`, or `parabola_atlas`
    /// (its central chart; see [`Atlas::fixture`] for the full atlas).
    pub fn fixture(name: &str) -> Result<Self> {
        let name = canonical_fixture(name);
        let mono = |coef: f64, powers: Vec<u32>| Monomial { coef, powers };
        let s = match name {
            "parabola" => Self::polynomial(2, vec![mono(1.0, vec![2])], vec![(-3.0, 3.0)], 1.0)?,
            "paraboloid" => Self::polynomial(
                3,
                vec![mono(1.0, vec![2, 0]), mono(1.0, vec![0, 2])],
                vec![(-2.0, 2.0), (-2.0, 2.0)],
                1.0,
            )?,
            "flat" => Self::polynomial(2, vec![], vec![(-10.0, 10.0)], 1.0)?,
            "parabola_atlas" => atlas_central(),
            _ => {
                return Err(Error::Unknown {
                    name: name.into(),
                    available: SURFACE_FIXTURES.join(", "),
                })
            }
        };
        Ok(s.with_name(name))
    }

    pub fn in_chart(&self, theta: &[f64]) -> bool {
        theta.len() == self.n - 1 && theta.iter().zip(&self.chart).all(|(&t, &(a, b))| t >= a && t <= b)
    }

    fn check(&self, theta: &[f64]) -> Result<()> {
        if self.in_chart(theta) {
            Ok(())
        } else {
            Err(Error::OutsideChart(format!("theta {theta:?} not in {:?} of `{}`", self.chart, self.name)))
        }
    }

    /// Embeds chart coordinates plus a value on the graph axis.
    fn embed(&self, theta: &[f64], val: f64) -> DVector<f64> {
        let mut out = DVector::zeros(self.n);
        let mut it = theta.iter();
        for i in 0..self.n {
            out[i] = if i == self.axis { val } else { *it.next().unwrap() };
        }
        out
    }

    /// Chart coordinates of an ambient point (drops the graph axis).
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        x.iter().enumerate().filter(|&(i, _)| i != self.axis).map(|(_, &v)| v).collect()
    }

    /// Height of the ambient point above the graph along the graph axis.
    pub fn graph_offset(&self, x: &[f64]) -> f64 {
        x[self.axis] - self.phi.value(&self.project(x))
    }

    pub fn psi(&self, theta: &[f64]) -> Result<DVector<f64>> {
        self.check(theta)?;
        Ok(self.embed(theta, self.phi.value(theta)))
    }

    pub fn phi_value(&self, theta: &[f64]) -> f64 {
        self.phi.value(theta)
    }

    pub fn phi_gradient(&self, theta: &[f64]) -> Vec<f64> {
        self.phi.gradient(theta)
    }

    pub fn phi_hessian(&self, theta: &[f64]) -> DMatrix<f64> {
        self.phi.hessian(theta)
    }

    /// Tangents, unit normal, metric, second fundamental form and shape matrix at `theta`.
    pub fn frame(&self, theta: &[f64]) -> Result<BoundaryFrame> {
        self.check(theta)?;
        let d = self.n - 1;
        let grad = self.phi.gradient(theta);
        let hess = self.phi.hessian(theta);
        if grad.iter().any(|v| !v.is_finite()) || hess.iter().any(|v| !v.is_finite()) {
            return Err(Error::OutsideChart(format!("height not differentiable at {theta:?}")));
        }
        let norm2: f64 = grad.iter().map(|v| v * v).sum();
        let root = (1.0 + norm2).sqrt();
        let tangents: Vec<DVector<f64>> = (0..d)
            .map(|i| {
                let mut e = vec![0.0; d];
                e[i] = 1.0;
                self.embed(&e, grad[i])
            })
            .collect();
        let normal = self.embed(&grad, -1.0) * (self.orientation / root);
        let gv = DVector::from_column_slice(&grad);
        let g = DMatrix::identity(d, d) + &gv * gv.transpose();
        let omega = &hess * (-self.orientation / root);
        let w = g.clone().try_inverse().ok_or_else(|| Error::Integration("singular metric".into()))? * &omega;
        Ok(BoundaryFrame {
            theta: theta.to_vec(),
            point: self.embed(theta, self.phi.value(theta)),
            tangents,
            normal,
            g,
            omega,
            w,
            grad_phi: grad,
        })
    }

    /// `max_i |d_i N + sum_k W_{k,i} T_k|` with `d_i N` by central differences.
    pub fn weingarten_residual(&self, theta: &[f64], step: f64) -> Result<f64> {
        let fr = self.frame(theta)?;
        let d = self.n - 1;
        let mut worst: f64 = 0.0;
        for i in 0..d {
            let mut p = theta.to_vec();
            let mut m = theta.to_vec();
            p[i] += step;
            m[i] -= step;
            let dn = (self.frame(&p)?.normal - self.frame(&m)?.normal) / (2.0 * step);
            let mut r = dn;
            for k in 0..d {
                r += &fr.tangents[k] * fr.w[(k, i)];
            }
            worst = worst.max(r.norm());
        }
        Ok(worst)
    }

    /// Map `(theta, u) -> psi(theta) + u N(theta)`.
    pub fn offset_point(&self, theta: &[f64], u: f64) -> Result<DVector<f64>> {
        let fr = self.frame(theta)?;
        Ok(fr.point + fr.normal * u)
    }

    /// Integral of `f(theta)` over the chart box by tensor Gauss-Legendre with
    /// `panels` cells per axis. Cells are evaluated in parallel and summed in a
    /// fixed order.
    pub fn chart_integral<F>(&self, panels: usize, f: F) -> f64
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        box_integral(&self.chart, panels, f)
    }

    /// Uniform lattice of `k` points per axis strictly inside the chart.
    pub fn lattice(&self, k: usize) -> Vec<Vec<f64>> {
        let axis = |&(a, b): &(f64, f64)| -> Vec<f64> {
            (0..k).map(|i| a + (b - a) * (i as f64 + 0.5) / k as f64).collect()
        };
        match self.n {
            2 => axis(&self.chart[0]).into_iter().map(|t| vec![t]).collect(),
            _ => {
                let (xs, ys) = (axis(&self.chart[0]), axis(&self.chart[1]));
                xs.iter().flat_map(|&x| ys.iter().map(move |&y| vec![x, y])).collect()
            }
        }
    }
}

const GL_NODES: [f64; 5] = [
    0.0,
    -0.538_469_310_105_683_1,
    0.538_469_310_105_683_1,
    -0.906_179_845_938_664,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_08,
    0.236_926_885_056_189_08,
];

/// Tensor Gauss-Legendre over a 1- or 2-dimensional box.
pub(crate) fn box_integral<F>(bx: &[(f64, f64)], panels: usize, f: F) -> f64
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let panels = panels.max(1);
    let d = bx.len();
    let cells = panels.pow(d as u32);
    let parts: Vec<f64> = (0..cells)
        .into_par_iter()
        .map(|c| {
            let mut idx = [c % panels, c / panels];
            if d == 1 {
                idx[1] = 0;
            }
            let geo: Vec<(f64, f64)> = (0..d)
                .map(|j| {
                    let (a, b) = bx[j];
                    let h = (b - a) / panels as f64;
                    (a + h * (idx[j] as f64 + 0.5), h / 2.0)
                })
                .collect();
            let mut s = 0.0;
            let mut th = vec![0.0; d];
            if d == 1 {
                for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
                    th[0] = geo[0].0 + geo[0].1 * x;
                    s += w * f(&th);
                }
                s * geo[0].1
            } else {
                for (x, wx) in GL_NODES.iter().zip(GL_WEIGHTS) {
                    for (y, wy) in GL_NODES.iter().zip(GL_WEIGHTS) {
                        th[0] = geo[0].0 + geo[0].1 * x;
                        th[1] = geo[1].0 + geo[1].1 * y;
                        s += wx * wy * f(&th);
                    }
                }
                s * geo[0].1 * geo[1].1
            }
        })
        .collect();
    parts.iter().sum()
}

pub const SURFACE_FIXTURES: [&str; 4] = ["parabola", "paraboloid", "parabola_atlas", "flat"];

/// Alternate name accepted for the parabola atlas.
fn canonical_fixture(name: &str) -> &str {
    match name {
        "graph_example_8_4" => "parabola_atlas",
        other => other,
    }
}

fn atlas_central() -> MongeSurface {
    MongeSurface::polynomial(2, vec![Monomial { coef: 1.0, powers: vec![2] }], vec![(-2.0, 2.0)], 1.0)
        .expect("valid fixture")
        .with_name("parabola_atlas/psi0")
}

/// Upper end of the side charts of the parabola atlas (in the `x_2` coordinate).
pub const ATLAS_SIDE_TOP: f64 = 9.0;

/// Side chart `theta -> (-eps sqrt(theta), theta)` of the parabola `x_2 = x_1^2`
/// on `theta in (1, ATLAS_SIDE_TOP)`, oriented like the central chart.
pub fn atlas_side_chart(eps: f64) -> Result<MongeSurface> {
    if eps != 1.0 && eps != -1.0 {
        return Err(bad("eps", "side chart index must be +1 or -1"));
    }
    Ok(MongeSurface::new(2, 0, eps, vec![(1.0, ATLAS_SIDE_TOP)], Height::Sqrt { scale: -eps })?
        .with_name(if eps > 0.0 { "parabola_atlas/psi+" } else { "parabola_atlas/psi-" }))
}

fn bump(s: f64) -> f64 {
    if s <= 0.0 || s >= 1.0 {
        0.0
    } else {
        (-1.0 / (s * (1.0 - s))).exp()
    }
}

/// Charts covering one surface together with a smooth partition of unity.
///
/// Chart `i` gets the raw weight `prod_j bump((theta_j - a_j)/(b_j - a_j))` at
/// points lying on its graph; weights are normalised over charts.
#[derive(Debug, Clone)]
pub struct Atlas {
    pub name: String,
    pub charts: Vec<MongeSurface>,
}

impl Atlas {
    pub fn new(name: &str, charts: Vec<MongeSurface>) -> Result<Self> {
        if charts.is_empty() {
            return Err(bad("charts", "atlas needs at least one chart"));
        }
        if charts.iter().any(|c| c.n != charts[0].n) {
            return Err(bad("charts", "charts must share the ambient dimension"));
        }
        Ok(Self {
            name: name.into(),
            charts,
        })
    }

    pub fn fixture(name: &str) -> Result<Self> {
        let name = canonical_fixture(name);
        if name == "parabola_atlas" {
            return Self::new(
                name,
                vec![atlas_central(), atlas_side_chart(1.0)?, atlas_side_chart(-1.0)?],
            );
        }
        Self::new(name, vec![MongeSurface::fixture(name)?])
    }

    fn on_chart(c: &MongeSurface, x: &[f64]) -> Option<Vec<f64>> {
        let th = c.project(x);
        if !c.in_chart(&th) {
            return None;
        }
        let scale = 1.0 + x.iter().map(|v| v.abs()).fold(0.0, f64::max);
        (c.graph_offset(x).abs() <= 1e-9 * scale).then_some(th)
    }

    fn raw_weight(c: &MongeSurface, th: &[f64]) -> f64 {
        th.iter().zip(&c.chart).map(|(&t, &(a, b))| bump((t - a) / (b - a))).product()
    }

    /// Partition-of-unity weights at a surface point, one per chart.
    pub fn weights(&self, x: &[f64]) -> Vec<f64> {
        let coords: Vec<Option<Vec<f64>>> = self.charts.iter().map(|c| Self::on_chart(c, x)).collect();
        let raw: Vec<f64> = self
            .charts
            .iter()
            .zip(&coords)
            .map(|(c, th)| th.as_ref().map_or(0.0, |t| Self::raw_weight(c, t)))
            .collect();
        let total: f64 = raw.iter().sum();
        if total > 0.0 {
            return raw.iter().map(|w| w / total).collect();
        }
        // Bumps underflow at chart edges; fall back to the charts containing x.
        let k = coords.iter().filter(|c| c.is_some()).count().max(1) as f64;
        coords.iter().map(|c| if c.is_some() { 1.0 / k } else { 0.0 }).collect()
    }

    /// `int f dsigma` over the union of the charts, split by the partition of unity.
    pub fn surface_integral<F>(&self, panels: usize, f: F) -> Result<f64>
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let mut total = 0.0;
        for (i, c) in self.charts.iter().enumerate() {
            total += c.chart_integral(panels, |th| {
                let Ok(fr) = c.frame(th) else { return 0.0 };
                let x: Vec<f64> = fr.point.iter().copied().collect();
                let w = self.weights(&x)[i];
                if w == 0.0 {
                    0.0
                } else {
                    w * f(&x) * fr.det_g().sqrt()
                }
            });
        }
        if total.is_finite() {
            Ok(total)
        } else {
            Err(Error::Integration("non-finite surface integral".into()))
        }
    }

    /// Principal curvatures at a surface point from every chart containing it,
    /// and the largest disagreement between charts.
    pub fn curvature_agreement(&self, x: &[f64]) -> Result<ChartAgreement> {
        let mut per_chart = vec![];
        for c in &self.charts {
            if let Some(th) = Self::on_chart(c, x) {
                per_chart.push((c.name.clone(), c.frame(&th)?.principal_curvatures()));
            }
        }
        if per_chart.is_empty() {
            return Err(Error::OutsideChart(format!("{x:?} lies on no chart of `{}`", self.name)));
        }
        let mut spread = 0.0f64;
        for (_, k) in &per_chart[1..] {
            for (a, b) in k.iter().zip(&per_chart[0].1) {
                spread = spread.max((a - b).abs());
            }
        }
        Ok(ChartAgreement {
            point: x.to_vec(),
            per_chart,
            spread,
        })
    }
}

/// Output of [`Atlas::curvature_agreement`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChartAgreement {
    pub point: Vec<f64>,
    pub per_chart: Vec<(String, Vec<f64>)>,
    pub spread: f64,
}

/// Config form of a surface: a named fixture or a polynomial graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SurfaceSpec {
    Fixture {
        name: String,
    },
    Polynomial {
        n: usize,
        terms: Vec<Monomial>,
        chart: Vec<(f64, f64)>,
        #[serde(default = "one")]
        orientation: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl SurfaceSpec {
    pub fn build(&self) -> Result<MongeSurface> {
        match self {
            SurfaceSpec::Fixture { name } => MongeSurface::fixture(name),
            SurfaceSpec::Polynomial {
                n,
                terms,
                chart,
                orientation,
            } => MongeSurface::polynomial(*n, terms.clone(), chart.clone(), *orientation),
        }
    }
}
