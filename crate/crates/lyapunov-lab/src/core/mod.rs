//! Measures, functions, norms and the Boltzmann-Gibbs transform on grids.
//!
//! Measures are atom masses at grid points, so the total variation and V-norms
//! are plain weighted sums. Densities are turned into masses by multiplying the
//! cell weights once, at construction.

mod grid;
mod lyapunov;

use std::sync::Arc;

pub use grid::GridDomain;
pub use lyapunov::{box_distance, diverges_at_edges, vanishes_at_edges, LyapunovSpec};

use crate::error::{Error, Result};
use crate::kernels::DiscreteOperator;

fn same_grid(a: &Arc<GridDomain>, b: &Arc<GridDomain>) -> Result<()> {
    if Arc::ptr_eq(a, b) || a == b {
        Ok(())
    } else {
        Err(Error::GridMismatch {
            expected: a.len(),
            got: b.len(),
        })
    }
}

fn check_len(grid: &GridDomain, v: &[f64]) -> Result<()> {
    if v.len() != grid.len() {
        return Err(Error::GridMismatch {
            expected: grid.len(),
            got: v.len(),
        });
    }
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite { index: i });
    }
    Ok(())
}

/// Signed measure given by its atom masses on a grid.
#[derive(Debug, Clone)]
pub struct MeasureVec {
    pub masses: Vec<f64>,
    pub grid: Arc<GridDomain>,
}

impl MeasureVec {
    pub fn new(grid: Arc<GridDomain>, masses: Vec<f64>) -> Result<Self> {
        check_len(&grid, &masses)?;
        Ok(Self { masses, grid })
    }

    pub fn zeros(grid: Arc<GridDomain>) -> Self {
        let n = grid.len();
        Self {
            masses: vec![0.0; n],
            grid,
        }
    }

    pub fn dirac(grid: Arc<GridDomain>, i: usize) -> Self {
        let mut m = Self::zeros(grid);
        m.masses[i] = 1.0;
        m
    }

    /// Masses `density(x_i) * w_i`.
    pub fn from_density(grid: Arc<GridDomain>, density: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let masses = (0..grid.len()).map(|i| density(grid.point(i)) * grid.weight(i)).collect();
        Self::new(grid, masses)
    }

    /// Normalized reference (Lebesgue) measure of the grid.
    pub fn uniform(grid: Arc<GridDomain>) -> Self {
        let vol: f64 = grid.weights().iter().sum();
        let masses = grid.weights().iter().map(|w| w / vol).collect();
        Self { masses, grid }
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// `mu(f)`.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.masses.iter().zip(f).map(|(m, v)| m * v).sum()
    }

    pub fn sub(&self, other: &MeasureVec) -> Result<MeasureVec> {
        same_grid(&self.grid, &other.grid)?;
        let masses = self.masses.iter().zip(&other.masses).map(|(a, b)| a - b).collect();
        Ok(MeasureVec {
            masses,
            grid: self.grid.clone(),
        })
    }

    pub fn scaled(&self, c: f64) -> MeasureVec {
        MeasureVec {
            masses: self.masses.iter().map(|m| m * c).collect(),
            grid: self.grid.clone(),
        }
    }

    pub fn is_probability(&self, tol: f64) -> bool {
        self.masses.iter().all(|m| *m >= -tol) && (self.total_mass() - 1.0).abs() <= tol
    }

    /// Renormalized copy; errors when the total mass is not positive.
    pub fn normalized(&self) -> Result<MeasureVec> {
        let m = self.total_mass();
        if !(m > 0.0) {
            return Err(Error::DegenerateNormalization { mass: m });
        }
        Ok(self.scaled(1.0 / m))
    }

    /// Mass density `m_i / w_i` at each grid point.
    pub fn density(&self) -> Vec<f64> {
        self.masses.iter().zip(self.grid.weights()).map(|(m, w)| m / w).collect()
    }
}

/// Function given by its values on a grid.
#[derive(Debug, Clone)]
pub struct FunctionVec {
    pub values: Vec<f64>,
    pub grid: Arc<GridDomain>,
}

impl FunctionVec {
    pub fn new(grid: Arc<GridDomain>, values: Vec<f64>) -> Result<Self> {
        check_len(&grid, &values)?;
        Ok(Self { values, grid })
    }

    pub fn from_fn(grid: Arc<GridDomain>, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = (0..grid.len()).map(|i| f(grid.point(i))).collect();
        Self::new(grid, values)
    }

    pub fn constant(grid: Arc<GridDomain>, c: f64) -> Self {
        let n = grid.len();
        Self {
            values: vec![c; n],
            grid,
        }
    }

    pub fn from_lyapunov(grid: Arc<GridDomain>, v: &LyapunovSpec) -> Result<Self> {
        let values = v.eval_on(&grid)?;
        Self::new(grid, values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }
}

/// `||mu||_tv = |mu|(E) / 2`.
pub fn tv_norm(mu: &MeasureVec) -> f64 {
    mu.masses.iter().map(|m| m.abs()).sum::<f64>() / 2.0
}

/// Total variation distance between two measures on the same grid.
pub fn tv_distance(a: &MeasureVec, b: &MeasureVec) -> Result<f64> {
    Ok(tv_norm(&a.sub(b)?))
}

/// `|||mu|||_V = |mu|(V)` for precomputed values of V.
pub fn v_norm_values(masses: &[f64], v: &[f64]) -> f64 {
    masses.iter().zip(v).map(|(m, v)| m.abs() * v).sum()
}

/// `|||mu|||_V = |mu|(V)`.
pub fn v_norm_measure(mu: &MeasureVec, v: &LyapunovSpec) -> Result<f64> {
    let vals = v.eval_on(&mu.grid)?;
    Ok(v_norm_values(&mu.masses, &vals))
}

/// `|||Q|||_V = sup_x Q(V)(x) / V(x)` for a nonnegative operator.
pub fn v_operator_norm(q: &DiscreteOperator, v: &LyapunovSpec) -> Result<f64> {
    let vals = v.eval_on(q.grid())?;
    Ok(v_operator_norm_values(q, &vals))
}

pub fn v_operator_norm_values(q: &DiscreteOperator, v: &[f64]) -> f64 {
    let qv = q.apply(v);
    qv.iter().zip(v).map(|(a, b)| a / b).fold(0.0, f64::max)
}

/// Boltzmann-Gibbs transform `Psi_h(mu)(dx) = h(x) mu(dx) / mu(h)`.
///
/// The result is renormalized as a last step so its total mass is 1 up to a
/// single rounding.
pub fn boltzmann_gibbs(h: &FunctionVec, mu: &MeasureVec) -> Result<MeasureVec> {
    same_grid(&h.grid, &mu.grid)?;
    let weighted: Vec<f64> = mu.masses.iter().zip(&h.values).map(|(m, h)| m * h).collect();
    let z: f64 = weighted.iter().sum();
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::DegenerateNormalization { mass: z });
    }
    let mut masses: Vec<f64> = weighted.iter().map(|w| w / z).collect();
    let s: f64 = masses.iter().sum();
    for m in &mut masses {
        *m /= s;
    }
    Ok(MeasureVec {
        masses,
        grid: mu.grid.clone(),
    })
}

/// Coupling characterization of the total variation distance: returns
/// `(true, nu)` with `nu = (mu1 ^ mu2) / mass` iff `||mu1 - mu2||_tv <= 1 - eps`.
/// The witness then satisfies `mu_i >= eps * nu` entrywise.
pub fn coupling_equivalence(
    mu1: &MeasureVec,
    mu2: &MeasureVec,
    eps: f64,
) -> Result<(bool, Option<MeasureVec>)> {
    same_grid(&mu1.grid, &mu2.grid)?;
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(crate::error::bad("eps", format!("must lie in (0,1], got {eps}")));
    }
    for (name, m) in [("mu1", mu1), ("mu2", mu2)] {
        if !m.is_probability(1e-12) {
            return Err(Error::NotProbability(format!("{name} has mass {}", m.total_mass())));
        }
    }
    let tv = tv_distance(mu1, mu2)?;
    if tv > 1.0 - eps + 1e-12 {
        return Ok((false, None));
    }
    let overlap: Vec<f64> = mu1.masses.iter().zip(&mu2.masses).map(|(a, b)| a.min(*b).max(0.0)).collect();
    let mass: f64 = overlap.iter().sum();
    if !(mass > 0.0) {
        return Ok((false, None));
    }
    let nu = MeasureVec {
        masses: overlap.iter().map(|o| o / mass).collect(),
        grid: mu1.grid.clone(),
    };
    Ok((true, Some(nu)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(n: usize) -> Arc<GridDomain> {
        Arc::new(GridDomain::uniform(0.0, 1.0, n).unwrap())
    }

    #[test]
    fn tv_of_signed_vector() {
        let mu = MeasureVec::new(g(3), vec![0.3, -0.7, 0.4]).unwrap();
        assert!((tv_norm(&mu) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn tv_of_two_diracs() {
        let grid = g(5);
        let d = MeasureVec::dirac(grid.clone(), 1).sub(&MeasureVec::dirac(grid, 3)).unwrap();
        assert_eq!(tv_norm(&d), 1.0);
    }

    #[test]
    fn v_norm_half_is_tv() {
        let mu = MeasureVec::new(g(3), vec![0.3, -0.7, 0.4]).unwrap();
        assert!((v_norm_measure(&mu, &LyapunovSpec::half()).unwrap() - tv_norm(&mu)).abs() < 1e-15);
    }

    #[test]
    fn v_norm_of_dirac_at_two() {
        let grid = Arc::new(GridDomain::uniform(0.0, 4.0, 5).unwrap());
        let mu = MeasureVec::dirac(grid, 2);
        assert_eq!(v_norm_measure(&mu, &LyapunovSpec::Poly(2.0)).unwrap(), 5.0);
    }

    #[test]
    fn boltzmann_gibbs_ratio() {
        let grid = g(2);
        let mu = MeasureVec::new(grid.clone(), vec![1.0, 1.0]).unwrap();
        let h = FunctionVec::new(grid, vec![1.0, 3.0]).unwrap();
        let out = boltzmann_gibbs(&h, &mu).unwrap();
        assert!((out.masses[0] - 0.25).abs() < 1e-15);
        assert!((out.masses[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn boltzmann_gibbs_degenerate() {
        let grid = g(2);
        let mu = MeasureVec::new(grid.clone(), vec![1.0, -1.0]).unwrap();
        let h = FunctionVec::constant(grid, 1.0);
        assert!(matches!(boltzmann_gibbs(&h, &mu), Err(Error::DegenerateNormalization { .. })));
    }

    #[test]
    fn coupling_example() {
        let grid = g(2);
        let a = MeasureVec::new(grid.clone(), vec![0.6, 0.4]).unwrap();
        let b = MeasureVec::new(grid, vec![0.2, 0.8]).unwrap();
        let (ok, nu) = coupling_equivalence(&a, &b, 0.5).unwrap();
        assert!(ok);
        let nu = nu.unwrap();
        assert!((nu.masses[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((nu.masses[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn coupling_disjoint() {
        let grid = g(2);
        let a = MeasureVec::dirac(grid.clone(), 0);
        let b = MeasureVec::dirac(grid, 1);
        assert!(!coupling_equivalence(&a, &b, 0.01).unwrap().0);
    }

    #[test]
    fn coupling_rejects_non_probability() {
        let grid = g(2);
        let a = MeasureVec::new(grid.clone(), vec![0.6, 0.6]).unwrap();
        let b = MeasureVec::dirac(grid, 1);
        assert!(coupling_equivalence(&a, &b, 0.5).is_err());
    }

    #[test]
    fn grid_mismatch_rejected() {
        let a = MeasureVec::dirac(g(3), 0);
        let b = MeasureVec::dirac(g(4), 0);
        assert!(a.sub(&b).is_err());
    }
}
