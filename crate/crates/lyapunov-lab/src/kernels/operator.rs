use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::closed_form::ClosedFormKernel;
use crate::core::{FunctionVec, GridDomain, MeasureVec};
use crate::error::{bad, Error, Result};

/// Nonnegative matrix of kernel mass between grid cells. Rows are sources,
/// columns targets: `Q f` is `matrix * f`, `mu Q` is `mu' * matrix`.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    matrix: DMatrix<f64>,
    grid: Arc<GridDomain>,
    time_step: f64,
}

impl DiscreteOperator {
    pub fn new(grid: Arc<GridDomain>, matrix: DMatrix<f64>, time_step: f64) -> Result<Self> {
        let n = grid.len();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::GridMismatch {
                expected: n,
                got: matrix.nrows().max(matrix.ncols()),
            });
        }
        if !(time_step > 0.0) {
            return Err(bad("time_step", format!("must be positive, got {time_step}")));
        }
        for (k, v) in matrix.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { index: k % n });
            }
            if *v < 0.0 {
                return Err(bad("matrix", format!("negative entry {v} at row {}", k % n)));
            }
        }
        Ok(Self {
            matrix,
            grid,
            time_step,
        })
    }

    /// Operator given by explicit rows (a Markov chain on a lattice, say).
    pub fn from_rows(grid: Arc<GridDomain>, rows: &[Vec<f64>], time_step: f64) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(bad("rows", "matrix must be square"));
        }
        Self::new(grid, DMatrix::from_fn(n, n, |i, j| rows[i][j]), time_step)
    }

    pub fn identity(grid: Arc<GridDomain>) -> Self {
        let n = grid.len();
        Self {
            matrix: DMatrix::identity(n, n),
            grid,
            time_step: 1.0,
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn grid(&self) -> &GridDomain {
        &self.grid
    }

    pub fn grid_arc(&self) -> &Arc<GridDomain> {
        &self.grid
    }

    pub fn time_step(&self) -> f64 {
        self.time_step
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }

    /// Row `i` as a vector (the measure `delta_i Q`).
    pub fn row(&self, i: usize) -> Vec<f64> {
        self.matrix.row(i).iter().cloned().collect()
    }

    /// Right action `Q(f)`.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| self.matrix.row(i).iter().zip(f).map(|(q, v)| q * v).sum())
            .collect()
    }

    pub fn apply_fn(&self, f: &FunctionVec) -> Result<FunctionVec> {
        FunctionVec::new(self.grid.clone(), self.apply(&f.values))
    }

    /// Left action `mu Q` on atom masses.
    pub fn act(&self, masses: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut out = vec![0.0; n];
        for (i, m) in masses.iter().enumerate() {
            if *m == 0.0 {
                continue;
            }
            for (o, q) in out.iter_mut().zip(self.matrix.row(i).iter()) {
                *o += m * q;
            }
        }
        out
    }

    pub fn act_measure(&self, mu: &MeasureVec) -> Result<MeasureVec> {
        MeasureVec::new(self.grid.clone(), self.act(&mu.masses))
    }

    /// `Q(1)`.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.matrix.row(i).sum()).collect()
    }

    /// Composition `self` then `other` (time steps add).
    pub fn compose(&self, other: &DiscreteOperator) -> Result<DiscreteOperator> {
        if self.len() != other.len() {
            return Err(Error::GridMismatch {
                expected: self.len(),
                got: other.len(),
            });
        }
        Ok(DiscreteOperator {
            matrix: &self.matrix * &other.matrix,
            grid: self.grid.clone(),
            time_step: self.time_step + other.time_step,
        })
    }

    /// `Q^k` by repeated squaring.
    pub fn power(&self, k: usize) -> DiscreteOperator {
        let n = self.len();
        let mut result = DMatrix::identity(n, n);
        let mut base = self.matrix.clone();
        let mut e = k;
        while e > 0 {
            if e & 1 == 1 {
                result = &result * &base;
            }
            e >>= 1;
            if e > 0 {
                base = &base * &base;
            }
        }
        DiscreteOperator {
            matrix: result,
            grid: self.grid.clone(),
            time_step: self.time_step * k.max(1) as f64,
        }
    }

    /// Same operator scaled by a positive constant.
    pub fn scaled(&self, c: f64) -> DiscreteOperator {
        DiscreteOperator {
            matrix: &self.matrix * c,
            grid: self.grid.clone(),
            time_step: self.time_step,
        }
    }

    pub fn max_abs_diff(&self, other: &DiscreteOperator) -> f64 {
        (&self.matrix - &other.matrix).amax()
    }
}

/// Quadrature realization of a closed-form kernel: entry `(i,j)` is
/// `density(t, x_i, x_j) * w_j`, clamped at 0. Rows are assembled in parallel
/// and gathered in index order, so the result does not depend on thread count.
pub fn discretize(kernel: &ClosedFormKernel, grid: Arc<GridDomain>, t: f64) -> Result<DiscreteOperator> {
    if grid.dim() != kernel.dim() {
        return Err(Error::Dimension(format!(
            "{} is {}-dimensional, grid is {}-dimensional",
            kernel.name(),
            kernel.dim(),
            grid.dim()
        )));
    }
    let slice = kernel.at(t)?;
    let n = grid.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let x = grid.point(i);
            (0..n)
                .map(|j| {
                    slice
                        .density(x, grid.point(j))
                        .map(|d| (d * grid.weight(j)).max(0.0))
                        .map_err(|e| Error::Integration(format!("density at grid pair ({i},{j}): {e}")))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let matrix = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    DiscreteOperator::new(grid, matrix, t)
}

/// `sup_{i,j} |(Q_t Q_s)(x_i, x_j) - q_{t+s}(x_i, x_j)|` in density units
/// (entries divided by the quadrature weight of `x_j`).
pub fn chapman_kolmogorov_error(kernel: &ClosedFormKernel, grid: Arc<GridDomain>, t: f64, s: f64) -> Result<f64> {
    let qt = discretize(kernel, grid.clone(), t)?;
    let qs = discretize(kernel, grid.clone(), s)?;
    let qts = discretize(kernel, grid.clone(), t + s)?;
    let prod = qt.compose(&qs)?;
    let n = grid.len();
    let mut worst = 0.0f64;
    for j in 0..n {
        let w = grid.weight(j);
        for i in 0..n {
            worst = worst.max((prod.matrix[(i, j)] - qts.matrix[(i, j)]).abs() / w);
        }
    }
    Ok(worst)
}

/// Exact total mass `Q_t(1)` of the model at every grid point.
pub fn model_mass(kernel: &ClosedFormKernel, grid: &GridDomain, t: f64) -> Result<Vec<f64>> {
    let slice = kernel.at(t)?;
    (0..grid.len()).map(|i| slice.mass(grid.point(i))).collect()
}

/// Doob h-transform `P(f) = e^{-rho tau} Q(h f) / h`.
pub fn doob_h_transform(q: &DiscreteOperator, h: &FunctionVec, rho: f64) -> Result<DiscreteOperator> {
    let n = q.len();
    if h.len() != n {
        return Err(Error::GridMismatch {
            expected: n,
            got: h.len(),
        });
    }
    if let Some(i) = h.values.iter().position(|v| !(*v > 0.0)) {
        return Err(bad("h", format!("must be positive, h[{i}] = {}", h.values[i])));
    }
    let c = (-rho * q.time_step()).exp();
    let hv = &h.values;
    let matrix = DMatrix::from_fn(n, n, |i, j| c * q.matrix[(i, j)] * hv[j] / hv[i]);
    DiscreteOperator::new(q.grid.clone(), matrix, q.time_step())
}

/// Inverse of [`doob_h_transform`]: `Q(f) = e^{rho tau} h P(f / h)`.
pub fn doob_h_inverse(p: &DiscreteOperator, h: &FunctionVec, rho: f64) -> Result<DiscreteOperator> {
    let inv = FunctionVec::new(h.grid.clone(), h.values.iter().map(|v| 1.0 / v).collect())?;
    doob_h_transform(p, &inv, -rho)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> DiscreteOperator {
        let g = Arc::new(GridDomain::lattice(0, 2).unwrap());
        DiscreteOperator::from_rows(g, &[vec![0.9, 0.1], vec![0.2, 0.8]], 1.0).unwrap()
    }

    #[test]
    fn actions_agree_with_matrix() {
        let p = chain();
        assert_eq!(p.apply(&[1.0, 0.0]), vec![0.9, 0.2]);
        let m = p.act(&[1.0, 0.0]);
        assert!((m[0] - 0.9).abs() < 1e-15 && (m[1] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn power_matches_compose() {
        let p = chain();
        let a = p.power(3);
        let b = p.compose(&p).unwrap().compose(&p).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-15);
    }

    #[test]
    fn negative_entries_rejected() {
        let g = Arc::new(GridDomain::lattice(0, 2).unwrap());
        assert!(DiscreteOperator::from_rows(g, &[vec![1.0, -0.1], vec![0.0, 1.0]], 1.0).is_err());
    }

    #[test]
    fn trivial_h_transform_is_identity() {
        let p = chain();
        let h = FunctionVec::constant(p.grid_arc().clone(), 1.0);
        assert!(doob_h_transform(&p, &h, 0.0).unwrap().max_abs_diff(&p) == 0.0);
    }
}
