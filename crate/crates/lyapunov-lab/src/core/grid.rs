use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Quadrature grid over a box in one or two dimensions.
///
/// Points are stored flat (`dim` coordinates per point). Two-dimensional grids
/// are tensor products ordered lexicographically, first coordinate outermost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDomain {
    dim: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
    bounds: Vec<(f64, f64)>,
    boundary_points: Vec<Vec<f64>>,
}

impl GridDomain {
    /// Trapezoid grid on the closed interval `[a, b]` with `n` points, both ends included.
    pub fn uniform(a: f64, b: f64, n: usize) -> Result<Self> {
        if n < 2 || !(b > a) {
            return Err(Error::InvalidGrid(format!("uniform grid needs n >= 2 and a < b, got n={n}, [{a}, {b}]")));
        }
        let h = (b - a) / (n - 1) as f64;
        let coords: Vec<f64> = (0..n).map(|i| if i == n - 1 { b } else { a + h * i as f64 }).collect();
        let mut weights = vec![h; n];
        weights[0] = h / 2.0;
        weights[n - 1] = h / 2.0;
        Self::from_parts(1, coords, weights, vec![(a, b)], vec![])
    }

    /// Cell-centred (midpoint) grid on an open or half-open interval: `n` cells of
    /// width `(b - a)/n`, one point at each cell centre. Used where the endpoints
    /// are absorbing and must not carry mass.
    pub fn cell_centred(a: f64, b: f64, n: usize) -> Result<Self> {
        if n < 1 || !(b > a) {
            return Err(Error::InvalidGrid(format!("cell-centred grid needs n >= 1 and a < b, got n={n}, [{a}, {b}]")));
        }
        let h = (b - a) / n as f64;
        let coords: Vec<f64> = (0..n).map(|i| a + h * (i as f64 + 0.5)).collect();
        let weights = vec![h; n];
        Self::from_parts(1, coords, weights, vec![(a, b)], vec![vec![a], vec![b]])
    }

    /// Integer states `lo, lo+1, ..., lo+n-1` with unit weights, for Markov chains.
    pub fn lattice(lo: i64, n: usize) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidGrid("lattice needs at least one state".into()));
        }
        let coords: Vec<f64> = (0..n).map(|i| (lo + i as i64) as f64).collect();
        let a = lo as f64 - 0.5;
        Self::from_parts(1, coords, vec![1.0; n], vec![(a, a + n as f64)], vec![])
    }

    /// Tensor product of two one-dimensional grids.
    pub fn product(gx: &GridDomain, gy: &GridDomain) -> Result<Self> {
        if gx.dim != 1 || gy.dim != 1 {
            return Err(Error::InvalidGrid("product expects two 1D grids".into()));
        }
        let mut coords = Vec::with_capacity(2 * gx.len() * gy.len());
        let mut weights = Vec::with_capacity(gx.len() * gy.len());
        for i in 0..gx.len() {
            for j in 0..gy.len() {
                coords.push(gx.coords[i]);
                coords.push(gy.coords[j]);
                weights.push(gx.weights[i] * gy.weights[j]);
            }
        }
        Self::from_parts(2, coords, weights, vec![gx.bounds[0], gy.bounds[0]], vec![])
    }

    /// Builds a grid from raw parts and checks every invariant.
    pub fn from_parts(
        dim: usize,
        coords: Vec<f64>,
        weights: Vec<f64>,
        bounds: Vec<(f64, f64)>,
        boundary_points: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if dim == 0 || dim > 2 {
            return Err(Error::InvalidGrid(format!("dimension {dim} not supported")));
        }
        if coords.len() != dim * weights.len() || bounds.len() != dim {
            return Err(Error::InvalidGrid("coordinate, weight and bound counts disagree".into()));
        }
        if weights.is_empty() {
            return Err(Error::InvalidGrid("empty grid".into()));
        }
        if let Some(i) = weights.iter().position(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidGrid(format!("weight {i} is not positive")));
        }
        if let Some(i) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite { index: i / dim });
        }
        let n = weights.len();
        for i in 1..n {
            let prev = &coords[(i - 1) * dim..i * dim];
            let cur = &coords[i * dim..(i + 1) * dim];
            let ordered = match dim {
                1 => cur[0] > prev[0],
                _ => cur[0] > prev[0] || (cur[0] == prev[0] && cur[1] > prev[1]),
            };
            if !ordered {
                return Err(Error::InvalidGrid(format!("points not strictly ordered at index {i}")));
            }
        }
        let volume: f64 = bounds.iter().map(|(a, b)| b - a).product();
        let total: f64 = weights.iter().sum();
        if !(volume > 0.0) || ((total - volume) / volume).abs() > 1e-12 {
            return Err(Error::InvalidGrid(format!(
                "cell weights sum to {total}, domain volume is {volume}"
            )));
        }
        Ok(Self {
            dim,
            coords,
            weights,
            bounds,
            boundary_points,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    /// First coordinate of point `i`; the whole point on 1D grids.
    pub fn x(&self, i: usize) -> f64 {
        self.coords[i * self.dim]
    }

    /// All first coordinates (the points themselves on a 1D grid).
    pub fn xs(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.x(i)).collect()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn boundary_points(&self) -> &[Vec<f64>] {
        &self.boundary_points
    }

    pub fn volume(&self) -> f64 {
        self.bounds.iter().map(|(a, b)| b - a).product()
    }

    /// Quadrature of `f` against the cell weights.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    /// Index of the grid point nearest to `x` (first coordinate only).
    pub fn nearest(&self, x: f64) -> usize {
        let mut best = 0;
        let mut dist = f64::INFINITY;
        for i in 0..self.len() {
            let d = (self.x(i) - x).abs();
            if d < dist {
                dist = d;
                best = i;
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trapezoid_weights_sum_to_length() {
        let g = GridDomain::uniform(-8.0, 8.0, 400).unwrap();
        assert!((g.weights().iter().sum::<f64>() - 16.0).abs() < 1e-12);
        assert_eq!(g.x(0), -8.0);
        assert_eq!(g.x(399), 8.0);
    }

    #[test]
    fn cell_centred_avoids_endpoints() {
        let g = GridDomain::cell_centred(0.0, 1.0, 200).unwrap();
        assert!((g.x(0) - 0.0025).abs() < 1e-15);
        assert!(g.x(199) < 1.0);
    }

    #[test]
    fn product_grid_is_lexicographic() {
        let a = GridDomain::uniform(0.0, 1.0, 3).unwrap();
        let b = GridDomain::uniform(0.0, 2.0, 4).unwrap();
        let g = GridDomain::product(&a, &b).unwrap();
        assert_eq!(g.len(), 12);
        assert_eq!(g.point(5), &[0.5, 2.0 / 3.0]);
        assert!((g.weights().iter().sum::<f64>() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_unordered_points() {
        let r = GridDomain::from_parts(1, vec![0.0, 0.0], vec![0.5, 0.5], vec![(0.0, 1.0)], vec![]);
        assert!(r.is_err());
    }

    #[test]
    fn rejects_wrong_volume() {
        let r = GridDomain::from_parts(1, vec![0.2, 0.8], vec![0.4, 0.4], vec![(0.0, 1.0)], vec![]);
        assert!(r.is_err());
    }
}
