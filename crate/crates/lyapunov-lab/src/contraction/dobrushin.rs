use rayon::prelude::*;
use serde::Serialize;

use crate::core::LyapunovSpec;
use crate::error::{Error, Result};
use crate::kernels::DiscreteOperator;

/// V-Dobrushin coefficient and the pair of grid points attaining it.
#[derive(Debug, Clone, Serialize)]
pub struct ContractionReport {
    pub beta: f64,
    pub witness_pair: (usize, usize),
    pub v_used: Option<LyapunovSpec>,
}

pub(crate) fn rows(p: &DiscreteOperator) -> Vec<Vec<f64>> {
    (0..p.len()).map(|i| p.row(i)).collect()
}

/// `||delta_i P - delta_j P||_tv`.
pub(crate) fn row_tv(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / 2.0
}

/// Best `(value, i, j)` per row `i`, merged in index order so ties go to the
/// smallest pair regardless of how rayon split the work.
fn pair_max(n: usize, f: impl Fn(usize, usize) -> f64 + Sync) -> (f64, usize, usize) {
    let per_row: Vec<(f64, usize, usize)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut best = (f64::NEG_INFINITY, i, i);
            for j in i + 1..n {
                let v = f(i, j);
                if v > best.0 {
                    best = (v, i, j);
                }
            }
            best
        })
        .collect();
    let mut best = (0.0, 0, 0);
    for b in per_row {
        if b.0 > best.0 {
            best = b;
        }
    }
    best
}

/// `beta_V(P) = sup_{x,y} ||delta_x P - delta_y P||_V / (V(x) + V(y))` for
/// precomputed values of V, by exhaustive pair scan.
pub fn v_dobrushin_values(p: &DiscreteOperator, v: &[f64]) -> (f64, (usize, usize)) {
    let r = rows(p);
    let (beta, i, j) = pair_max(p.len(), |i, j| {
        let s: f64 = r[i].iter().zip(&r[j]).zip(v).map(|((a, b), w)| (a - b).abs() * w).sum();
        s / (v[i] + v[j])
    });
    (beta, (i, j))
}

pub fn v_dobrushin(p: &DiscreteOperator, v: &LyapunovSpec) -> Result<ContractionReport> {
    let vals = v.eval_on(p.grid())?;
    let (beta, witness_pair) = v_dobrushin_values(p, &vals);
    Ok(ContractionReport {
        beta,
        witness_pair,
        v_used: Some(v.clone()),
    })
}

/// Standard Dobrushin coefficient `beta_{1/2}(P)`: the largest tv distance between rows.
pub fn dobrushin(p: &DiscreteOperator) -> f64 {
    let r = rows(p);
    pair_max(p.len(), |i, j| row_tv(&r[i], &r[j])).0
}

/// `alpha(r) = 1 - max_{x,y in {V <= r}} ||delta_x P - delta_y P||_tv`.
pub fn local_minorization_values(p: &DiscreteOperator, v: &[f64], r: f64) -> Result<f64> {
    let idx: Vec<usize> = (0..v.len()).filter(|&i| v[i] <= r).collect();
    if idx.is_empty() {
        return Err(Error::EmptySublevel {
            r,
            min_v: v.iter().cloned().fold(f64::INFINITY, f64::min),
        });
    }
    let rw = rows(p);
    let (worst, _, _) = pair_max(idx.len(), |a, b| row_tv(&rw[idx[a]], &rw[idx[b]]));
    Ok(1.0 - worst)
}

pub fn local_minorization(p: &DiscreteOperator, v: &LyapunovSpec, r: f64) -> Result<f64> {
    let vals = v.eval_on(p.grid())?;
    local_minorization_values(p, &vals, r)
}

/// `alpha(r)` for every sub-level set at once: states sorted by V, with the
/// running maximum of pairwise row distances. One O(n^3) pass.
#[derive(Debug, Clone)]
pub struct MinorizationProfile {
    /// V values in increasing order.
    pub levels: Vec<f64>,
    /// `alpha` of the sub-level set `{V <= levels[k]}`.
    pub alpha: Vec<f64>,
}

impl MinorizationProfile {
    pub fn new(p: &DiscreteOperator, v: &[f64]) -> Self {
        let n = v.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap().then(a.cmp(&b)));
        let rw = rows(p);
        let newest: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|k| {
                let i = order[k];
                (0..k).map(|l| row_tv(&rw[i], &rw[order[l]])).fold(0.0, f64::max)
            })
            .collect();
        let mut running = 0.0f64;
        let mut alpha = Vec::with_capacity(n);
        for m in newest {
            running = running.max(m);
            alpha.push(1.0 - running);
        }
        let levels = order.iter().map(|&i| v[i]).collect();
        Self { levels, alpha }
    }

    /// `alpha(r)`, or `None` when `{V <= r}` is empty.
    pub fn at(&self, r: f64) -> Option<f64> {
        let k = self.levels.partition_point(|l| *l <= r);
        if k == 0 {
            None
        } else {
            Some(self.alpha[k - 1])
        }
    }
}
