use serde::Serialize;

use super::DiscreteOperator;
use crate::core::{vanishes_at_edges, LyapunovSpec};
use crate::error::{bad, Result};

/// Outcome of transferring a Lyapunov bound to `V_p = V^{1/p}` through Hoelder.
#[derive(Debug, Clone, Serialize)]
pub struct DominationReport {
    pub p: f64,
    /// Max over grid of `Q(V_p) / (Q(1)^{1-1/p} Q(V)^{1/p})`; at most 1 by Hoelder.
    pub max_holder_ratio: f64,
    /// `c(p) = (sup QV/V)^{1/p}`.
    pub c_p: f64,
    /// `Theta = Q(V_p) / V_p` per grid point (NaN at excluded points).
    pub theta: Vec<f64>,
    /// Bound `c(p) Q(1)^{1-1/p}` per grid point.
    pub bound: Vec<f64>,
    /// Grid points with `Q(1) = 0`, left out of the check.
    pub excluded: Vec<usize>,
    /// Whether Theta falls below its interior median on the outermost points.
    pub theta_vanishes_at_edges: bool,
}

impl DominationReport {
    pub fn holds(&self) -> bool {
        self.max_holder_ratio <= 1.0 + 1e-9
    }
}

/// Hoelder transfer `Q(V_p)/V_p <= c(p) Q(1)^{1-1/p}` with `V_p = V^{1/p}`.
pub fn domination_transfer(q: &DiscreteOperator, v: &LyapunovSpec, p: f64) -> Result<DominationReport> {
    if !(p > 1.0) {
        return Err(bad("p", format!("must exceed 1, got {p}")));
    }
    let vals = v.eval_on(q.grid())?;
    let vp: Vec<f64> = vals.iter().map(|x| x.powf(1.0 / p)).collect();
    let q1 = q.row_sums();
    let qv = q.apply(&vals);
    let qvp = q.apply(&vp);
    let mut excluded = Vec::new();
    let mut ratio = 0.0f64;
    let mut sup_qv = 0.0f64;
    for i in 0..q.len() {
        if q1[i] <= 0.0 {
            excluded.push(i);
            continue;
        }
        sup_qv = sup_qv.max(qv[i] / vals[i]);
        let denom = q1[i].powf(1.0 - 1.0 / p) * qv[i].powf(1.0 / p);
        ratio = ratio.max(qvp[i] / denom);
    }
    let c_p = sup_qv.powf(1.0 / p);
    let theta: Vec<f64> = (0..q.len())
        .map(|i| if q1[i] > 0.0 { qvp[i] / vp[i] } else { f64::NAN })
        .collect();
    let bound = q1.iter().map(|m| c_p * m.max(0.0).powf(1.0 - 1.0 / p)).collect();
    let finite: Vec<f64> = theta.iter().map(|t| if t.is_nan() { 0.0 } else { *t }).collect();
    let theta_vanishes_at_edges = vanishes_at_edges(&finite, q.grid());
    Ok(DominationReport {
        p,
        max_holder_ratio: ratio,
        c_p,
        theta,
        bound,
        excluded,
        theta_vanishes_at_edges,
    })
}
