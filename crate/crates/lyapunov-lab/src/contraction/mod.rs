//! V-Dobrushin coefficients, local minorization, the rescaled-Lyapunov
//! contraction lemma, Foster-Lyapunov certificates and decay curves.
//!
//! Every supremum over pairs of states is an exhaustive scan over grid pairs.

mod dobrushin;
mod lemma;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub use dobrushin::{
    dobrushin, local_minorization, local_minorization_values, v_dobrushin, v_dobrushin_values, ContractionReport,
    MinorizationProfile,
};
pub use lemma::{
    decay_rate_fit, foster_lyapunov_values, foster_lyapunov_verify, geometric_decay_curve,
    geometric_decay_curve_values, nonexpansive_check, nonexpansive_check_values, nonexpansive_window,
    normalize_drift, rescaled_affine, rescaled_alpha, rescaled_lyapunov, theorem_constant, DecayCurve,
    DriftCertificate, EpsilonBound, FosterReport, NonexpansiveReport,
};

use crate::core::GridDomain;
use crate::error::Result;
use crate::kernels::DiscreteOperator;

/// Random Markov chain on `{0..n-1}` with a downward drift and a common
/// regeneration component of weight `q`, plus `V(x) = (1+x)^k`.
pub fn random_drift_chain(rng: &mut impl Rng) -> Result<(DiscreteOperator, Vec<f64>)> {
    let n = rng.random_range(5..=40usize);
    let q = rng.random_range(0.05..0.5);
    let k: i32 = rng.random_range(1..=2);
    let nu_support = rng.random_range(1..=n.min(5));
    let mut nu: Vec<f64> = (0..nu_support).map(|_| rng.random_range(0.1..1.0)).collect();
    let s: f64 = nu.iter().sum();
    nu.iter_mut().for_each(|x| *x /= s);
    let mut rows = vec![vec![0.0; n]; n];
    for (i, row) in rows.iter_mut().enumerate() {
        let down = rng.random_range(0.3..0.8);
        let up = rng.random_range(0.0..(1.0 - down) * 0.6);
        let stay = 1.0 - down - up;
        let jump = rng.random_range(1..=3usize);
        row[i.saturating_sub(jump)] += (1.0 - q) * down;
        row[(i + 1).min(n - 1)] += (1.0 - q) * up;
        row[i] += (1.0 - q) * stay;
        for (j, w) in nu.iter().enumerate() {
            row[j] += q * w;
        }
    }
    let grid = Arc::new(GridDomain::lattice(0, n)?);
    let p = DiscreteOperator::from_rows(grid, &rows, 1.0)?;
    let v = (0..n).map(|x| (1.0 + x as f64).powi(k)).collect();
    Ok((p, v))
}

/// One randomized instance of the rescaled-Lyapunov contraction lemma.
#[derive(Debug, Clone, Serialize)]
pub struct LemmaTrial {
    pub states: usize,
    pub epsilon: f64,
    pub c: f64,
    pub r: f64,
    pub alpha_r: f64,
    pub alpha_eps_r: f64,
    /// Measured `beta_{V_{eps,r}}(P)`.
    pub beta: f64,
    pub holds: bool,
}

/// Draws a chain, measures `(eps, c, alpha(r))` on it, and compares the exact
/// `beta_{V_{eps,r}}(P)` against `1 - alpha_eps(r)`.
pub fn random_lemma_trial(seed: u64) -> Result<LemmaTrial> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let (p, v) = random_drift_chain(&mut rng)?;
        let eps = rng.random_range(0.2..0.95);
        let pv = p.apply(&v);
        let c = pv.iter().zip(&v).map(|(a, b)| a - eps * b).fold(0.0, f64::max);
        if !(c > 0.0) {
            continue;
        }
        let vn: Vec<f64> = v.iter().map(|x| 0.5 * (1.0 + eps * x / c)).collect();
        let profile = MinorizationProfile::new(&p, &vn);
        let r_eps = 1.0 / (1.0 - eps);
        let admissible: Vec<usize> = (0..profile.levels.len())
            .filter(|&k| profile.levels[k] > r_eps && profile.alpha[k] > 0.0)
            .collect();
        if admissible.is_empty() {
            continue;
        }
        let k = admissible[rng.random_range(0..admissible.len())];
        let r = profile.levels[k];
        let alpha_r = profile.alpha[k];
        let alpha_eps_r = rescaled_alpha(eps, alpha_r, r)?;
        let scale = alpha_r / ((1.0 + eps) * r);
        let w: Vec<f64> = vn.iter().map(|x| 0.5 * (1.0 + scale * x)).collect();
        let (beta, _) = v_dobrushin_values(&p, &w);
        return Ok(LemmaTrial {
            states: p.len(),
            epsilon: eps,
            c,
            r,
            alpha_r,
            alpha_eps_r,
            beta,
            holds: beta <= 1.0 - alpha_eps_r + 1e-12,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::LyapunovSpec;

    fn two_state() -> DiscreteOperator {
        let g = Arc::new(GridDomain::lattice(0, 2).unwrap());
        DiscreteOperator::from_rows(g, &[vec![0.9, 0.1], vec![0.2, 0.8]], 1.0).unwrap()
    }

    #[test]
    fn two_state_dobrushin() {
        let r = v_dobrushin(&two_state(), &LyapunovSpec::half()).unwrap();
        assert!((r.beta - 0.7).abs() < 1e-12);
        assert_eq!(r.witness_pair, (0, 1));
    }

    #[test]
    fn lemma_example_value() {
        let a = rescaled_alpha(0.5, 0.5, 4.0).unwrap();
        assert!((a - 0.25 * (0.5 / 1.75) * 0.5).abs() < 1e-15);
        assert!(rescaled_alpha(0.5, 0.5, 2.0).is_err());
    }

    #[test]
    fn profile_matches_direct_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (p, v) = random_drift_chain(&mut rng).unwrap();
        let prof = MinorizationProfile::new(&p, &v);
        for &r in &[1.5, 3.0, 7.5, 1e9] {
            let direct = local_minorization_values(&p, &v, r).ok();
            assert_eq!(prof.at(r).map(|a| (a * 1e12).round()), direct.map(|a| (a * 1e12).round()));
        }
    }

    #[test]
    fn identity_fails_certification() {
        let g = Arc::new(GridDomain::lattice(1, 10).unwrap());
        let p = DiscreteOperator::identity(g);
        let r = foster_lyapunov_verify(&p, &LyapunovSpec::Poly(2.0)).unwrap();
        assert!(!r.certified);
    }
}
