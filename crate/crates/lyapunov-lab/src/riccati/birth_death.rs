use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{scalar_riccati, ScalarRiccati};
use crate::error::{bad, Error, Result};
use crate::kernels::to_matrix;
use crate::numerics::stream_rng;

/// Birth-death chains with `V(x) = |x|`.
///
/// Logistic on `{1, 2, ...}`: `J(x, x+1) = lambda_b x + upsilon_b`,
/// `J(x, x-1) = lambda_d x + lambda_l x (x-1) + upsilon_d`, no death from 1.
///
/// Multivariate on `N^n \ {0}`: `J(x, x+e_i) = upsilon_i + x_i (lambda_i + (C x)_i)`,
/// `J(x, x-e_i) = varsigma_i + x_i (mu_i + (D x)_i)`. Deaths from an empty
/// coordinate and into the null state are suppressed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BirthDeathSpec {
    Logistic {
        lambda_b: f64,
        upsilon_b: f64,
        lambda_d: f64,
        lambda_l: f64,
        upsilon_d: f64,
    },
    Multivariate {
        lambda: Vec<f64>,
        mu: Vec<f64>,
        upsilon: Vec<f64>,
        varsigma: Vec<f64>,
        c: Vec<Vec<f64>>,
        d: Vec<Vec<f64>>,
    },
}

impl BirthDeathSpec {
    pub fn dim(&self) -> usize {
        match self {
            BirthDeathSpec::Logistic { .. } => 1,
            BirthDeathSpec::Multivariate { lambda, .. } => lambda.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            BirthDeathSpec::Logistic {
                lambda_b,
                upsilon_b,
                lambda_d,
                lambda_l,
                upsilon_d,
            } => {
                if [lambda_b, upsilon_b, lambda_d, upsilon_d].iter().any(|v| !(**v >= 0.0)) {
                    return Err(bad("rates", "logistic rates must be non-negative"));
                }
                if !(*lambda_l > 0.0) {
                    return Err(bad("lambda_l", format!("must be positive, got {lambda_l}")));
                }
            }
            BirthDeathSpec::Multivariate {
                lambda,
                mu,
                upsilon,
                varsigma,
                c,
                d,
            } => {
                let n = lambda.len();
                if n == 0 || [mu.len(), upsilon.len(), varsigma.len(), c.len(), d.len()].iter().any(|l| *l != n) {
                    return Err(Error::Dimension("all rate vectors and matrices need the same size".into()));
                }
                if upsilon.iter().chain(varsigma).any(|v| !(*v >= 0.0)) {
                    return Err(bad("upsilon/varsigma", "must be non-negative"));
                }
                if upsilon.iter().sum::<f64>() < varsigma.iter().sum::<f64>() {
                    return Err(bad("upsilon", "need |upsilon| >= |varsigma|"));
                }
                if self.interaction_floor()? <= 0.0 {
                    return Err(bad("D - C", "(B + B')/2 must be positive definite"));
                }
            }
        }
        Ok(())
    }

    /// Smallest eigenvalue of `(B + B')/2`, `B = D - C`.
    fn interaction_floor(&self) -> Result<f64> {
        match self {
            BirthDeathSpec::Logistic { lambda_l, .. } => Ok(*lambda_l),
            BirthDeathSpec::Multivariate { c, d, .. } => {
                let b: DMatrix<f64> = to_matrix(d, "D")? - to_matrix(c, "C")?;
                if !b.is_square() || b.nrows() != c.len() {
                    return Err(Error::Dimension("C and D must be square".into()));
                }
                let sym = (&b + b.transpose()) * 0.5;
                Ok(sym.symmetric_eigen().eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min))
            }
        }
    }

    fn check_state(&self, x: &[i64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Dimension(format!("state has {} coordinates, expected {}", x.len(), self.dim())));
        }
        if x.iter().any(|v| *v < 0) || x.iter().all(|v| *v == 0) {
            return Err(bad("x", format!("{x:?} is outside the state space")));
        }
        Ok(())
    }

    /// `(birth_i, death_i)` per coordinate, with suppressed transitions set to 0.
    pub fn rates(&self, x: &[i64]) -> Result<Vec<(f64, f64)>> {
        let out = match self {
            BirthDeathSpec::Logistic {
                lambda_b,
                upsilon_b,
                lambda_d,
                lambda_l,
                upsilon_d,
            } => {
                let z = x[0] as f64;
                let death = if x[0] > 1 {
                    lambda_d * z + lambda_l * z * (z - 1.0) + upsilon_d
                } else {
                    0.0
                };
                vec![(lambda_b * z + upsilon_b, death)]
            }
            BirthDeathSpec::Multivariate {
                lambda,
                mu,
                upsilon,
                varsigma,
                c,
                d,
            } => {
                let total: i64 = x.iter().sum();
                let n = x.len();
                (0..n)
                    .map(|i| {
                        let xi = x[i] as f64;
                        let cx: f64 = (0..n).map(|j| c[i][j] * x[j] as f64).sum();
                        let dx: f64 = (0..n).map(|j| d[i][j] * x[j] as f64).sum();
                        let birth = upsilon[i] + xi * (lambda[i] + cx);
                        let death = if x[i] > 0 && total > 1 {
                            varsigma[i] + xi * (mu[i] + dx)
                        } else {
                            0.0
                        };
                        (birth, death)
                    })
                    .collect()
            }
        };
        if let Some(i) = out.iter().position(|(b, d)| !(*b >= 0.0 && *d >= 0.0)) {
            return Err(bad("rates", format!("negative rate for coordinate {i} at state {x:?}")));
        }
        Ok(out)
    }

    /// Scalar Riccati majorant of `t -> E V(X_t)`.
    ///
    /// Multivariate: `b` is divided by `n` since `||x||^2 >= |x|^2 / n`, and
    /// `|varsigma|` is added to `a0` to cover the suppressed deaths at empty coordinates.
    pub fn riccati_majorant(&self) -> Result<ScalarRiccati> {
        self.validate()?;
        match self {
            BirthDeathSpec::Logistic {
                lambda_b,
                upsilon_b,
                lambda_d,
                lambda_l,
                ..
            } => ScalarRiccati::new(upsilon_b + lambda_d, lambda_b + lambda_l - lambda_d, *lambda_l),
            BirthDeathSpec::Multivariate {
                lambda,
                mu,
                upsilon,
                varsigma,
                d,
                ..
            } => {
                let n = lambda.len();
                let su: f64 = upsilon.iter().sum();
                let sv: f64 = varsigma.iter().sum();
                let boundary: f64 = (0..n).map(|j| sv + mu[j] + d[j][j]).sum();
                let a0 = su - sv + boundary + sv;
                let a1 = (0..n).map(|i| lambda[i] - mu[i]).fold(f64::NEG_INFINITY, f64::max);
                ScalarRiccati::new(a0.max(0.0), a1, self.interaction_floor()? / n as f64)
            }
        }
    }
}

/// `L(V)(x)` with `V(x) = |x|` on the chain as simulated.
pub fn bd_generator_drift(spec: &BirthDeathSpec, x: &[i64]) -> Result<f64> {
    spec.validate()?;
    spec.check_state(x)?;
    Ok(spec.rates(x)?.iter().map(|(b, d)| b - d).sum())
}

/// Monte Carlo mean of `V(X_t)` against the Riccati majorant at 10 checkpoints.
#[derive(Debug, Clone, Serialize)]
pub struct BdMomentReport {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub majorant: Vec<f64>,
    pub holds: bool,
    /// Some path reached the state cap.
    pub truncated: bool,
    pub majorant_spec: ScalarRiccati,
}

/// Paths hitting `V >= STATE_CAP` are frozen there and flag the report.
pub const STATE_CAP: i64 = 10_000_000;

fn gillespie_path(
    spec: &BirthDeathSpec,
    x0: &[i64],
    checkpoints: &[f64],
    rng: &mut impl Rng,
) -> Result<(Vec<f64>, bool)> {
    let mut x = x0.to_vec();
    let mut t = 0.0;
    let mut out = Vec::with_capacity(checkpoints.len());
    let v = |x: &[i64]| x.iter().sum::<i64>() as f64;
    loop {
        if x.iter().sum::<i64>() >= STATE_CAP {
            while out.len() < checkpoints.len() {
                out.push(v(&x));
            }
            return Ok((out, true));
        }
        let rates = spec.rates(&x)?;
        let total: f64 = rates.iter().map(|(b, d)| b + d).sum();
        let wait = if total > 0.0 {
            -(1.0 - rng.random::<f64>()).ln() / total
        } else {
            f64::INFINITY
        };
        while out.len() < checkpoints.len() && checkpoints[out.len()] < t + wait {
            out.push(v(&x));
        }
        if out.len() == checkpoints.len() {
            return Ok((out, false));
        }
        t += wait;
        let mut u = rng.random::<f64>() * total;
        let mut moved = false;
        for (i, (b, d)) in rates.iter().enumerate() {
            if u < *b {
                x[i] += 1;
                moved = true;
                break;
            }
            u -= b;
            if u < *d {
                x[i] -= 1;
                moved = true;
                break;
            }
            u -= d;
        }
        if !moved {
            // Rounding left u just above the last bucket.
            let i = rates.iter().rposition(|(b, d)| b + d > 0.0).unwrap_or(0);
            if rates[i].1 > 0.0 {
                x[i] -= 1;
            } else {
                x[i] += 1;
            }
        }
    }
}

/// Gillespie simulation over `n_paths` paths (substream per path), compared with
/// the Riccati majorant plus three standard errors at `t_max k / 10`, `k = 1..10`.
pub fn bd_moment_bound(
    spec: &BirthDeathSpec,
    x0: &[i64],
    t_max: f64,
    n_paths: usize,
    seed: u64,
) -> Result<BdMomentReport> {
    spec.validate()?;
    spec.check_state(x0)?;
    if !(t_max > 0.0) || n_paths < 2 {
        return Err(bad("t_max/n_paths", "need t_max > 0 and at least two paths"));
    }
    let majorant_spec = spec.riccati_majorant()?;
    let times: Vec<f64> = (1..=10).map(|k| t_max * k as f64 / 10.0).collect();
    let paths: Vec<(Vec<f64>, bool)> = (0..n_paths)
        .into_par_iter()
        .map(|p| gillespie_path(spec, x0, &times, &mut stream_rng(seed, p as u64)))
        .collect::<Result<_>>()?;
    let n = n_paths as f64;
    let mut sum = vec![0.0; times.len()];
    let mut sum2 = vec![0.0; times.len()];
    let mut truncated = false;
    for (vals, cut) in &paths {
        truncated |= *cut;
        for k in 0..times.len() {
            sum[k] += vals[k];
            sum2[k] += vals[k] * vals[k];
        }
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let stderr: Vec<f64> = (0..times.len())
        .map(|k| ((sum2[k] / n - mean[k] * mean[k]).max(0.0) * n / (n - 1.0) / n).sqrt())
        .collect();
    let z0 = x0.iter().sum::<i64>() as f64;
    let majorant: Vec<f64> = times
        .iter()
        .map(|t| scalar_riccati(&majorant_spec, z0, *t))
        .collect::<Result<_>>()?;
    let holds = (0..times.len()).all(|k| mean[k] <= majorant[k] + 3.0 * stderr[k]);
    Ok(BdMomentReport {
        times,
        mean,
        stderr,
        majorant,
        holds,
        truncated,
        majorant_spec,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logistic() -> BirthDeathSpec {
        BirthDeathSpec::Logistic {
            lambda_b: 1.0,
            upsilon_b: 0.0,
            lambda_d: 0.0,
            lambda_l: 0.1,
            upsilon_d: 0.0,
        }
    }

    #[test]
    fn logistic_drift_matches_quadratic() {
        assert!((bd_generator_drift(&logistic(), &[10]).unwrap() - 1.0).abs() < 1e-12);
        assert!((bd_generator_drift(&logistic(), &[1]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_state_rejected() {
        assert!(bd_generator_drift(&logistic(), &[0]).is_err());
    }
}
