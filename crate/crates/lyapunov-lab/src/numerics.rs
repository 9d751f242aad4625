//! Small numerical helpers shared across modules.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{bad, Result};

/// Least-squares line through `(x, y)`; returns `(slope, intercept)`.
pub fn fit_line(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(bad("samples", "need at least two matching points"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(bad("samples", "abscissae are all equal"));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Root of a monotone function on `[lo, hi]` by bisection, to absolute tolerance `tol`.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(bad("bracket", format!("f({lo}) = {flo} and f({hi}) = {fhi} share a sign")));
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol {
            return Ok(mid);
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Composite Gauss-Legendre (5 nodes per panel) quadrature of `f` over `[a, b]`.
pub fn gauss_legendre(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    const NODES: [f64; 5] = [
        0.0,
        -0.538_469_310_105_683_1,
        0.538_469_310_105_683_1,
        -0.906_179_845_938_664,
        0.906_179_845_938_664,
    ];
    const WEIGHTS: [f64; 5] = [
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_08,
        0.236_926_885_056_189_08,
    ];
    let panels = panels.max(1);
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for k in 0..panels {
        let lo = a + h * k as f64;
        let mid = lo + h / 2.0;
        let mut s = 0.0;
        for (x, w) in NODES.iter().zip(WEIGHTS) {
            s += w * f(mid + h / 2.0 * x);
        }
        total += s * h / 2.0;
    }
    total
}

/// Integral of `f` over `[a, b]` where `f` may blow up like `(x-a)^{-s}`, `s < 1`,
/// at the left end: substitutes `x = a + (b-a) u^m` to smooth the singularity.
pub fn integrate_left_singular(f: impl Fn(f64) -> f64, a: f64, b: f64, m: i32, panels: usize) -> f64 {
    let l = b - a;
    gauss_legendre(
        |u| {
            if u <= 0.0 {
                return 0.0;
            }
            let jac = l * m as f64 * u.powi(m - 1);
            f(a + l * u.powi(m)) * jac
        },
        0.0,
        1.0,
        panels,
    )
}

/// Generator for one independent substream: `seed` picks the key, `stream` the
/// path or partition index.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_fit_exact() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v - 1.0).collect();
        let (s, i) = fit_line(&x, &y).unwrap();
        assert!((s - 2.0).abs() < 1e-14 && (i + 1.0).abs() < 1e-14);
    }

    #[test]
    fn bisection_sqrt_two() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn quadrature_polynomial_and_singular() {
        assert!((gauss_legendre(|x| x.powi(8), 0.0, 1.0, 4) - 1.0 / 9.0).abs() < 1e-13);
        let v = integrate_left_singular(|x| x.powf(-0.5), 0.0, 0.2, 2, 8);
        assert!((v - 2.0 * 0.2f64.sqrt()).abs() < 1e-12);
    }
}
