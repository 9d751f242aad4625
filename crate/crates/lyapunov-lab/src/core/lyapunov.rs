//! Closed family of Lyapunov functions and its config spelling.
//!
//! Spellings: `const:c`, `poly:k`, `exp:v`, `inv_plus_poly:n`, `boundary:eps`,
//! `affine_rescale:a:b:<spec>`, `pow:p:<spec>`, `product:[<spec>,<spec>,...]`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::GridDomain;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum LyapunovSpec {
    /// Constant function; `const:0.5` gives the total-variation normalization.
    Const(f64),
    /// `1 + |x|^k`.
    Poly(f64),
    /// `exp(v |x|)`.
    Exp(f64),
    /// `x^n + 1/x` on the half line.
    InvPlusPoly(f64),
    /// `d^{-(1-eps)}` with `d` the distance to the boundary of the bounding box.
    Boundary(f64),
    /// `a + b * base`.
    AffineRescale { a: f64, b: f64, base: Box<LyapunovSpec> },
    /// `base^p`.
    Pow { p: f64, base: Box<LyapunovSpec> },
    Product(Vec<LyapunovSpec>),
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Distance from `x` to the boundary of the box `bounds`.
pub fn box_distance(x: &[f64], bounds: &[(f64, f64)]) -> f64 {
    x.iter()
        .zip(bounds)
        .map(|(xi, (a, b))| (xi - a).min(b - xi))
        .fold(f64::INFINITY, f64::min)
}

impl LyapunovSpec {
    pub fn half() -> Self {
        LyapunovSpec::Const(0.5)
    }

    pub fn affine_rescale(base: LyapunovSpec, a: f64, b: f64) -> Self {
        LyapunovSpec::AffineRescale {
            a,
            b,
            base: Box::new(base),
        }
    }

    pub fn pow(base: LyapunovSpec, p: f64) -> Self {
        LyapunovSpec::Pow {
            p,
            base: Box::new(base),
        }
    }

    /// Evaluates V at `x`; `bounds` is the state-space box (needed by `boundary`).
    pub fn eval(&self, x: &[f64], bounds: &[(f64, f64)]) -> Result<f64> {
        let v = match self {
            LyapunovSpec::Const(c) => *c,
            LyapunovSpec::Poly(k) => 1.0 + norm(x).powf(*k),
            LyapunovSpec::Exp(v) => (v * norm(x)).exp(),
            LyapunovSpec::InvPlusPoly(n) => {
                let z = x[0];
                if !(z > 0.0) {
                    return Err(Error::Singularity { x: x.to_vec() });
                }
                z.powf(*n) + 1.0 / z
            }
            LyapunovSpec::Boundary(eps) => {
                let d = box_distance(x, bounds);
                if !(d > 0.0) {
                    return Err(Error::Singularity { x: x.to_vec() });
                }
                d.powf(-(1.0 - eps))
            }
            LyapunovSpec::AffineRescale { a, b, base } => a + b * base.eval(x, bounds)?,
            LyapunovSpec::Pow { p, base } => base.eval(x, bounds)?.powf(*p),
            LyapunovSpec::Product(items) => {
                let mut acc = 1.0;
                for it in items {
                    acc *= it.eval(x, bounds)?;
                }
                acc
            }
        };
        if !v.is_finite() {
            return Err(Error::Singularity { x: x.to_vec() });
        }
        Ok(v)
    }

    /// One-dimensional shortcut with unbounded domain.
    pub fn eval1(&self, x: f64) -> Result<f64> {
        self.eval(&[x], &[(f64::NEG_INFINITY, f64::INFINITY)])
    }

    /// Values on every grid point.
    pub fn eval_on(&self, grid: &GridDomain) -> Result<Vec<f64>> {
        (0..grid.len())
            .map(|i| {
                self.eval(grid.point(i), grid.bounds())
                    .map_err(|_| Error::NonFinite { index: i })
            })
            .collect()
    }

    /// True when the family has no singularity at `x`.
    pub fn is_regular_at(&self, x: &[f64], bounds: &[(f64, f64)]) -> bool {
        self.eval(x, bounds).is_ok()
    }

    /// Check that V stays bounded below by a positive constant on the grid.
    pub fn lower_bound_on(&self, grid: &GridDomain) -> Result<f64> {
        let v = self.eval_on(grid)?;
        Ok(v.iter().cloned().fold(f64::INFINITY, f64::min))
    }
}

/// Surrogate for "V has compact sub-level sets": the outermost 5% of grid
/// points (by distance to the box boundary) all exceed the interior median.
pub fn diverges_at_edges(values: &[f64], grid: &GridDomain) -> bool {
    let n = grid.len();
    if n < 20 {
        return false;
    }
    let mut order: Vec<usize> = (0..n).collect();
    let d: Vec<f64> = (0..n).map(|i| box_distance(grid.point(i), grid.bounds())).collect();
    order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).unwrap().then(a.cmp(&b)));
    let k = (n as f64 * 0.05).ceil() as usize;
    let outer_min = order[..k].iter().map(|&i| values[i]).fold(f64::INFINITY, f64::min);
    let mut inner: Vec<f64> = order[k..].iter().map(|&i| values[i]).collect();
    inner.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = inner[inner.len() / 2];
    outer_min > median
}

/// Mirror of [`diverges_at_edges`]: the outermost 5% of points all fall below
/// the interior median (surrogate for vanishing at infinity).
pub fn vanishes_at_edges(values: &[f64], grid: &GridDomain) -> bool {
    let neg: Vec<f64> = values.iter().map(|v| -v).collect();
    diverges_at_edges(&neg, grid)
}

impl fmt::Display for LyapunovSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LyapunovSpec::Const(c) => write!(f, "const:{c}"),
            LyapunovSpec::Poly(k) => write!(f, "poly:{k}"),
            LyapunovSpec::Exp(v) => write!(f, "exp:{v}"),
            LyapunovSpec::InvPlusPoly(n) => write!(f, "inv_plus_poly:{n}"),
            LyapunovSpec::Boundary(e) => write!(f, "boundary:{e}"),
            LyapunovSpec::AffineRescale { a, b, base } => write!(f, "affine_rescale:{a}:{b}:{base}"),
            LyapunovSpec::Pow { p, base } => write!(f, "pow:{p}:{base}"),
            LyapunovSpec::Product(items) => {
                write!(f, "product:[")?;
                for (i, it) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{it}")?;
                }
                write!(f, "]")
            }
        }
    }
}

fn syntax(spec: &str, reason: impl Into<String>) -> Error {
    Error::LyapunovSyntax {
        spec: spec.to_string(),
        reason: reason.into(),
    }
}

fn num(spec: &str, s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| syntax(spec, format!("`{s}` is not a finite number")))
}

fn split_top_level(s: &str) -> Result<Vec<&str>> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, ch) in s.char_indices() {
        match ch {
            '[' => depth += 1,
            ']' => depth -= 1,
            ',' if depth == 0 => {
                out.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
        if depth < 0 {
            return Err(syntax(s, "unbalanced brackets"));
        }
    }
    if depth != 0 {
        return Err(syntax(s, "unbalanced brackets"));
    }
    out.push(&s[start..]);
    Ok(out)
}

impl FromStr for LyapunovSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, rest) = s.split_once(':').ok_or_else(|| syntax(s, "expected `family:args`"))?;
        let spec = match name.trim() {
            "const" => LyapunovSpec::Const(num(s, rest)?),
            "poly" => {
                let k = num(s, rest)?;
                if k < 0.0 {
                    return Err(syntax(s, "poly exponent must be >= 0"));
                }
                LyapunovSpec::Poly(k)
            }
            "exp" => LyapunovSpec::Exp(num(s, rest)?),
            "inv_plus_poly" => {
                let n = num(s, rest)?;
                if n < 1.0 {
                    return Err(syntax(s, "inv_plus_poly needs n >= 1"));
                }
                LyapunovSpec::InvPlusPoly(n)
            }
            "boundary" => {
                let e = num(s, rest)?;
                if !(e > 0.0 && e < 1.0) {
                    return Err(syntax(s, "boundary exponent must lie in (0,1)"));
                }
                LyapunovSpec::Boundary(e)
            }
            "affine_rescale" => {
                let mut it = rest.splitn(3, ':');
                let a = num(s, it.next().unwrap_or(""))?;
                let b = num(s, it.next().ok_or_else(|| syntax(s, "missing b"))?)?;
                let base = it.next().ok_or_else(|| syntax(s, "missing base spec"))?.parse()?;
                LyapunovSpec::affine_rescale(base, a, b)
            }
            "pow" => {
                let (p, base) = rest.split_once(':').ok_or_else(|| syntax(s, "expected pow:p:<spec>"))?;
                LyapunovSpec::pow(base.parse()?, num(s, p)?)
            }
            "product" => {
                let inner = rest
                    .trim()
                    .strip_prefix('[')
                    .and_then(|r| r.strip_suffix(']'))
                    .ok_or_else(|| syntax(s, "expected product:[...]"))?;
                let items = split_top_level(inner)?
                    .into_iter()
                    .map(|p| p.parse())
                    .collect::<Result<Vec<_>>>()?;
                if items.is_empty() {
                    return Err(syntax(s, "empty product"));
                }
                LyapunovSpec::Product(items)
            }
            other => return Err(syntax(s, format!("unknown family `{other}`"))),
        };
        Ok(spec)
    }
}

impl Serialize for LyapunovSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for LyapunovSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_round_trip() {
        for s in [
            "poly:4",
            "exp:0.5",
            "inv_plus_poly:2",
            "boundary:0.5",
            "const:0.5",
            "affine_rescale:0.5:0.25:poly:2",
            "pow:0.5:poly:2",
            "product:[pow:0.5:exp:1,pow:0.5:boundary:0.5]",
        ] {
            let v: LyapunovSpec = s.parse().unwrap();
            assert_eq!(v.to_string(), s);
            let again: LyapunovSpec = v.to_string().parse().unwrap();
            assert_eq!(again, v);
        }
    }

    #[test]
    fn poly_at_two() {
        let v: LyapunovSpec = "poly:2".parse().unwrap();
        assert_eq!(v.eval1(2.0).unwrap(), 5.0);
    }

    #[test]
    fn inv_plus_poly_rejects_origin() {
        let v: LyapunovSpec = "inv_plus_poly:2".parse().unwrap();
        assert!(v.eval1(0.0).is_err());
        assert_eq!(v.eval1(2.0).unwrap(), 4.5);
    }

    #[test]
    fn boundary_profile_at_centre() {
        let v = LyapunovSpec::Boundary(0.5);
        let x = v.eval(&[0.5], &[(0.0, 1.0)]).unwrap();
        assert!((x - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn rejects_garbage() {
        assert!("poly".parse::<LyapunovSpec>().is_err());
        assert!("wobble:1".parse::<LyapunovSpec>().is_err());
        assert!("product:[poly:2".parse::<LyapunovSpec>().is_err());
        assert!("boundary:1.5".parse::<LyapunovSpec>().is_err());
    }

    #[test]
    fn edge_divergence_surrogate() {
        let g = GridDomain::uniform(-5.0, 5.0, 101).unwrap();
        let v = LyapunovSpec::Poly(2.0).eval_on(&g).unwrap();
        assert!(diverges_at_edges(&v, &g));
        let flat = vec![1.0; g.len()];
        assert!(!diverges_at_edges(&flat, &g));
    }
}
