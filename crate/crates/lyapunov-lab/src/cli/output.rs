//! Report files: JSON with every float in 17-significant-digit scientific
//! notation, and CSV curves with a header row.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};

/// Round-trip exact decimal form of a double.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// `lhs <op> rhs` outcome recorded in a report.
#[derive(Debug, Clone, Serialize)]
pub struct Assertion {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

impl Assertion {
    /// Passes when `lhs <= rhs`.
    pub fn le(name: &str, lhs: f64, rhs: f64) -> Self {
        Self {
            name: name.into(),
            lhs,
            rhs,
            pass: lhs <= rhs,
        }
    }

    /// Boolean outcome; recorded as `1 <= 1` or `0 <= 1`.
    pub fn holds(name: &str, ok: bool) -> Self {
        Self {
            name: name.into(),
            lhs: if ok { 1.0 } else { 0.0 },
            rhs: 1.0,
            pass: ok,
        }
    }
}

/// Named table written as `<stem>_<name>.csv`.
#[derive(Debug, Clone)]
pub struct Curve {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Curve {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: vec![],
        }
    }

    pub fn push(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::Dimension(format!(
                "curve `{}` has {} columns, row has {}",
                self.name,
                self.columns.len(),
                row.len()
            )));
        }
        if let Some(i) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: i });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            let line: Vec<String> = r.iter().map(|v| fmt_f64(*v)).collect();
            s.push_str(&line.join(","));
            s.push('\n');
        }
        s
    }
}

/// Everything one command produces.
#[derive(Debug, Clone)]
pub struct Report {
    pub command: String,
    pub inputs: Value,
    pub results: Value,
    pub assertions: Vec<Assertion>,
    pub curves: Vec<Curve>,
    /// Name and value printed in the summary line.
    pub headline: (String, f64),
}

impl Report {
    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.pass)
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = serde_json::json!({
            "command": self.command,
            "inputs": self.inputs,
            "results": self.results,
            "assertions": serde_json::to_value(&self.assertions).map_err(|e| Error::Io(e.to_string()))?,
        });
        let mut out = String::new();
        write_value(&doc, 0, &mut out);
        out.push('\n');
        Ok(out)
    }

    /// Writes `<dir>/<stem>.json` and/or one CSV per curve; returns the paths written.
    pub fn write(&self, dir: &Path, stem: &str, format: OutputFormat) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
        let mut written = vec![];
        let mut put = |path: PathBuf, body: String| -> Result<()> {
            fs::write(&path, body).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            written.push(path);
            Ok(())
        };
        if matches!(format, OutputFormat::Json | OutputFormat::Both) {
            put(dir.join(format!("{stem}.json")), self.to_json()?)?;
        }
        if matches!(format, OutputFormat::Csv | OutputFormat::Both) {
            for c in &self.curves {
                put(dir.join(format!("{stem}_{}.csv", c.name)), c.to_csv())?;
            }
        }
        Ok(written)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Json,
    Csv,
    #[default]
    Both,
}

fn write_value(v: &Value, indent: usize, out: &mut String) {
    let pad = |n: usize| "  ".repeat(n);
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                out.push_str(&fmt_f64(n.as_f64().unwrap_or(f64::NAN)));
            } else {
                let _ = write!(out, "{n}");
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            // Numeric arrays stay on one line.
            if items.iter().all(|x| x.is_number()) {
                out.push('[');
                for (i, x) in items.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    write_value(x, indent, out);
                }
                out.push(']');
                return;
            }
            out.push_str("[\n");
            for (i, x) in items.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                write_value(x, indent + 1, out);
                if i + 1 < items.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            out.push_str(&pad(indent));
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push_str("{\n");
            for (i, (k, x)) in map.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                out.push_str(&Value::String(k.clone()).to_string());
                out.push_str(": ");
                write_value(x, indent + 1, out);
                if i + 1 < map.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            out.push_str(&pad(indent));
            out.push('}');
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, -4.934802200544679, 1e-300, 123456789.0] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn json_is_parseable() {
        let r = Report {
            command: "eigen".into(),
            inputs: serde_json::json!({"n": 3, "x": 0.5}),
            results: serde_json::json!({"rho": -0.5, "v": [1.0, 2.0], "s": "a\"b"}),
            assertions: vec![Assertion::le("a", 1.0, 2.0)],
            curves: vec![],
            headline: ("rho".into(), -0.5),
        };
        let text = r.to_json().unwrap();
        let back: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(back["results"]["rho"].as_f64(), Some(-0.5));
        assert_eq!(back["inputs"]["n"].as_u64(), Some(3));
    }

    #[test]
    fn curve_rejects_nan() {
        let mut c = Curve::new("c", &["t", "value"]);
        assert!(c.push(vec![0.0, f64::NAN]).is_err());
        c.push(vec![0.0, 1.0]).unwrap();
        assert!(c.to_csv().starts_with("t,value\n"));
    }
}
