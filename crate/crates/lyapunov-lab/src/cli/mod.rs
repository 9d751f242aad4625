//! Config-driven experiment runner behind the `lyaplab` binary.
//!
//! A config is one JSON document. Unknown keys are rejected everywhere, and
//! errors name the JSON path of the offending key. Command-specific settings
//! live under `params` and are checked when the command runs.

mod commands;
pub mod output;

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::core::{GridDomain, LyapunovSpec};
use crate::error::{Error, Result};
use crate::kernels::{ClosedFormKernel, MODEL_NAMES};

pub use output::{fmt_f64, Assertion, Curve, OutputFormat, Report};

/// Seed used when neither the config nor the command line sets one.
pub const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Eigen,
    Contract,
    Decay,
    Rate,
    Riccati,
    Geometry,
    Simulate,
    Validate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Eigen => "eigen",
            Command::Contract => "contract",
            Command::Decay => "decay",
            Command::Rate => "rate",
            Command::Riccati => "riccati",
            Command::Geometry => "geometry",
            Command::Simulate => "simulate",
            Command::Validate => "validate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    /// Endpoints included, trapezoid weights.
    Uniform,
    /// Cell midpoints; for absorbing endpoints.
    CellCentred,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridAxis {
    pub min: f64,
    pub max: f64,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<Spacing>,
}

/// Either one axis (`min`, `max`, `n`) or a box given by two `axes`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<Spacing>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axes: Option<Vec<GridAxis>>,
}

impl GridConfig {
    pub fn line(min: f64, max: f64, n: usize) -> Self {
        Self {
            min: Some(min),
            max: Some(max),
            n: Some(n),
            ..Self::default()
        }
    }

    /// Builds the grid; `default_spacing` applies where the config is silent.
    pub fn build(&self, default_spacing: Spacing) -> Result<GridDomain> {
        let axis = |a: &GridAxis| match a.spacing.unwrap_or(default_spacing) {
            Spacing::Uniform => GridDomain::uniform(a.min, a.max, a.n),
            Spacing::CellCentred => GridDomain::cell_centred(a.min, a.max, a.n),
        };
        let cfg_err = |reason: &str| Error::Config {
            path: "grid".into(),
            reason: reason.into(),
        };
        match (&self.axes, self.min, self.max, self.n) {
            (Some(axes), None, None, None) => match axes.as_slice() {
                [a] => axis(a),
                [a, b] => GridDomain::product(&axis(a)?, &axis(b)?),
                _ => Err(cfg_err("`axes` must list one or two axes")),
            },
            (None, Some(min), Some(max), Some(n)) => axis(&GridAxis {
                min,
                max,
                n,
                spacing: self.spacing,
            }),
            _ => Err(cfg_err("give either `min`, `max`, `n` or `axes`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    /// Time step of the discretized semigroup.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    /// Horizon for continuous-time commands.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    /// Number of `tau` steps for iterated commands.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default)]
    pub format: OutputFormat,
    /// File stem; defaults to the command name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            format: OutputFormat::default(),
            name: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    /// A model name such as `"harmonic"`, or a tagged object like
    /// `{"model": "gauss_ou", "a": [[-1]], "sigma": [[1]]}`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lyapunov: Option<LyapunovSpec>,
    #[serde(default)]
    pub time: TimeConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub params: Value,
}

impl ExperimentConfig {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            model: None,
            grid: None,
            lyapunov: None,
            time: TimeConfig::default(),
            output: OutputConfig::default(),
            seed: None,
            threads: None,
            params: Value::Null,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    /// The closed-form model, from a bare name or a tagged object.
    pub fn kernel(&self) -> Result<ClosedFormKernel> {
        let v = self.model.as_ref().ok_or_else(|| missing("model"))?;
        let k: ClosedFormKernel = match v {
            Value::String(name) => {
                if !MODEL_NAMES.contains(&name.as_str()) {
                    return Err(Error::Config {
                        path: "model".into(),
                        reason: format!("unknown model `{name}`; available: {}", MODEL_NAMES.join(", ")),
                    });
                }
                from_value(&serde_json::json!({ "model": name }), "model")?
            }
            other => from_value(other, "model")?,
        };
        k.validate()?;
        Ok(k)
    }

    /// The grid, with cell-centred spacing by default for models with absorbing endpoints.
    pub fn grid_for(&self, kernel: Option<&ClosedFormKernel>) -> Result<Arc<GridDomain>> {
        let g = self.grid.as_ref().ok_or_else(|| missing("grid"))?;
        let spacing = match kernel {
            Some(ClosedFormKernel::DirichletHeat { .. })
            | Some(ClosedFormKernel::HalfHarmonic)
            | Some(ClosedFormKernel::HalfHarmonicLinear { .. }) => Spacing::CellCentred,
            _ => Spacing::Uniform,
        };
        Ok(Arc::new(g.build(spacing)?))
    }

    pub fn lyapunov(&self) -> Result<LyapunovSpec> {
        self.lyapunov.clone().ok_or_else(|| missing("lyapunov"))
    }

    pub fn tau(&self) -> Result<f64> {
        let tau = self.time.tau.unwrap_or(0.5);
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::Config {
                path: "time.tau".into(),
                reason: format!("must be positive, got {tau}"),
            });
        }
        Ok(tau)
    }

    /// Iteration count: `time.steps`, else `time.t_max / tau` (tau defaults
    /// to 1 for chains without a time step), else `default`.
    pub fn steps(&self, default: usize) -> Result<usize> {
        if let Some(s) = self.time.steps {
            return Ok(s);
        }
        match self.time.t_max {
            Some(t) if t >= 0.0 && t.is_finite() => Ok((t / self.time.tau.unwrap_or(1.0)).round() as usize),
            Some(t) => Err(Error::Config {
                path: "time.t_max".into(),
                reason: format!("must be finite and non-negative, got {t}"),
            }),
            None => Ok(default),
        }
    }

    /// `params` decoded into a command's parameter type (missing means all defaults).
    pub fn params<T: DeserializeOwned>(&self) -> Result<T> {
        let v = if self.params.is_null() {
            Value::Object(Default::default())
        } else {
            self.params.clone()
        };
        from_value(&v, "params")
    }
}

fn missing(key: &str) -> Error {
    Error::Config {
        path: key.into(),
        reason: "required by this command".into(),
    }
}

/// Deserializes `v`, reporting failures at `prefix.<path inside v>`.
pub fn from_value<T: DeserializeOwned>(v: &Value, prefix: &str) -> Result<T> {
    serde_path_to_error::deserialize(v).map_err(|e| {
        let inner = e.path().to_string();
        let path = match (prefix.is_empty(), inner.as_str()) {
            (_, ".") => prefix.to_string(),
            (true, _) => inner,
            (false, _) => format!("{prefix}.{inner}"),
        };
        Error::Config {
            path: if path.is_empty() { ".".into() } else { path },
            reason: e.into_inner().to_string(),
        }
    })
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut de = serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        Error::Config {
            path,
            reason: e.into_inner().to_string(),
        }
    })?;
    de.end().map_err(|e| Error::Config {
        path: ".".into(),
        reason: e.to_string(),
    })?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

/// Command-line flags that take precedence over the config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(o) = &self.out {
            cfg.output.dir = o.clone();
        }
        if self.seed.is_some() {
            cfg.seed = self.seed;
        }
        if self.threads.is_some() {
            cfg.threads = self.threads;
        }
    }
}

/// Runs the command and returns its report without writing anything.
pub fn run_command(cfg: &ExperimentConfig) -> Result<Report> {
    let mut report = match cfg.command {
        Command::Eigen => commands::eigen(cfg),
        Command::Contract => commands::contract(cfg),
        Command::Decay => commands::decay(cfg),
        Command::Rate => commands::rate(cfg),
        Command::Riccati => commands::riccati(cfg),
        Command::Geometry => commands::geometry(cfg),
        Command::Simulate => commands::simulate(cfg),
        Command::Validate => commands::validate(cfg),
    }?;
    let mut inputs = serde_json::to_value(cfg).map_err(|e| Error::Io(e.to_string()))?;
    // Where files go is not part of the experiment; leaving it out keeps
    // artifacts byte-identical across output directories.
    if let Some(out) = inputs.get_mut("output").and_then(Value::as_object_mut) {
        out.remove("dir");
    }
    report.inputs = inputs;
    Ok(report)
}

/// A finished run: the report, the files written and the wall time.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: Report,
    pub files: Vec<PathBuf>,
    pub elapsed: Duration,
}

impl Outcome {
    /// 0 when every assertion passed, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.report.passed() {
            0
        } else {
            2
        }
    }

    /// One line: command, key scalar, pass count and wall time.
    pub fn summary(&self) -> String {
        let r = &self.report;
        let passed = r.assertions.iter().filter(|a| a.pass).count();
        format!(
            "{}: {} = {:.10e}  assertions {}/{} passed  ({:.2} s)",
            r.command,
            r.headline.0,
            r.headline.1,
            passed,
            r.assertions.len(),
            self.elapsed.as_secs_f64()
        )
    }
}

/// Runs the command on a pool of `cfg.threads` workers (all cores when unset)
/// and writes the configured outputs.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Outcome> {
    let start = Instant::now();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cfg.threads {
        if t == 0 {
            return Err(Error::Config {
                path: "threads".into(),
                reason: "must be at least 1".into(),
            });
        }
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| Error::Io(format!("thread pool: {e}")))?;
    let report = pool.install(|| run_command(cfg))?;
    let stem = cfg.output.name.clone().unwrap_or_else(|| cfg.command.name().to_string());
    let files = report.write(&cfg.output.dir, &stem, cfg.output.format)?;
    Ok(Outcome {
        report,
        files,
        elapsed: start.elapsed(),
    })
}

/// Lines printed by `list-models`.
pub fn list_models() -> Vec<String> {
    let mut out = vec!["closed-form kernels (eigen, contract, decay):".to_string()];
    out.extend(MODEL_NAMES.iter().map(|m| format!("  {m}")));
    out.push("diffusions (simulate):".into());
    out.extend(crate::simulate::SIM_MODELS.iter().map(|m| format!("  {m}")));
    out.push("surfaces (geometry):".into());
    out.extend(crate::geometry::SURFACE_FIXTURES.iter().map(|m| format!("  {m}")));
    out
}

/// Lines printed by `list-cases`.
pub fn list_cases() -> Vec<String> {
    crate::simulate::MC_CASES.iter().map(|c| c.to_string()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_reports_path() {
        let e = parse_config(r#"{"command": "eigen", "grid": {"min": 0, "max": 1, "n": 10, "bogus": 1}}"#).unwrap_err();
        match e {
            Error::Config { path, .. } => assert_eq!(path, "grid.bogus"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_lyapunov_reports_path() {
        let e = parse_config(r#"{"command": "contract", "lyapunov": "poly:x"}"#).unwrap_err();
        assert!(matches!(e, Error::Config { ref path, .. } if path == "lyapunov"), "{e:?}");
    }

    #[test]
    fn params_prefix() {
        let cfg = parse_config(r#"{"command": "rate", "params": {"chain": {"n": "many"}}}"#).unwrap();
        #[derive(Debug, Deserialize)]
        #[allow(dead_code)]
        struct P {
            chain: Inner,
        }
        #[derive(Debug, Deserialize)]
        #[allow(dead_code)]
        struct Inner {
            n: usize,
        }
        let e = cfg.params::<P>().unwrap_err();
        assert!(matches!(e, Error::Config { ref path, .. } if path == "params.chain.n"), "{e:?}");
    }

    #[test]
    fn model_by_name_or_object() {
        let mut cfg = ExperimentConfig::new(Command::Eigen);
        cfg.model = Some(serde_json::json!("dirichlet_heat"));
        assert_eq!(cfg.kernel().unwrap(), ClosedFormKernel::DirichletHeat { n_terms: 60 });
        cfg.model = Some(serde_json::json!({"model": "half_harmonic_linear", "a": 0.0, "varsigma": 1.0}));
        assert!(cfg.kernel().is_ok());
        cfg.model = Some(serde_json::json!("nope"));
        assert!(matches!(cfg.kernel(), Err(Error::Config { .. })));
    }
}
