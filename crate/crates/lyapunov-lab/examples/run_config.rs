//! Builds an experiment config in code, runs it and prints the report.
//!
//! `cargo run --example run_config -- configs/eigen_dirichlet.json` runs a
//! config file instead.

use lyapunov_lab::cli::{load_config, run_command, Command, ExperimentConfig, GridConfig};

fn main() -> lyapunov_lab::Result<()> {
    let cfg = match std::env::args().nth(1) {
        Some(path) => load_config(path.as_ref())?,
        None => {
            let mut c = ExperimentConfig::new(Command::Eigen);
            c.model = Some(serde_json::json!("dirichlet_heat"));
            c.grid = Some(GridConfig::line(0.0, 1.0, 200));
            c.time.tau = Some(0.5);
            c
        }
    };
    let report = run_command(&cfg)?;
    println!("{} = {}", report.headline.0, report.headline.1);
    for a in &report.assertions {
        println!("  {}: {} <= {} -> {}", a.name, a.lhs, a.rhs, if a.pass { "pass" } else { "FAIL" });
    }
    Ok(())
}
