use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn lyaplab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lyaplab")).args(args).output().unwrap()
}

fn scratch(tag: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("lyaplab-cli-{}-{tag}", std::process::id()));
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

fn config(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name).to_string_lossy().into_owned()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("cfg.json");
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn lists_models_and_cases() {
    let o = lyaplab(&["list-models"]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("harmonic") && text.contains("dirichlet_heat"), "{text}");
    let o = lyaplab(&["list-cases"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("qsd_dirichlet_rho"));
}

#[test]
fn passing_run_exits_zero_and_writes_artifacts() {
    let out = scratch("pass");
    let o = lyaplab(&["run", &config("eigen_harmonic.json"), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("eigen_harmonic.json")).unwrap()).unwrap();
    assert_eq!(json["command"], "eigen");
    assert!(json["assertions"].as_array().unwrap().iter().all(|a| a["pass"] == true));
    let csv = fs::read_to_string(out.join("eigen_harmonic_eigenfunctions.csv")).unwrap();
    assert!(csv.starts_with("x,h,eta_inf_density\n"));
    let _ = fs::remove_dir_all(&out);
}

#[test]
fn failed_assertion_exits_two() {
    let dir = scratch("fail");
    let cfg = write_config(
        &dir,
        r#"{"command": "eigen", "model": "harmonic", "grid": {"min": -8, "max": 8, "n": 100},
            "params": {"tolerance": 1e-300}}"#,
    );
    let o = lyaplab(&["run", &cfg, "--out", dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAILED"));
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn config_errors_exit_one_with_path() {
    let dir = scratch("bad");
    let cfg = write_config(&dir, r#"{"command": "eigen", "model": "harmonic", "grid": {"n": 10, "bogus": 1}}"#);
    let o = lyaplab(&["run", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("grid.bogus"));

    let cfg = write_config(&dir, r#"{"command": "eigen", "model": "no_such_model"}"#);
    let o = lyaplab(&["run", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("harmonic"));

    let o = lyaplab(&["run", dir.join("missing.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let o = lyaplab(&["run", &config("eigen_harmonic.json"), "--threads", "0"]);
    assert_eq!(o.status.code(), Some(1));
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn usage_errors() {
    assert_eq!(lyaplab(&[]).status.code(), Some(1));
    assert_eq!(lyaplab(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(lyaplab(&["--help"]).status.code(), Some(0));
}

#[test]
fn artifacts_are_byte_identical_across_runs_and_directories() {
    let a = scratch("det-a");
    let b = scratch("det-b");
    for d in [&a, &b] {
        let o = lyaplab(&["run", &config("rate_polynomial.json"), "--out", d.to_str().unwrap(), "--seed", "5"]);
        assert_eq!(o.status.code(), Some(0));
    }
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 2);
    for n in names {
        assert_eq!(fs::read(a.join(&n)).unwrap(), fs::read(b.join(&n)).unwrap(), "{n:?}");
    }
    let _ = fs::remove_dir_all(&a);
    let _ = fs::remove_dir_all(&b);
}
