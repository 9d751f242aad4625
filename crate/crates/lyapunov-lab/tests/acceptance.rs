//! Acceptance checks. Prints one PASS/FAIL line per criterion, with the
//! individual measurements indented underneath, and exits non-zero if any
//! criterion fails.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lyapunov_lab::cli::{load_config, run_experiment, Overrides};
use lyapunov_lab::contraction::{geometric_decay_curve, random_lemma_trial};
use lyapunov_lab::core::{GridDomain, LyapunovSpec, MeasureVec};
use lyapunov_lab::geometry::{coarea_check, Atlas, MongeSurface};
use lyapunov_lab::kernels::{
    chapman_kolmogorov_error, discretize, doob_h_transform, hermite_series_kernel, mehler_kernel, ClosedFormKernel,
};
use lyapunov_lab::riccati::{
    controllability_rank, coupled_oscillator_semigroup, matrix_riccati_dt, scalar_riccati_with_error, MatrixRiccati,
    ScalarRiccati,
};
use lyapunov_lab::simulate::{mc_validate_batch, McBudget, MC_CASES};
use lyapunov_lab::spectral::{ground_state_l2_error, model_eigentriple};
use lyapunov_lab::subgeometric::{
    loglog_slope, ode_majorant, polynomial_chain, polynomial_family, polynomial_rate_check_values,
    power_tail_measure, prototype_drift, PolyChainSpec,
};
use lyapunov_lab::Result;

/// Collects the measurements of one criterion.
#[derive(Default)]
struct Checks {
    lines: Vec<String>,
    ok: bool,
}

impl Checks {
    fn new() -> Self {
        Self { lines: vec![], ok: true }
    }

    /// Records `value <= limit`.
    fn le(&mut self, what: &str, value: f64, limit: f64) {
        let pass = value <= limit;
        self.ok &= pass;
        self.lines.push(format!("{} {what}: {value:.3e} <= {limit:.1e}", mark(pass)));
    }

    fn holds(&mut self, what: &str, pass: bool) {
        self.ok &= pass;
        self.lines.push(format!("{} {what}", mark(pass)));
    }

    fn runtime(&mut self, what: &str, started: Instant, limit_s: f64) {
        let s = started.elapsed().as_secs_f64();
        let pass = s <= limit_s;
        self.ok &= pass;
        self.lines.push(format!("{} runtime {what}: {s:.2} s <= {limit_s} s", mark(pass)));
    }

    fn error(&mut self, what: &str, e: impl std::fmt::Display) {
        self.ok = false;
        self.lines.push(format!("{} {what}: error {e}", mark(false)));
    }
}

fn mark(pass: bool) -> &'static str {
    if pass {
        "ok  "
    } else {
        "FAIL"
    }
}

fn eigenvalues() -> Checks {
    let mut c = Checks::new();
    let cases: [(ClosedFormKernel, Result<GridDomain>, f64, Option<f64>); 3] = [
        (ClosedFormKernel::Harmonic, GridDomain::uniform(-8.0, 8.0, 400), 1e-3, Some(1e-3)),
        (ClosedFormKernel::DirichletHeat { n_terms: 50 }, GridDomain::cell_centred(0.0, 1.0, 200), 1e-2, None),
        (ClosedFormKernel::HalfHarmonic, GridDomain::cell_centred(0.0, 8.0, 400), 5e-3, None),
    ];
    for (k, grid, tol, h_tol) in cases {
        let started = Instant::now();
        let run = || -> Result<_> {
            let t = model_eigentriple(&k, Arc::new(grid?), 0.5)?;
            let h_err = ground_state_l2_error(&t.h, |x| k.ground_state(x).unwrap());
            Ok((t.rho, h_err))
        };
        match run() {
            Ok((rho, h_err)) => {
                let exact = k.leading_eigenvalue().unwrap();
                c.le(&format!("{} |rho_hat - ({exact:.6})|", k.name()), (rho - exact).abs(), tol);
                if let Some(ht) = h_tol {
                    c.le(&format!("{} L2 error of h", k.name()), h_err, ht);
                }
            }
            Err(e) => c.error(k.name(), e),
        }
        c.runtime(k.name(), started, 10.0);
    }
    c
}

fn kernel_identities() -> Checks {
    let mut c = Checks::new();
    let started = Instant::now();
    for t in [0.5, 1.0, 2.0] {
        let mut worst: f64 = 0.0;
        for i in 0..=80 {
            for j in 0..=80 {
                let (x, y) = (-4.0 + 0.1 * i as f64, -4.0 + 0.1 * j as f64);
                let d = mehler_kernel(t, x, y).unwrap() - hermite_series_kernel(t, x, y, 40).unwrap();
                worst = worst.max(d.abs());
            }
        }
        c.le(&format!("sup |Mehler - 40-term Hermite| at t = {t}"), worst, 1e-8);
    }
    let grids = [
        (ClosedFormKernel::Harmonic, GridDomain::uniform(-8.0, 8.0, 400)),
        (ClosedFormKernel::DirichletHeat { n_terms: 50 }, GridDomain::cell_centred(0.0, 1.0, 200)),
        (ClosedFormKernel::HalfHarmonic, GridDomain::cell_centred(0.0, 8.0, 400)),
    ];
    for (k, g) in grids {
        match g.and_then(|g| chapman_kolmogorov_error(&k, Arc::new(g), 0.5, 0.5)) {
            Ok(e) => c.le(&format!("{} Chapman-Kolmogorov sup error, t = s = 0.5", k.name()), e, 1e-4),
            Err(e) => c.error(k.name(), e),
        }
    }
    c.runtime("kernel identities", started, 5.0);
    c
}

fn riccati() -> Checks {
    let mut c = Checks::new();
    let (a0, a1, b) = (1.0, 0.5, 2.0);
    let s = ScalarRiccati::new(a0, a1, b).unwrap();
    let z_inf = (a1 + (a1 * a1 + 4.0 * a0 * b).sqrt()) / (2.0 * b);
    let (z, _) = scalar_riccati_with_error(&s, 0.0, 30.0, 1e-3).unwrap();
    c.le("scalar flow |z_30 - z_inf|", (z - z_inf).abs(), 1e-8);

    let m = MatrixRiccati::from_rows(&[vec![0.0]], &[vec![1.0]], &[vec![1.0]], None).unwrap();
    let mut worst: f64 = 0.0;
    for t in [0.5, 1.0, 2.0, 4.0] {
        let p = matrix_riccati_dt(&m, t, 1e-3).unwrap();
        worst = worst.max((p[(0, 0)] - t.tanh()).abs());
    }
    c.le("1D matrix flow |p_t - tanh t|, t in {0.5, 1, 2, 4}", worst, 1e-8);

    // Random controllable specs: Sigma is a single column, so controllability is not automatic.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut done = 0;
    let mut worst: f64 = 0.0;
    while done < 5 {
        let a = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0));
        let sigma = DMatrix::from_fn(2, 1, |_, _| rng.random_range(-1.0..1.0));
        if controllability_rank(&a, &sigma) < 2 {
            continue;
        }
        let l = DMatrix::from_fn(2, 2, |i, j| if i >= j { rng.random_range(-1.0..1.0) } else { 0.0 });
        let s = &l * l.transpose() + DMatrix::identity(2, 2) * 0.1;
        let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        match coupled_oscillator_semigroup(&a, &sigma, &s, &x, 40.0) {
            Ok(o) => worst = worst.max((o.rho_hat - o.rho).abs()),
            Err(e) => c.error("coupled oscillator", e),
        }
        done += 1;
    }
    c.le("coupled oscillator |rho_hat + Tr(p_inf S)/2| over 5 random specs", worst, 1e-6);

    let one = DMatrix::from_element(1, 1, 1.0);
    let h = coupled_oscillator_semigroup(&DMatrix::zeros(1, 1), &one, &one, &[0.0], 40.0).unwrap();
    c.le("n = 1 reduction |rho + 1/2|", (h.rho + 0.5).abs(), 1e-6);
    c
}

fn contraction() -> Checks {
    let mut c = Checks::new();
    let started = Instant::now();
    let held = (0..200u64)
        .filter(|&i| random_lemma_trial(20_240_601 + i).map(|t| t.holds).unwrap_or(false))
        .count();
    c.holds(&format!("lemma inequality on {held}/200 random certified chains"), held == 200);

    let run = || -> Result<f64> {
        let grid = Arc::new(GridDomain::uniform(-8.0, 8.0, 400)?);
        let k = ClosedFormKernel::Harmonic;
        let t = model_eigentriple(&k, grid.clone(), 0.5)?;
        let p = doob_h_transform(&discretize(&k, grid.clone(), 0.5)?, &t.h, t.rho)?;
        let v: LyapunovSpec = "poly:2".parse()?;
        let mu = MeasureVec::dirac(grid.clone(), grid.nearest(-2.0));
        let eta = MeasureVec::dirac(grid.clone(), grid.nearest(2.0));
        Ok(geometric_decay_curve(&p, &v, &mu, &eta, 20)?.rate.unwrap_or(f64::NAN))
    };
    match run() {
        Ok(rate) => c.le(&format!("Mehler decay rate {rate:.6}, relative error vs gap 1"), (rate - 1.0).abs(), 0.1),
        Err(e) => c.error("decay curve", e),
    }
    c.runtime("contraction suite", started, 30.0);
    c
}

fn subgeometric() -> Checks {
    let mut c = Checks::new();
    let started = Instant::now();

    // Sequences with u_{t+1} <= u_t - varsigma(u_t), varsigma(u) = kappa u^p.
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut violations = 0;
    let mut worst_excess = f64::NEG_INFINITY;
    for _ in 0..500 {
        let p: f64 = rng.random_range(1.0..3.0);
        let u0: f64 = rng.random_range(0.5..5.0);
        // kappa u0^(p-1) < 1 keeps the sequence positive.
        let kappa = rng.random_range(0.01..0.9) / u0.powf(p - 1.0);
        let varsigma = move |u: f64| kappa * u.powf(p);
        let bound = match ode_majorant(u0, &varsigma, 200) {
            Ok(b) => b,
            Err(e) => {
                c.error("ode_majorant", e);
                break;
            }
        };
        let mut u = u0;
        for (t, b) in bound.iter().enumerate() {
            let excess = (u - b) / b;
            worst_excess = worst_excess.max(excess);
            if excess > 1e-9 {
                violations += 1;
                break;
            }
            if t + 1 < bound.len() {
                let slack = rng.random_range(0.0..0.2) * (u - varsigma(u));
                u = u - varsigma(u) - slack;
            }
        }
    }
    c.holds(
        &format!("ODE majorant on 500 synthetic sequences: {violations} violations, max relative excess {worst_excess:.2e}"),
        violations == 0,
    );

    let run = || -> Result<f64> {
        let chain = polynomial_chain(&PolyChainSpec::certified())?;
        let drift = prototype_drift(0.5, 0.5, 0.25, 1.0)?;
        let v: Vec<f64> = chain.grid().xs().iter().map(|x| x.powi(3)).collect();
        let mu = power_tail_measure(&chain, 4.0)?;
        let r = polynomial_rate_check_values(&chain, &v, &drift, None, &mu, 500)?;
        if !r.certified {
            return Err(lyapunov_lab::Error::Config {
                path: "chain".into(),
                reason: "drift not certified".into(),
            });
        }
        loglog_slope(&r.tv, 50, 500)
    };
    match run() {
        Ok(slope) => c.le("certified chain (chi = 2) log-log tv slope over [50, 500]", slope, -0.4),
        Err(e) => c.error("polynomial chain", e),
    }

    for (n, i) in [(4, 2), (4, 3), (5, 4)] {
        let chi = polynomial_family(n, i).and_then(|(d, u)| prototype_drift(d, u, 1.0, 1.0)).map(|d| d.chi);
        match chi {
            Ok(chi) => c.le(&format!("(n, i) = ({n}, {i}) |1/chi - (i - 1)|"), (1.0 / chi - (i - 1) as f64).abs(), 1e-12),
            Err(e) => c.error("prototype drift", e),
        }
    }
    c.runtime("subgeometric suite", started, 30.0);
    c
}

fn chart_points(s: &MongeSurface, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            s.chart()
                .iter()
                .map(|&(a, b)| {
                    let m = 0.05 * (b - a);
                    rng.random_range(a + m..b - m)
                })
                .collect()
        })
        .collect()
}

/// Area element of the offset surface `theta -> psi(theta) + u N(theta)`, from
/// central differences of the offset map itself.
fn offset_area_element(s: &MongeSurface, theta: &[f64], u: f64) -> f64 {
    let h = 1e-5;
    let d = theta.len();
    let cols: Vec<_> = (0..d)
        .map(|k| {
            let mut p = theta.to_vec();
            let mut m = theta.to_vec();
            p[k] += h;
            m[k] -= h;
            (s.offset_point(&p, u).unwrap() - s.offset_point(&m, u).unwrap()) / (2.0 * h)
        })
        .collect();
    let j = DMatrix::from_columns(&cols);
    (j.transpose() * j).determinant().sqrt()
}

fn geometry() -> Checks {
    let mut c = Checks::new();
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for name in ["parabola", "paraboloid"] {
        let s = MongeSurface::fixture(name).unwrap();
        let pts = chart_points(&s, 100, &mut rng);
        let mut worst_w: f64 = 0.0;
        let mut worst_log: f64 = 0.0;
        for th in &pts {
            worst_w = worst_w.max(s.weingarten_residual(th, 1e-4).unwrap());
            // The area ratio is a polynomial of degree <= 2 in u, so the
            // central difference of the area element is exact at u = 0.
            let du = 1e-2;
            let a0 = offset_area_element(&s, th, 0.0);
            let dlog = (offset_area_element(&s, th, du) - offset_area_element(&s, th, -du)) / (2.0 * du * a0);
            let tr = s.frame(th).unwrap().w.trace();
            worst_log = worst_log.max((dlog + tr).abs());
        }
        c.le(&format!("{name} Weingarten residual, max over 100 random points"), worst_w, 1e-5);
        c.le(&format!("{name} |d/du log area(offset) + Tr W| at u = 0"), worst_log, 1e-6);
    }
    let parabola = MongeSurface::fixture("parabola").unwrap();
    for (label, power) in [("1", 0.0), ("r^(-1/2)", 0.5)] {
        match coarea_check(&parabola, |r: f64| r.powf(-power), 0.2, 48) {
            Ok(r) => c.le(&format!("co-area relative difference, f = {label}"), r.rel_diff, 1e-3),
            Err(e) => c.error("co-area", e),
        }
    }
    let atlas = Atlas::fixture("parabola_atlas").unwrap();
    let mut worst: f64 = 0.0;
    for x in [[1.5, 2.25], [1.2, 1.44], [1.8, 3.24]] {
        match atlas.curvature_agreement(&x) {
            Ok(a) => worst = worst.max(a.spread),
            Err(e) => c.error("cross chart", e),
        }
    }
    c.le("cross-chart principal curvature spread", worst, 1e-8);
    c.runtime("geometry suite", started, 10.0);
    c
}

fn monte_carlo() -> Checks {
    let mut c = Checks::new();
    let budget = McBudget::default();
    // The two harmonic QSD cases share one simulation and are timed together.
    let mut groups: Vec<Vec<&str>> = vec![];
    for case in MC_CASES {
        match groups.last_mut() {
            Some(g) if g[0] == "qsd_harmonic_rho" && case == "qsd_harmonic_var" => g.push(case),
            _ => groups.push(vec![case]),
        }
    }
    for g in groups {
        let started = Instant::now();
        match mc_validate_batch(&g, &budget) {
            Ok(reports) => {
                for r in reports {
                    let what = format!("{} estimate {:.6} vs {:.6}", r.case, r.estimate, r.oracle);
                    match r.band {
                        Some(b) => c.le(&format!("{what}, |error|"), (r.estimate - r.oracle).abs(), b),
                        None => c.le(&format!("{what}, |z|"), r.z.abs(), 3.0),
                    }
                }
            }
            Err(e) => c.error(g[0], e),
        }
        c.runtime(&g.join(" + "), started, 60.0);
    }
    c
}

fn scratch_dir(tag: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("lyaplab-acceptance-{}-{tag}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    d
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .map(|it| {
            it.filter_map(|e| e.ok())
                .map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap_or_default()))
                .collect()
        })
        .unwrap_or_default();
    out.sort();
    out
}

fn determinism() -> Checks {
    let mut c = Checks::new();
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut configs: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map(|it| it.filter_map(|e| e.ok()).map(|e| e.path()).collect())
        .unwrap_or_default();
    configs.sort();
    if configs.is_empty() {
        c.error("configs", format!("none found in {}", dir.display()));
    }
    for path in configs {
        let name = path.file_stem().unwrap().to_string_lossy().into_owned();
        let mut runs = vec![];
        for k in 0..2 {
            let out = scratch_dir(&format!("{name}-{k}"));
            let result = load_config(&path).and_then(|mut cfg| {
                Overrides {
                    out: Some(out.clone()),
                    seed: Some(20_240_601),
                    threads: Some(2),
                }
                .apply(&mut cfg);
                run_experiment(&cfg)
            });
            match result {
                Ok(_) => runs.push(read_dir_sorted(&out)),
                Err(e) => c.error(&name, e),
            }
            let _ = std::fs::remove_dir_all(&out);
        }
        if runs.len() == 2 {
            let files = runs[0].len();
            c.holds(&format!("{name}: {files} artifacts byte-identical across reruns"), files > 0 && runs[0] == runs[1]);
        }
    }
    c
}

type Criterion = (&'static str, fn() -> Checks);

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("eigenvalue recovery", eigenvalues),
        ("kernel identities", kernel_identities),
        ("Riccati flows", riccati),
        ("contraction suite", contraction),
        ("subgeometric suite", subgeometric),
        ("geometry suite", geometry),
        ("Monte Carlo validation", monte_carlo),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let c = f();
        for l in &c.lines {
            println!("    {l}");
        }
        println!(
            "criterion {} {name}: {} ({:.1} s)",
            i + 1,
            if c.ok { "PASS" } else { "FAIL" },
            started.elapsed().as_secs_f64()
        );
        if !c.ok {
            failed += 1;
        }
    }
    println!("acceptance: {}/8 criteria passed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
