use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde_json::json;

use semitrace_core::config::ExperimentConfig;
use semitrace_core::export::{self, Manifest};
use semitrace_core::orbits::{enumerate_orbits, EnergyShell, OrbitOptions};
use semitrace_core::quantum_oracle::{exact_rho, GridHamiltonian};
use semitrace_core::traceformula::{self, compare_curves, CoherentOptions, TraceOptions};
use semitrace_core::validation::{self, SuiteOptions, CHECKS};
use semitrace_core::wavepackets::{compare_with_exact, packet_grid};
use semitrace_core::{oscillatory, Error, Hamiltonian, PhaseSpacePoint};

#[derive(Parser)]
#[command(name = "semitrace", version, about = "Periodic orbits, wave packets and semiclassical densities of states")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (TOML). Built-in defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override hbar; comma-separated for several values.
    #[arg(long, value_delimiter = ',')]
    hbar: Option<Vec<f64>>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for scans and Monte Carlo.
    #[arg(long)]
    seed: Option<u64>,
    /// Tolerance overrides, e.g. `orbit=1e-8,coherent=5e-3`.
    #[arg(long)]
    tol_overrides: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Find periodic orbits on the energy shell.
    Orbits(Common),
    /// Regularized density of states by the selected routes.
    Rho {
        #[command(flatten)]
        common: Common,
        /// Subset of exact, semiclassical, coherent.
        #[arg(long, value_delimiter = ',', default_value = "exact,semiclassical")]
        routes: Vec<String>,
    },
    /// Run the invariant suite and write a pass/fail report.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Checks to run (default: all).
        #[arg(long, value_delimiter = ',')]
        checks: Option<Vec<String>>,
        /// Add this to every Maslov index (mutation test).
        #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
        maslov_shift: i32,
    },
    /// Leading-order packet versus exact propagation over the hbar sweep.
    Wavepacket(Common),
    /// Stationary-phase expansion checks.
    Staphase(Common),
}

/// Failure classes mapped to exit codes.
enum Failure {
    Validation(String),
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<Error>() {
            Some(Error::Config { .. }) => Failure::Usage(e),
            _ => Failure::Runtime(e),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::from(anyhow::Error::from(e))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Orbits(c) => cmd_orbits(&c),
        Command::Rho { common, routes } => cmd_rho(&common, &routes),
        Command::Validate { common, checks, maslov_shift } => cmd_validate(&common, checks, maslov_shift),
        Command::Wavepacket(c) => cmd_wavepacket(&c),
        Command::Staphase(c) => cmd_staphase(&c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("validation failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("usage error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load(common: &Common) -> Result<(ExperimentConfig, PathBuf), Failure> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p).map_err(|e| match e {
            Error::Io(_) => Failure::Usage(anyhow::Error::from(e).context(format!("reading {}", p.display()))),
            other => Failure::from(other),
        })?,
        None => ExperimentConfig::default(),
    };
    if let Some(h) = &common.hbar {
        cfg.hbar = semitrace_core::config::HbarSpec::Many(h.clone());
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(t) = &common.tol_overrides {
        cfg.tolerances.apply_overrides(t)?;
    }
    if let Some(o) = &common.out {
        cfg.out = o.display().to_string();
    }
    cfg.validate()?;
    let out = PathBuf::from(&cfg.out);
    Ok((cfg, out))
}

fn orbit_options(cfg: &ExperimentConfig) -> OrbitOptions {
    let mut o = OrbitOptions { tol: cfg.tolerances.orbit, ..OrbitOptions::default() };
    o.flow.energy_tol = cfg.tolerances.energy_drift;
    o
}

fn cmd_orbits(common: &Common) -> Result<(), Failure> {
    let (cfg, out) = load(common)?;
    let system = cfg.builtin()?;
    let shell = EnergyShell::new(system, cfg.energy, cfg.half_width)?;
    let strategy = cfg.seed_strategy()?;
    if strategy.seeds.is_empty() && strategy.scan.is_none() {
        warn!("no orbit seeds and no scan configured; the orbit table is empty");
    }
    let table = enumerate_orbits(&shell, cfg.t_max(), &strategy, &orbit_options(&cfg))?;
    let manifest = Manifest::new("orbits", &cfg, json!({ "t_max": cfg.t_max() }));
    let (header, rows) = export::orbit_table_rows(&table);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    export::write_csv(&out.join("orbits.csv"), &header, &rows, &manifest)?;
    export::write_json(&out.join("orbits.json"), &table, &manifest)?;
    println!(
        "{}: {} primitive orbit(s), {} entries with |T| <= {}",
        system.descriptor(),
        table.primitive_count,
        table.orbits.len(),
        cfg.t_max()
    );
    for o in &table.orbits {
        println!(
            "  k={:>3}  T*={:.10}  T={:.10}  S={:.10}  sigma={:>3}  |det(I-P)|={:.6e}",
            o.k, o.t_star, o.period, o.action, o.maslov, o.det_i_minus_p
        );
    }
    if !strategy.seeds.is_empty() && table.orbits.is_empty() {
        return Err(Failure::Runtime(anyhow::anyhow!("no periodic orbits found from the configured seeds")));
    }
    Ok(())
}

fn fmt_hbar(h: f64) -> String {
    format!("{h:e}").replace('-', "m")
}

fn cmd_rho(common: &Common, routes: &[String]) -> Result<(), Failure> {
    let routes: Vec<&str> = routes.iter().map(|s| s.trim()).filter(|s| !s.is_empty()).collect();
    if routes.is_empty() {
        return Err(Failure::Usage(anyhow::anyhow!("--routes must name at least one of exact, semiclassical, coherent")));
    }
    for r in &routes {
        if !["exact", "semiclassical", "coherent"].contains(r) {
            return Err(Failure::Usage(anyhow::anyhow!("unknown route {r:?}")));
        }
    }
    let (cfg, out) = load(common)?;
    let system = cfg.builtin()?;
    let window = cfg.window()?;
    let grid = cfg.energy_grid();
    let mut summaries = Vec::new();
    for hbar in cfg.hbar.values() {
        let mut columns: Vec<(String, Vec<f64>)> = vec![("energy".into(), grid.clone())];
        let mut exact = None;
        let mut curves: Vec<(String, Vec<f64>)> = Vec::new();
        if routes.contains(&"exact") {
            let gh = match (cfg.quantum.half_width, cfg.quantum.points) {
                (Some(l), Some(n)) => GridHamiltonian::build(&system, l, n, hbar, cfg.energy, cfg.half_width),
                _ => GridHamiltonian::for_window(&system, hbar, cfg.energy, cfg.half_width),
            }
            .context("exact route")?;
            info!("exact route: {} grid points per axis", gh.points);
            let rho = exact_rho(&gh, &window, &grid, &cfg.observable).context("exact route")?;
            columns.push(("rho_exact".into(), rho.clone()));
            exact = Some(rho);
        }
        if routes.contains(&"semiclassical") {
            let shell = EnergyShell::new(system, cfg.energy, cfg.half_width)?;
            let table = enumerate_orbits(&shell, cfg.t_max(), &cfg.seed_strategy()?, &orbit_options(&cfg))
                .context("semiclassical route: orbit search")?;
            if table.orbits.is_empty() {
                warn!("no periodic orbits with |T| <= {}; the semiclassical curve is the Weyl term", cfg.t_max());
            }
            let opts = TraceOptions {
                orbit: orbit_options(&cfg),
                maslov_shift: 0,
                max_repetition: cfg.orbits.max_repetition,
            };
            let dos = traceformula::semiclassical_rho(&system, &window, &table, &cfg.observable, hbar, &grid, &opts)
                .context("semiclassical route")?;
            columns.push(("rho_semiclassical".into(), dos.total.clone()));
            columns.push(("weyl".into(), dos.weyl.clone()));
            for s in &dos.orbit_terms {
                columns.push((format!("orbit{}_k{}_re", s.primitive, s.k), s.values.iter().map(|v| v.re).collect()));
            }
            curves.push(("semiclassical".into(), dos.total));
        }
        if routes.contains(&"coherent") {
            let opts = CoherentOptions { tol: cfg.tolerances.coherent, ..CoherentOptions::default() };
            let cs = traceformula::rho_via_coherent_states(&system, &window, hbar, &grid, &opts)
                .context("coherent route")?;
            columns.push(("rho_coherent".into(), cs.rho.clone()));
            curves.push(("coherent".into(), cs.rho));
        }
        let manifest = Manifest::new("rho", &cfg, json!({ "hbar": hbar, "routes": routes }));
        let header: Vec<&str> = columns.iter().map(|c| c.0.as_str()).collect();
        let rows: Vec<Vec<f64>> = (0..grid.len()).map(|i| columns.iter().map(|c| c.1[i]).collect()).collect();
        export::write_csv(&out.join(format!("rho_hbar_{}.csv", fmt_hbar(hbar))), &header, &rows, &manifest)?;
        let mut comparisons = serde_json::Map::new();
        if let Some(ex) = &exact {
            for (name, c) in &curves {
                let cmp = compare_curves(&grid, c, ex);
                println!(
                    "hbar={hbar}: {name} vs exact: relative Linf {:.3e}, max peak offset {:.3e} ({} vs {} peaks)",
                    cmp.relative_linf, cmp.max_peak_offset, cmp.peaks_a, cmp.peaks_b
                );
                comparisons.insert(name.clone(), serde_json::to_value(cmp).expect("serializable"));
            }
        } else {
            println!("hbar={hbar}: computed {}", routes.join(", "));
        }
        summaries.push(json!({ "hbar": hbar, "comparisons": comparisons }));
    }
    let manifest = Manifest::new("rho", &cfg, json!({ "routes": routes }));
    export::write_json(&out.join("rho_summary.json"), &summaries, &manifest)?;
    Ok(())
}

fn cmd_validate(common: &Common, checks: Option<Vec<String>>, maslov_shift: i32) -> Result<(), Failure> {
    let (cfg, out) = load(common)?;
    let selection: Vec<String> = checks.unwrap_or_else(|| CHECKS.iter().map(|s| s.to_string()).collect());
    for c in &selection {
        if !CHECKS.contains(&c.as_str()) {
            return Err(Failure::Usage(anyhow::anyhow!("unknown check {c:?}; known: {}", CHECKS.join(", "))));
        }
    }
    let opts = SuiteOptions {
        hbar: cfg.hbar.values()[0],
        packet_hbars: cfg.wavepacket.hbars.clone(),
        seed: cfg.seed,
        maslov_shift,
        tolerances: cfg.tolerances.clone(),
    };
    let report = validation::run_suite(&selection, &opts)?;
    for c in &report.checks {
        println!(
            "[{}] {:<18} measured {:.3e} (threshold {:.3e})  {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.measured,
            c.threshold,
            c.detail
        );
    }
    let manifest = Manifest::new("validate", &cfg, json!({ "checks": selection, "maslov_shift": maslov_shift }));
    export::write_json(&out.join("validation.json"), &report, &manifest)?;
    if report.passed {
        Ok(())
    } else {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        Err(Failure::Validation(failed.join(", ")))
    }
}

fn cmd_wavepacket(common: &Common) -> Result<(), Failure> {
    let (cfg, out) = load(common)?;
    let system = cfg.builtin()?;
    let wp = &cfg.wavepacket;
    let alpha = PhaseSpacePoint::new(wp.q.clone(), wp.p.clone())?;
    if alpha.dim() != system.dim() {
        return Err(Failure::Usage(anyhow::anyhow!("wavepacket.q has {} components, the system needs {}", alpha.dim(), system.dim())));
    }
    let hbars = if common.hbar.is_some() { cfg.hbar.values() } else { wp.hbars.clone() };
    let mut rows = Vec::new();
    let mut errs = Vec::new();
    for &h in &hbars {
        let grid = packet_grid(&system, &alpha, h)?;
        let c = compare_with_exact(&system, &grid, &alpha, wp.time, h, cfg.tolerances.richardson, &orbit_options(&cfg).flow)
            .with_context(|| format!("hbar = {h}"))?;
        println!("hbar={h:<10} L2 error {:.4e}  grid {}  steps {}", c.l2_error, c.grid_points, c.steps);
        rows.push(vec![h, c.l2_error, c.phase_offset, c.packet_norm, c.exact_norm, c.grid_points as f64, c.steps as f64]);
        errs.push(c.l2_error);
    }
    let slope = if hbars.len() >= 2 { oscillatory::log_log_slope(&hbars, &errs).ok() } else { None };
    if let Some(s) = slope {
        println!("log-log slope of the L2 error against hbar: {s:.4}");
    }
    let manifest = Manifest::new("wavepacket", &cfg, json!({ "hbars": hbars }));
    export::write_csv(
        &out.join("wavepacket.csv"),
        &["hbar", "l2_error", "phase_offset", "packet_norm", "exact_norm", "grid_points", "steps"],
        &rows,
        &manifest,
    )?;
    export::write_json(&out.join("wavepacket.json"), &json!({ "hbars": hbars, "errors": errs, "slope": slope }), &manifest)?;
    Ok(())
}

fn cmd_staphase(common: &Common) -> Result<(), Failure> {
    let (cfg, out) = load(common)?;
    let mut reports = Vec::new();
    let mut ok = true;
    for p in oscillatory::builtin_suite() {
        p.validate(cfg.seed)?;
        let r = oscillatory::verify_expansion(&p, cfg.tolerances.staphase).with_context(|| p.name.clone())?;
        let c0 = r.c0.last().copied().unwrap_or_default();
        let accepted = r.accepted;
        println!(
            "[{}] {:<20} exponent {:.4}  c0 = {:.6}{:+.6}i  modulus error {}",
            if accepted { "PASS" } else { "FAIL" },
            r.name,
            r.exponent,
            c0.re,
            c0.im,
            r.modulus_error.map_or("n/a".into(), |e| format!("{e:.2e}"))
        );
        ok &= accepted;
        reports.push(r);
    }
    let manifest = Manifest::new("staphase", &cfg, json!({}));
    export::write_json(&out.join("staphase.json"), &reports, &manifest)?;
    if ok {
        Ok(())
    } else {
        Err(Failure::Validation("stationary-phase expansion".into()))
    }
}
