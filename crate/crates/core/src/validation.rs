//! Named invariant checks run by `semitrace validate`.

use std::f64::consts::PI;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::Tolerances;
use crate::dynamics::{self, FlowOptions};
use crate::error::{Error, Result};
use crate::hamiltonians::{Builtin, Hamiltonian, PhaseSpacePoint};
use crate::linalg::symplectic_defect;
use crate::observable::Observable;
use crate::orbits::{self, enumerate_orbits, EnergyShell, OrbitOptions, SeedStrategy};
use crate::oscillatory::{self, hessian_identity_check, normal_mode_orbit};
use crate::quantum_oracle::GridHamiltonian;
use crate::traceformula::{peak_positions, semiclassical_rho, uniform_grid, TraceOptions};
use crate::wavepackets::{compare_with_exact, packet_grid};
use crate::window::SpectralWindow;

pub const GOLDEN: f64 = 1.618_033_988_749_895;

/// Names of all checks, in run order.
pub const CHECKS: &[&str] = &[
    "symplecticity",
    "monodromy",
    "maslov",
    "bohr_sommerfeld",
    "quantum_ho1d",
    "hessian_identity",
    "packet_scaling",
    "stationary_phase",
];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub threshold: f64,
    pub detail: String,
}

impl CheckResult {
    fn upper(name: &str, measured: f64, threshold: f64, detail: String) -> Self {
        Self {
            name: name.into(),
            passed: measured <= threshold,
            measured,
            threshold,
            detail,
        }
    }

    fn failed(name: &str, err: &Error) -> Self {
        Self {
            name: name.into(),
            passed: false,
            measured: f64::NAN,
            threshold: f64::NAN,
            detail: format!("error: {err}"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteReport {
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteOptions {
    /// hbar of the Bohr-Sommerfeld check.
    pub hbar: f64,
    pub packet_hbars: Vec<f64>,
    pub seed: u64,
    /// Added to every Maslov index (mutation testing).
    pub maslov_shift: i32,
    pub tolerances: Tolerances,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            hbar: 0.05,
            packet_hbars: vec![2e-2, 1e-2, 5e-3],
            seed: 0,
            maslov_shift: 0,
            tolerances: Tolerances::default(),
        }
    }
}

/// Runs the selected checks; an empty selection passes trivially.
pub fn run_suite(selection: &[String], opts: &SuiteOptions) -> Result<SuiteReport> {
    if selection.is_empty() {
        warn!("empty check selection; nothing to validate");
    }
    let mut checks = Vec::new();
    for name in selection {
        let outcome = match name.as_str() {
            "symplecticity" => check_symplecticity(opts),
            "monodromy" => check_monodromy(opts),
            "maslov" => check_maslov(opts),
            "bohr_sommerfeld" => check_bohr_sommerfeld(opts),
            "quantum_ho1d" => check_quantum_ho1d(opts),
            "hessian_identity" => check_hessian_identity(opts),
            "packet_scaling" => check_packet_scaling(opts),
            "stationary_phase" => check_stationary_phase(opts),
            other => return Err(Error::param(format!("unknown check {other:?}; known: {}", CHECKS.join(", ")))),
        };
        checks.push(outcome.unwrap_or_else(|e| CheckResult::failed(name, &e)));
    }
    let passed = checks.iter().all(|c| c.passed);
    Ok(SuiteReport { checks, passed })
}

fn flow_opts(opts: &SuiteOptions) -> FlowOptions {
    FlowOptions {
        energy_tol: opts.tolerances.energy_drift,
        ..FlowOptions::default()
    }
}

fn orbit_opts(opts: &SuiteOptions) -> OrbitOptions {
    OrbitOptions {
        tol: opts.tolerances.orbit,
        ..OrbitOptions::default()
    }
}

/// Largest ||F^T J F - J|| and relative energy drift over random shell
/// points of a system, integrated to `t`.
pub fn flow_defects<H: Hamiltonian>(system: &H, energy: f64, points: usize, t: f64, seed: u64, opts: &FlowOptions) -> Result<(f64, f64)> {
    let shell = EnergyShell::new(system, energy, 0.5)?;
    let n = system.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut defect, mut drift) = (0.0f64, 0.0f64);
    let mut done = 0;
    while done < points {
        let z: Vec<f64> = (0..2 * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let Ok(z) = shell.project(&z) else { continue };
        let (traj, flow) = dynamics::integrate_with_jacobi(system, &PhaseSpacePoint::from_slice(&z), t, &FlowOptions { samples: 16, ..*opts })?;
        for f in &flow.f {
            defect = defect.max(symplectic_defect(f));
        }
        drift = drift.max(traj.max_energy_drift / energy.abs().max(1.0));
        done += 1;
    }
    Ok((defect, drift))
}

fn check_symplecticity(opts: &SuiteOptions) -> Result<CheckResult> {
    let fo = flow_opts(opts);
    let mut defect = 0.0f64;
    let mut drift = 0.0f64;
    let systems: [(Builtin, f64); 3] = [
        (Builtin::Ho1d, 1.0),
        (Builtin::Quartic1d { a: 0.0 }, 1.0),
        (Builtin::Ho2dAniso { omega: GOLDEN }, 1.0),
    ];
    for (sys, e) in systems {
        let (d, dr) = flow_defects(&sys, e, 10, 2.0 * 3.5, opts.seed, &fo)?;
        defect = defect.max(d);
        drift = drift.max(dr);
    }
    let mut r = CheckResult::upper("symplecticity", defect, 1e-8, format!("max energy drift {drift:.2e}"));
    r.passed &= drift <= opts.tolerances.energy_drift;
    Ok(r)
}

fn check_monodromy(opts: &SuiteOptions) -> Result<CheckResult> {
    let o = normal_mode_orbit(Builtin::Ho2dAniso { omega: GOLDEN }, 1.0, PI, 1, &orbit_opts(opts))?;
    let exact = 4.0 * (GOLDEN * PI).sin().powi(2);
    let rel = (o.det_i_minus_p - exact).abs() / exact;
    let unit = o.poincare_eigs.iter().map(|l| (l.norm() - 1.0).abs()).fold(0.0, f64::max);
    let mut r = CheckResult::upper("monodromy", rel, 1e-6, format!("|det(I-P)| = {:.10}, unit-circle defect {unit:.1e}", o.det_i_minus_p));
    r.passed &= unit <= 1e-6;
    Ok(r)
}

fn ho1d_shell_table(energy: f64, t_max: f64, opts: &OrbitOptions) -> Result<orbits::OrbitTable> {
    let shell = EnergyShell::new(Builtin::Ho1d, energy, 0.5)?;
    let strat = SeedStrategy {
        seeds: vec![(PhaseSpacePoint::new(vec![energy.sqrt()], vec![0.0])?, 3.0)],
        scan: None,
    };
    enumerate_orbits(&shell, t_max, &strat, opts)
}

fn check_maslov(opts: &SuiteOptions) -> Result<CheckResult> {
    let table = ho1d_shell_table(1.0, 3.0 * PI + 0.1, &orbit_opts(opts))?;
    let mut worst = 0i32;
    let mut detail = Vec::new();
    for o in &table.orbits {
        let sigma = o.maslov + opts.maslov_shift * o.k.signum();
        worst = worst.max((sigma - 2 * o.k).abs());
        detail.push(format!("k={} sigma={sigma}", o.k));
    }
    if table.orbits.len() != 6 {
        return Err(Error::param(format!("expected k = +-1, +-2, +-3, found {} orbits", table.orbits.len())));
    }
    Ok(CheckResult::upper("maslov", worst as f64, 0.0, detail.join(", ")))
}

/// Largest distance of a semiclassical peak of ho1d from hbar(2k+1).
pub fn bohr_sommerfeld_offset(hbar: f64, maslov_shift: i32, opts: &OrbitOptions) -> Result<f64> {
    let table = ho1d_shell_table(1.0, 3.5, opts)?;
    let w = SpectralWindow::new(3.5, 1.0, 1.6)?.with_plateau(0.8)?;
    let grid = uniform_grid(0.8, 1.2, 401);
    let to = TraceOptions { orbit: *opts, maslov_shift, max_repetition: None };
    let dos = semiclassical_rho(&Builtin::Ho1d, &w, &table, &Observable::Identity, hbar, &grid, &to)?;
    let peaks = peak_positions(&grid, &dos.total);
    if peaks.is_empty() {
        return Err(Error::param("no peaks in the semiclassical density"));
    }
    Ok(peaks
        .iter()
        .map(|p| {
            let k = ((p / hbar - 1.0) / 2.0).round();
            (p - hbar * (2.0 * k + 1.0)).abs()
        })
        .fold(0.0, f64::max))
}

fn check_bohr_sommerfeld(opts: &SuiteOptions) -> Result<CheckResult> {
    let off = bohr_sommerfeld_offset(opts.hbar, opts.maslov_shift, &orbit_opts(opts))?;
    Ok(CheckResult::upper(
        "bohr_sommerfeld",
        off,
        opts.hbar / 20.0,
        format!("max peak offset from hbar(2k+1) at hbar = {}", opts.hbar),
    ))
}

fn check_quantum_ho1d(_opts: &SuiteOptions) -> Result<CheckResult> {
    let hbar = 0.05;
    let g = GridHamiltonian::build(&Builtin::Ho1d, 4.0, 512, hbar, 1.0, 0.5)?;
    let ev = g.eigenvalues();
    let worst = (0..=20)
        .map(|k| {
            let exact = hbar * (2 * k + 1) as f64;
            (ev[k] - exact).abs() / exact
        })
        .fold(0.0, f64::max);
    Ok(CheckResult::upper("quantum_ho1d", worst, 1e-8, "relative eigenvalue error, k <= 20".into()))
}

fn check_hessian_identity(opts: &SuiteOptions) -> Result<CheckResult> {
    let sys = Builtin::Ho2dAniso { omega: GOLDEN };
    let mut worst = 0.0f64;
    let mut ok = true;
    for k in [1, -1] {
        let o = normal_mode_orbit(sys, 1.0, PI, k, &orbit_opts(opts))?;
        let r = hessian_identity_check(&sys, &o, 1000, opts.seed, &flow_opts(opts))?;
        worst = worst.max(r.relative_residual);
        ok &= r.null_dim == 1 && r.im_phi_violations == 0;
    }
    let mut r = CheckResult::upper("hessian_identity", worst, opts.tolerances.identity, "k = +1, -1".into());
    r.passed &= ok;
    Ok(r)
}

/// L2 errors of the leading-order packet against exact propagation.
pub fn packet_errors<H: Hamiltonian>(system: &H, alpha: &PhaseSpacePoint, t: f64, hbars: &[f64], richardson_tol: f64) -> Result<Vec<f64>> {
    hbars
        .iter()
        .map(|&h| {
            let grid = packet_grid(system, alpha, h)?;
            Ok(compare_with_exact(system, &grid, alpha, t, h, richardson_tol, &FlowOptions::default())?.l2_error)
        })
        .collect()
}

fn check_packet_scaling(opts: &SuiteOptions) -> Result<CheckResult> {
    let alpha = PhaseSpacePoint::new(vec![0.5], vec![0.0])?;
    let errs = packet_errors(&Builtin::Quartic1d { a: 0.0 }, &alpha, 1.0, &opts.packet_hbars, opts.tolerances.richardson)?;
    let slope = oscillatory::log_log_slope(&opts.packet_hbars, &errs)?;
    Ok(CheckResult {
        name: "packet_scaling".into(),
        passed: (0.4..=0.6).contains(&slope),
        measured: slope,
        threshold: 0.5,
        detail: format!("log-log slope of L2 error vs hbar in [0.4, 0.6]; errors {errs:?}"),
    })
}

fn check_stationary_phase(opts: &SuiteOptions) -> Result<CheckResult> {
    let mut worst = 0.0f64;
    let mut ok = true;
    let mut detail = Vec::new();
    for p in [oscillatory::fresnel_problem(), oscillatory::circle_problem()] {
        let r = oscillatory::verify_expansion(&p, opts.tolerances.staphase)?;
        ok &= r.accepted;
        worst = worst.max((r.exponent - 1.0).abs());
        detail.push(format!("{}: exponent {:.3}, modulus error {:.2e}", r.name, r.exponent, r.modulus_error.unwrap_or(0.0)));
    }
    Ok(CheckResult {
        name: "stationary_phase".into(),
        passed: ok,
        measured: worst,
        threshold: 0.3,
        detail: detail.join("; "),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_selection_passes() {
        let r = run_suite(&[], &SuiteOptions::default()).unwrap();
        assert!(r.passed && r.checks.is_empty());
        assert!(run_suite(&["nope".into()], &SuiteOptions::default()).is_err());
    }

    #[test]
    fn maslov_mutation_is_detected() {
        let names = vec!["maslov".to_string(), "bohr_sommerfeld".to_string()];
        let good = run_suite(&names, &SuiteOptions::default()).unwrap();
        assert!(good.passed, "{good:?}");
        let bad = run_suite(&names, &SuiteOptions { maslov_shift: 2, ..SuiteOptions::default() }).unwrap();
        assert!(bad.checks.iter().all(|c| !c.passed), "{bad:?}");
        // the flipped sign moves the peaks by hbar
        let off = bohr_sommerfeld_offset(0.05, 2, &OrbitOptions::default()).unwrap();
        assert!((off - 0.05).abs() < 2.5e-3, "{off}");
    }
}
