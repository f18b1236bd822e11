//! Semiclassical side of the regularized density of states: the Weyl term
//! plus periodic-orbit terms, and an independent evaluation through the
//! coherent-state phase-space integral (n = 1).
//!
//! rho_A(E) ~ (2 pi)^{-n} hbar^{1-n} ĝ(0) int_{Sigma_E} A dsigma_E
//!   + sum_gamma (2 pi)^{-1} ĝ(T_gamma) e^{i(S_gamma/hbar + sigma_gamma pi/2)}
//!     |det(I - P_gamma)|^{-1/2} int_0^{T*_gamma} A(alpha_s) ds

use std::f64::consts::PI;

use log::warn;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, FlowOptions};
use crate::error::{Error, Result};
use crate::hamiltonians::{Hamiltonian, PhaseSpacePoint};
use crate::observable::Observable;
use crate::orbits::{self, EnergyShell, OrbitOptions, OrbitTable, PeriodicOrbit};
use crate::quadrature::{gauss_legendre, CompositeRule};
use crate::window::SpectralWindow;

/// Evaluated orbit term along the energy grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrbitSeries {
    /// Index of the primitive orbit in the input table.
    pub primitive: usize,
    pub k: i32,
    pub t_star: Vec<f64>,
    pub action: Vec<f64>,
    pub maslov: Vec<i32>,
    pub det_i_minus_p: Vec<f64>,
    pub observable_integral: Vec<f64>,
    pub values: Vec<Complex64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityOfStates {
    pub e_grid: Vec<f64>,
    pub hbar: f64,
    pub support: f64,
    pub weyl: Vec<f64>,
    pub orbit_terms: Vec<OrbitSeries>,
    pub total: Vec<f64>,
    /// Largest |Im| of the assembled sum before taking the real part.
    pub imaginary_residue: f64,
    /// Largest relative deviation of the finite-difference dS/dE from T.
    pub ds_de_max_rel_dev: Option<f64>,
}

impl DensityOfStates {
    /// Weyl + sum over k > 0 of 2 Re(term).
    pub fn total_from_positive(&self) -> Vec<f64> {
        let mut out = self.weyl.clone();
        for s in self.orbit_terms.iter().filter(|s| s.k > 0) {
            for (o, v) in out.iter_mut().zip(&s.values) {
                *o += 2.0 * v.re;
            }
        }
        out
    }
}

/// Options of the semiclassical assembly.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TraceOptions {
    pub orbit: OrbitOptions,
    /// Added to every Maslov index (mutation testing).
    pub maslov_shift: i32,
    /// Keep only repetitions with |k| up to this bound.
    pub max_repetition: Option<u32>,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self {
            orbit: OrbitOptions::default(),
            maslov_shift: 0,
            max_repetition: None,
        }
    }
}

/// Result of an integral over the energy shell against dsigma_E.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LiouvilleIntegral {
    pub value: f64,
    pub method: String,
    /// Relative change under refinement.
    pub spread: f64,
}

/// Weyl prefactor (2 pi)^{-n} hbar^{1-n} ĝ(0).
pub fn weyl_prefactor(n: usize, window: &SpectralWindow, hbar: f64) -> f64 {
    (2.0 * PI).powi(-(n as i32)) * hbar.powi(1 - n as i32) * window.ghat(0.0)
}

/// The Weyl term at energy E.
pub fn weyl_term<H: Hamiltonian>(
    system: &H,
    energy: f64,
    window: &SpectralWindow,
    observable: &Observable,
    hbar: f64,
) -> Result<f64> {
    if observable.is_zero() {
        return Ok(0.0);
    }
    let integral = liouville_integral(system, energy, observable)?;
    Ok(weyl_prefactor(system.dim(), window, hbar) * integral.value)
}

/// int_{Sigma_E} A dsigma_E: the orbit-time integral for n = 1, a polar
/// co-area quadrature pi int_{V < E} A(q) dq for mechanical n = 2.
pub fn liouville_integral<H: Hamiltonian>(system: &H, energy: f64, observable: &Observable) -> Result<LiouvilleIntegral> {
    observable.validate(system.dim())?;
    match system.dim() {
        1 => {
            let (start, guess) = shell_start_1d(system, energy)?;
            let shell = EnergyShell::new(system, energy, 1.0)?;
            let orbit = find_primitive_fast(&shell, &start, guess, &OrbitOptions::default())?;
            let value = observable_integral(system, &orbit.0, orbit.1, observable, &FlowOptions::default())?;
            Ok(LiouvilleIntegral { value, method: "orbit time".into(), spread: 0.0 })
        }
        2 => polar_coarea(system, energy, observable),
        n => Err(Error::param(format!("Liouville integral not implemented for n = {n}"))),
    }
}

/// Newton shooting without the primitive-period search or Poincaré data.
fn find_primitive_fast<H: Hamiltonian>(
    shell: &EnergyShell<H>,
    seed: &PhaseSpacePoint,
    guess: f64,
    opts: &OrbitOptions,
) -> Result<(PhaseSpacePoint, f64)> {
    let orbit = orbits::find_periodic_orbit(shell, seed, guess, opts)?;
    Ok((orbit.start, orbit.t_star))
}

/// int_0^T A(alpha_s) ds along the flow from `start`.
pub fn observable_integral<H: Hamiltonian + ?Sized>(
    system: &H,
    start: &PhaseSpacePoint,
    t: f64,
    observable: &Observable,
    opts: &FlowOptions,
) -> Result<f64> {
    if matches!(observable, Observable::Identity) {
        return Ok(t);
    }
    if let Observable::Constant { value } = observable {
        return Ok(value * t);
    }
    let obs = |z: &[f64]| observable.at_phase_point(z);
    let (traj, _) = dynamics::integrate_at(system, start, &[t], opts, false, Some(&obs))?;
    Ok(traj.observable.expect("observable requested")[0])
}

/// Potential minimum and turning points of a 1D mechanical system at energy E.
pub fn turning_points_1d<H: Hamiltonian + ?Sized>(system: &H, energy: f64) -> Result<(f64, f64, f64)> {
    let v = |q: f64| system.potential(&[q]).ok_or_else(|| Error::param("system is not of the form p^2 + V(q)"));
    let mut b: f64 = 1.0;
    while v(b)? <= energy || v(-b)? <= energy {
        b *= 2.0;
        if b > 1e6 {
            return Err(Error::param("potential does not confine the energy shell"));
        }
    }
    let m = 2000;
    let mut qmin = 0.0;
    let mut vmin = f64::INFINITY;
    for i in 0..=m {
        let q = -b + 2.0 * b * i as f64 / m as f64;
        let val = v(q)?;
        if val < vmin {
            vmin = val;
            qmin = q;
        }
    }
    if vmin >= energy {
        return Err(Error::param(format!("energy {energy} lies below the potential minimum")));
    }
    let bisect = |mut lo: f64, mut hi: f64| -> Result<f64> {
        // V(lo) < E <= V(hi)
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if v(mid)? < energy {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    };
    let qp = bisect(qmin, b)?;
    let qm = bisect(qmin, -b)?;
    Ok((qmin, qm, qp))
}

/// Shell point (q_+, 0) and the turning-point period int dq / sqrt(E - V).
pub fn shell_start_1d<H: Hamiltonian + ?Sized>(system: &H, energy: f64) -> Result<(PhaseSpacePoint, f64)> {
    let (_, qm, qp) = turning_points_1d(system, energy)?;
    let (x, w) = gauss_legendre(128);
    let c = 0.5 * (qp + qm);
    let r = 0.5 * (qp - qm);
    let mut period = 0.0;
    for (xi, wi) in x.iter().zip(&w) {
        let th = 0.5 * PI * xi;
        let q = c + r * th.sin();
        let kin = energy - system.potential(&[q]).expect("checked above");
        if kin > 0.0 {
            period += 0.5 * PI * wi * r * th.cos() / kin.sqrt();
        }
    }
    Ok((PhaseSpacePoint::new(vec![qp], vec![0.0])?, period))
}

fn polar_coarea<H: Hamiltonian>(system: &H, energy: f64, observable: &Observable) -> Result<LiouvilleIntegral> {
    let v = |q: &[f64]| system.potential(q).ok_or_else(|| Error::param("system is not of the form |p|^2 + V(q)"));
    let center = [0.0, 0.0];
    if v(&center)? >= energy {
        return Err(Error::param("energy lies below V at the origin"));
    }
    let radius = |th: f64| -> Result<f64> {
        let dir = [th.cos(), th.sin()];
        let at = |r: f64| v(&[center[0] + r * dir[0], center[1] + r * dir[1]]);
        let mut hi: f64 = 0.1;
        while at(hi)? < energy {
            hi *= 1.5;
            if hi > 1e6 {
                return Err(Error::param("energy shell is not bounded"));
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if at(mid)? < energy {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    };
    let eval = |angles: usize| -> Result<f64> {
        let (x, w) = gauss_legendre(32);
        let mut total = 0.0;
        for j in 0..angles {
            let th = 2.0 * PI * j as f64 / angles as f64;
            let rmax = radius(th)?;
            let mut radial = 0.0;
            for (xi, wi) in x.iter().zip(&w) {
                let r = 0.5 * rmax * (xi + 1.0);
                let q = [center[0] + r * th.cos(), center[1] + r * th.sin()];
                radial += 0.5 * rmax * wi * observable.at_position(&q) * r;
            }
            total += radial * 2.0 * PI / angles as f64;
        }
        Ok(PI * total)
    };
    let coarse = eval(256)?;
    let fine = eval(512)?;
    let spread = (fine - coarse).abs() / fine.abs().max(1e-300);
    if spread > 1e-3 {
        return Err(Error::Quadrature(format!("co-area quadrature spread {spread:.2e}")));
    }
    Ok(LiouvilleIntegral { value: fine, method: "polar co-area".into(), spread })
}

/// Seeded Monte Carlo estimate of pi int_{V < E} A(q) dq over the box [-b, b]^2.
pub fn coarea_monte_carlo<H: Hamiltonian>(
    system: &H,
    energy: f64,
    observable: &Observable,
    half_box: f64,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = 0.0;
    for _ in 0..samples {
        let q = [rng.gen_range(-half_box..half_box), rng.gen_range(-half_box..half_box)];
        let v = system.potential(&q).ok_or_else(|| Error::param("system is not of the form |p|^2 + V(q)"))?;
        if v < energy {
            acc += observable.at_position(&q);
        }
    }
    Ok(PI * acc / samples as f64 * (2.0 * half_box).powi(2))
}

/// A single orbit term at the orbit's own energy.
pub fn orbit_term(orbit: &PeriodicOrbit, window: &SpectralWindow, observable_integral: f64, hbar: f64, maslov_shift: i32) -> Result<Complex64> {
    if !orbit.nondegenerate {
        let (_, _, _) = orbit.poincare_map()?;
    }
    let gh = window.ghat(orbit.period);
    if gh == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let phase = orbit.action / hbar + (orbit.maslov + maslov_shift) as f64 * PI / 2.0;
    Ok(Complex64::from_polar(1.0, phase) * (gh / (2.0 * PI) * orbit.det_i_minus_p.powf(-0.5) * observable_integral))
}

fn nearest_index(grid: &[f64], e: f64) -> usize {
    grid.iter()
        .enumerate()
        .min_by(|a, b| (a.1 - e).abs().total_cmp(&(b.1 - e).abs()))
        .map(|(i, _)| i)
        .expect("nonempty grid")
}

/// Weyl plus orbit terms on `e_grid`, continuing every primitive orbit of
/// `table` in energy.
pub fn semiclassical_rho<H: Hamiltonian + Clone>(
    system: &H,
    window: &SpectralWindow,
    table: &OrbitTable,
    observable: &Observable,
    hbar: f64,
    e_grid: &[f64],
    opts: &TraceOptions,
) -> Result<DensityOfStates> {
    if e_grid.is_empty() {
        return Err(Error::param("empty energy grid"));
    }
    if e_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("energy grid must be strictly increasing"));
    }
    observable.validate(system.dim())?;
    let weyl: Vec<f64> = e_grid
        .iter()
        .map(|&e| weyl_term(system, e, window, observable, hbar))
        .collect::<Result<_>>()?;

    // primitive orbits and the k values requested for each
    let mut prims: Vec<(PeriodicOrbit, Vec<i32>)> = Vec::new();
    for o in &table.orbits {
        if let Some(limit) = opts.max_repetition {
            if o.k.unsigned_abs() > limit {
                continue;
            }
        }
        let found = prims.iter_mut().find(|(p, _)| {
            (p.t_star - o.t_star).abs() <= 1e-8 * o.t_star && (p.start.distance(&o.start)) <= 1e-8
        });
        match found {
            Some((_, ks)) => ks.push(o.k),
            None => {
                let base = if o.k == 1 {
                    o.clone()
                } else {
                    let shell = EnergyShell::new(system.clone(), table.energy, window.half_width)?;
                    orbits::repetition(&shell, &o.start, o.t_star, 1, &opts.orbit)?
                };
                prims.push((base, vec![o.k]));
            }
        }
    }

    let m = e_grid.len();
    let mut series: Vec<OrbitSeries> = Vec::new();
    let mut ds_dev: Option<f64> = None;
    let i0 = nearest_index(e_grid, table.energy);
    for (pi, (prim, ks)) in prims.iter().enumerate() {
        let mut starts: Vec<Option<(PhaseSpacePoint, f64)>> = vec![None; m];
        let mut run = |range: Box<dyn Iterator<Item = usize>>| -> Result<()> {
            let mut seed = (prim.start.clone(), prim.t_star);
            for i in range {
                let shell = EnergyShell::new(system.clone(), e_grid[i], window.half_width)?;
                let found = orbits::find_periodic_orbit(&shell, &seed.0, seed.1, &opts.orbit)?;
                seed = (found.start.clone(), found.t_star);
                starts[i] = Some(seed.clone());
            }
            Ok(())
        };
        run(Box::new(i0..m))?;
        run(Box::new((0..i0).rev()))?;
        let starts: Vec<(PhaseSpacePoint, f64)> = starts.into_iter().map(|s| s.expect("filled")).collect();
        let obs_int: Vec<f64> = starts
            .iter()
            .map(|(s, t)| observable_integral(system, s, *t, observable, &opts.orbit.flow))
            .collect::<Result<_>>()?;
        for &k in ks {
            let mut entry = OrbitSeries {
                primitive: pi,
                k,
                t_star: Vec::with_capacity(m),
                action: Vec::with_capacity(m),
                maslov: Vec::with_capacity(m),
                det_i_minus_p: Vec::with_capacity(m),
                observable_integral: obs_int.clone(),
                values: Vec::with_capacity(m),
            };
            for (i, (start, t_star)) in starts.iter().enumerate() {
                let shell = EnergyShell::new(system.clone(), e_grid[i], window.half_width)?;
                let o = orbits::repetition(&shell, start, *t_star, k, &opts.orbit)?;
                entry.values.push(orbit_term(&o, window, obs_int[i], hbar, opts.maslov_shift * k.signum())?);
                entry.t_star.push(o.t_star);
                entry.action.push(o.action);
                entry.maslov.push(o.maslov);
                entry.det_i_minus_p.push(o.det_i_minus_p);
            }
            if k == 1 && m >= 3 {
                for i in 1..m - 1 {
                    let ds = (entry.action[i + 1] - entry.action[i - 1]) / (e_grid[i + 1] - e_grid[i - 1]);
                    let dev = (ds - entry.t_star[i]).abs() / entry.t_star[i];
                    ds_dev = Some(ds_dev.map_or(dev, |d: f64| d.max(dev)));
                }
            }
            series.push(entry);
        }
    }

    let mut total = weyl.clone();
    let mut imag = vec![0.0; m];
    for s in &series {
        for i in 0..m {
            total[i] += s.values[i].re;
            imag[i] += s.values[i].im;
        }
    }
    let scale = total.iter().fold(1e-300f64, |a, b| a.max(b.abs()));
    let imaginary_residue = imag.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    if imaginary_residue > 1e-10 * scale {
        warn!("orbit terms do not pair into a real sum (|Im| = {imaginary_residue:.2e})");
    }
    Ok(DensityOfStates {
        e_grid: e_grid.to_vec(),
        hbar,
        support: window.support,
        weyl,
        orbit_terms: series,
        total,
        imaginary_residue,
        ds_de_max_rel_dev: ds_dev,
    })
}

/// Warns about closest returns with |t| <= T that match no listed orbit.
pub fn coverage_check<H: Hamiltonian>(
    shell: &EnergyShell<H>,
    table: &OrbitTable,
    support: f64,
    scan: &orbits::ScanOptions,
    opts: &OrbitOptions,
) -> usize {
    let candidates = orbits::closest_return_seeds(shell, support, scan, opts);
    let missing = candidates
        .iter()
        .filter(|(_, t)| !table.orbits.iter().any(|o| (o.period.abs() - t).abs() <= 0.05 * t))
        .count();
    if missing > 0 {
        warn!("{missing} closest returns with |t| <= {support} match no orbit in the list");
    }
    missing
}

/// Quadrature settings of [`rho_via_coherent_states`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CoherentOptions {
    /// Initial number of Gauss-Legendre panels in H per unit hbar^{-1}.
    pub panels_per_unit: f64,
    pub order: usize,
    /// Initial time step in units of hbar.
    pub step_over_hbar: f64,
    pub tol: f64,
    pub max_refinements: usize,
    pub flow: FlowOptions,
}

impl Default for CoherentOptions {
    fn default() -> Self {
        Self {
            panels_per_unit: 0.25,
            order: 8,
            step_over_hbar: 0.5,
            tol: 1e-3,
            max_refinements: 3,
            flow: FlowOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoherentRho {
    pub e_grid: Vec<f64>,
    pub rho: Vec<f64>,
    pub refinements: usize,
    pub last_change: f64,
    pub energy_nodes: usize,
}

/// (2 pi)^{-2} hbar^{-1} int int ĝ(t) e^{iEt/hbar} chi(H(alpha))^2
/// <phi_alpha, e^{i delta/hbar} T(alpha_t) Met(F) psi_0> dalpha dt for n = 1,
/// in Liouville coordinates alpha = phi_s(alpha_0(H)), dalpha = dH ds.
pub fn rho_via_coherent_states<H: Hamiltonian>(
    system: &H,
    window: &SpectralWindow,
    hbar: f64,
    e_grid: &[f64],
    opts: &CoherentOptions,
) -> Result<CoherentRho> {
    if system.dim() != 1 {
        return Err(Error::param("the coherent-state route is implemented for n = 1"));
    }
    if !(hbar > 0.0) {
        return Err(Error::param("hbar must be positive"));
    }
    if window.amplitude == 0.0 {
        return Ok(CoherentRho {
            e_grid: e_grid.to_vec(),
            rho: vec![0.0; e_grid.len()],
            refinements: 0,
            last_change: 0.0,
            energy_nodes: 0,
        });
    }
    let hi = window.energy + window.half_width;
    // phase space carries no energies below the potential minimum
    let (qmin, _, _) = turning_points_1d(system, hi)?;
    let vmin = system.potential(&[qmin]).expect("mechanical system");
    let lo = (window.energy - window.half_width).max(vmin);
    let base_panels = ((hi - lo) * opts.panels_per_unit / hbar).ceil().max(4.0) as usize;
    let mut panels = base_panels;
    let mut step = opts.step_over_hbar * hbar;
    let mut prev = coherent_pass(system, window, hbar, e_grid, lo, hi, panels, opts.order, step, &opts.flow)?;
    for r in 1..=opts.max_refinements {
        panels *= 2;
        step *= 0.5;
        let next = coherent_pass(system, window, hbar, e_grid, lo, hi, panels, opts.order, step, &opts.flow)?;
        let scale = next.iter().fold(1e-300f64, |a, b| a.max(b.abs()));
        let change = next.iter().zip(&prev).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale;
        if change < opts.tol {
            return Ok(CoherentRho {
                e_grid: e_grid.to_vec(),
                rho: next,
                refinements: r,
                last_change: change,
                energy_nodes: panels * opts.order,
            });
        }
        prev = next;
    }
    Err(Error::Quadrature(format!(
        "coherent-state integral not converged to {:.1e} after {} refinements",
        opts.tol, opts.max_refinements
    )))
}

#[allow(clippy::too_many_arguments)]
fn coherent_pass<H: Hamiltonian>(
    system: &H,
    window: &SpectralWindow,
    hbar: f64,
    e_grid: &[f64],
    lo: f64,
    hi: f64,
    panels: usize,
    order: usize,
    step: f64,
    flow: &FlowOptions,
) -> Result<Vec<f64>> {
    let rule = CompositeRule::new(lo, hi, panels, order);
    let support = window.support;
    let mut rho = vec![0.0; e_grid.len()];
    for (&h, &wh) in rule.nodes.iter().zip(&rule.weights) {
        let chi2 = window.chi(h).powi(2);
        if chi2 == 0.0 {
            continue;
        }
        // (q_+, 0) lies on the shell orbit, so only the period is needed
        let (start, t_star) = shell_start_1d(system, h)?;
        let ms = (t_star / step).ceil() as usize;
        let hs = t_star / ms as f64;
        let mt = (support / hs).ceil() as usize;
        let times: Vec<f64> = (0..=ms + mt).map(|j| j as f64 * hs).collect();
        let (traj, fl) = dynamics::integrate_at(system, &start, &times, flow, true, None)?;
        let fl = fl.expect("requested the linearized flow");
        let sq = hbar.sqrt();
        // inner integral over s for each t node
        let mut g_t = vec![Complex64::new(0.0, 0.0); mt + 1];
        for si in 0..ms {
            let a = &traj.states[si];
            let fs = &fl.f[si];
            // inverse of a 2x2 symplectic matrix
            let (fa, fb, fc, fd) = (fs[(0, 0)], fs[(0, 1)], fs[(1, 0)], fs[(1, 1)]);
            let inv = [[fd, -fb], [-fc, fa]];
            let mut arg_prev = 0.0;
            for tj in 0..=mt {
                let ft = &fl.f[si + tj];
                let ra = ft[(0, 0)] * inv[0][0] + ft[(0, 1)] * inv[1][0];
                let rb = ft[(0, 0)] * inv[0][1] + ft[(0, 1)] * inv[1][1];
                let rc = ft[(1, 0)] * inv[0][0] + ft[(1, 1)] * inv[1][0];
                let rd = ft[(1, 0)] * inv[0][1] + ft[(1, 1)] * inv[1][1];
                let u = Complex64::new(ra, rb);
                let arg = crate::linalg::unwrap_near(arg_prev, u.arg());
                if (arg - arg_prev).abs() >= PI / 2.0 {
                    return Err(Error::BranchTracking { phase: arg, offset: arg - arg_prev });
                }
                arg_prev = arg;
                let m = Complex64::new(rc, rd) / u;
                let pref = Complex64::from_polar(u.norm().powf(-0.5), -0.5 * arg);
                let at = &traj.states[si + tj];
                let t = tj as f64 * hs;
                let delta = traj.action_pq[si + tj] - traj.action_pq[si] - t * h
                    - 0.5 * (at.p[0] * at.q[0] - a.p[0] * a.q[0]);
                let sigma = a.p[0] * at.q[0] - at.p[0] * a.q[0];
                let av = (a.q[0] - at.q[0]) / sq;
                let bv = (a.p[0] - at.p[0]) / sq;
                let q = Complex64::new(1.0, 0.0) - Complex64::i() * m;
                let l = Complex64::new(av, -bv);
                let c = Complex64::new(-0.5 * av * av, 0.5 * av * bv);
                let gauss = (2.0 * PI / q).sqrt() * (l * l / (2.0 * q) + c).exp();
                let m0 = pref * gauss / PI.sqrt();
                let overlap = Complex64::from_polar(1.0, (delta - 0.5 * sigma) / hbar) * m0;
                g_t[tj] += overlap * hs;
            }
        }
        // t integral: trapezoid of the even extension, ĝ vanishing at T
        let pref = wh * chi2 / (4.0 * PI * PI * hbar);
        for (e, r) in e_grid.iter().zip(rho.iter_mut()) {
            let mut acc = 0.0;
            for (tj, g) in g_t.iter().enumerate() {
                let t = tj as f64 * hs;
                let gh = window.ghat(t);
                if gh == 0.0 {
                    continue;
                }
                let w = if tj == 0 { 1.0 } else { 2.0 };
                acc += w * hs * gh * (Complex64::from_polar(1.0, e * t / hbar) * g).re;
            }
            *r += pref * acc;
        }
    }
    Ok(rho)
}

/// Local maxima of a sampled curve, refined by parabolic interpolation.
pub fn peak_positions(e_grid: &[f64], values: &[f64]) -> Vec<f64> {
    let mut peaks = Vec::new();
    for i in 1..values.len().saturating_sub(1) {
        if values[i] > values[i - 1] && values[i] >= values[i + 1] {
            let (y0, y1, y2) = (values[i - 1], values[i], values[i + 1]);
            let denom = y0 - 2.0 * y1 + y2;
            let shift = if denom != 0.0 { 0.5 * (y0 - y2) / denom } else { 0.0 };
            let h = 0.5 * (e_grid[i + 1] - e_grid[i - 1]);
            peaks.push(e_grid[i] + shift * h);
        }
    }
    peaks
}

/// Deviation summary between two curves on the same grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveComparison {
    /// max |a - b| / max |b|.
    pub relative_linf: f64,
    /// Largest distance from a peak of `b` to the nearest peak of `a`.
    pub max_peak_offset: f64,
    pub peaks_a: usize,
    pub peaks_b: usize,
}

pub fn compare_curves(e_grid: &[f64], a: &[f64], b: &[f64]) -> CurveComparison {
    let scale = b.iter().fold(1e-300f64, |m, v| m.max(v.abs()));
    let relative_linf = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale;
    let pa = peak_positions(e_grid, a);
    let pb = peak_positions(e_grid, b);
    let max_peak_offset = pb
        .iter()
        .map(|p| pa.iter().map(|q| (p - q).abs()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    CurveComparison {
        relative_linf,
        max_peak_offset,
        peaks_a: pa.len(),
        peaks_b: pb.len(),
    }
}

pub fn uniform_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![lo];
    }
    (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonians::Builtin;
    use crate::orbits::{enumerate_orbits, SeedStrategy};

    const GOLDEN: f64 = 1.618_033_988_749_895;

    fn ho1d_table(e: f64, t_max: f64) -> OrbitTable {
        let shell = EnergyShell::new(Builtin::Ho1d, e, 0.5).unwrap();
        let strat = SeedStrategy {
            seeds: vec![(PhaseSpacePoint::new(vec![e.sqrt()], vec![0.0]).unwrap(), 3.0)],
            scan: None,
        };
        enumerate_orbits(&shell, t_max, &strat, &OrbitOptions::default()).unwrap()
    }

    #[test]
    fn ho1d_liouville_measure_is_period() {
        let li = liouville_integral(&Builtin::Ho1d, 1.3, &Observable::Identity).unwrap();
        assert!((li.value - PI).abs() < 1e-9);
        let w = SpectralWindow::new(3.5, 1.0, 0.5).unwrap();
        let weyl = weyl_term(&Builtin::Ho1d, 1.0, &w, &Observable::Identity, 0.05).unwrap();
        assert!((weyl - 0.5).abs() < 1e-9);
        assert_eq!(weyl_term(&Builtin::Ho1d, 1.0, &w, &Observable::Constant { value: 0.0 }, 0.05).unwrap(), 0.0);
    }

    #[test]
    fn ho1d_orbit_term_closed_form() {
        let table = ho1d_table(1.0, 3.5);
        let w = SpectralWindow::new(3.5, 1.0, 0.5).unwrap();
        let o = table.orbits.iter().find(|o| o.k == 1).unwrap();
        let hbar = 0.05;
        let term = orbit_term(o, &w, PI, hbar, 0).unwrap();
        let exact = Complex64::from_polar(1.0, PI / hbar + PI) * (w.ghat(PI) / (2.0 * PI) * PI);
        assert!((term - exact).norm() < 1e-8);
        let short = SpectralWindow::new(3.0, 1.0, 0.5).unwrap();
        assert_eq!(orbit_term(o, &short, PI, hbar, 0).unwrap(), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn ho2d_coarea_matches_ellipse_area() {
        let sys = Builtin::Ho2dAniso { omega: GOLDEN };
        let li = liouville_integral(&sys, 1.0, &Observable::Identity).unwrap();
        let exact = PI * PI / GOLDEN;
        assert!((li.value - exact).abs() / exact < 1e-6);
        let mc = coarea_monte_carlo(&sys, 1.0, &Observable::Identity, 1.05, 400_000, 0).unwrap();
        assert!((mc - exact).abs() / exact < 5e-3);
    }

    #[test]
    fn weyl_prefactor_scales_with_hbar_in_two_dimensions() {
        let w = SpectralWindow::new(3.0, 1.0, 0.5).unwrap();
        let a = weyl_prefactor(2, &w, 0.05);
        let b = weyl_prefactor(2, &w, 0.1);
        assert!((a / b - 2.0).abs() < 1e-14);
    }

    #[test]
    fn semiclassical_peaks_follow_bohr_sommerfeld() {
        let hbar = 0.05;
        let table = ho1d_table(1.0, 3.5);
        let w = SpectralWindow::new(3.5, 1.0, 0.5).unwrap();
        let grid = uniform_grid(0.8, 1.2, 161);
        let dos = semiclassical_rho(&Builtin::Ho1d, &w, &table, &Observable::Identity, hbar, &grid, &TraceOptions::default()).unwrap();
        assert!(dos.imaginary_residue < 1e-10);
        let alt = dos.total_from_positive();
        for (a, b) in alt.iter().zip(&dos.total) {
            assert!((a - b).abs() < 1e-12);
        }
        for p in peak_positions(&grid, &dos.total) {
            let k = ((p / hbar - 1.0) / 2.0).round();
            assert!((p - hbar * (2.0 * k + 1.0)).abs() < 1e-3, "peak at {p}");
        }
        assert!(dos.ds_de_max_rel_dev.unwrap() < 1e-4);
    }

    #[test]
    fn no_orbits_gives_weyl_curve() {
        let table = ho1d_table(1.0, 2.0);
        assert!(table.orbits.is_empty());
        let w = SpectralWindow::new(2.0, 1.0, 0.5).unwrap();
        let grid = uniform_grid(0.9, 1.1, 5);
        let dos = semiclassical_rho(&Builtin::Ho1d, &w, &table, &Observable::Identity, 0.05, &grid, &TraceOptions::default()).unwrap();
        for (t, wv) in dos.total.iter().zip(&dos.weyl) {
            assert_eq!(t, wv);
        }
    }

    #[test]
    fn zero_ghat_gives_zero_coherent_density() {
        let w = SpectralWindow::new(3.5, 1.0, 0.5).unwrap().with_amplitude(0.0);
        let r = rho_via_coherent_states(&Builtin::Ho1d, &w, 0.05, &[1.0, 1.1], &CoherentOptions::default()).unwrap();
        assert!(r.rho.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn peaks_and_comparison() {
        let grid = uniform_grid(0.0, 1.0, 101);
        let a: Vec<f64> = grid.iter().map(|x| (-(x - 0.5f64).powi(2) / 0.01).exp()).collect();
        let b: Vec<f64> = grid.iter().map(|x| (-(x - 0.503f64).powi(2) / 0.01).exp()).collect();
        let c = compare_curves(&grid, &a, &b);
        assert!((c.max_peak_offset - 0.003).abs() < 2e-4);
        assert_eq!(c.peaks_a, 1);
    }
}
