//! Periodic orbits on an energy shell: Newton shooting, monodromy, the
//! linearized Poincaré map on the symplectic complement of the eigenvalue-1
//! space, and the Maslov index from the tracked branch of det(A + iB).

use std::f64::consts::{FRAC_PI_2, PI};

use log::warn;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, FlowOptions};
use crate::error::{Error, Result};
use crate::hamiltonians::{Hamiltonian, PhaseSpacePoint};
use crate::linalg::{null_space, real_matrix_eigenvalues, symplectic_defect, to_complex};

/// The level set H = E with a half-width dE for the surrounding window.
#[derive(Debug, Clone)]
pub struct EnergyShell<H> {
    pub system: H,
    pub energy: f64,
    pub half_width: f64,
}

impl<H: Hamiltonian> EnergyShell<H> {
    pub fn new(system: H, energy: f64, half_width: f64) -> Result<Self> {
        if !energy.is_finite() {
            return Err(Error::param("energy must be finite"));
        }
        if !(half_width > 0.0) {
            return Err(Error::param("window half-width must be positive"));
        }
        Ok(Self { system, energy, half_width })
    }

    pub fn dim(&self) -> usize {
        self.system.dim()
    }

    /// Moves z onto the shell along grad H.
    pub fn project(&self, z: &[f64]) -> Result<Vec<f64>> {
        project_to_energy(&self.system, z, self.energy)
    }

    /// Fails if grad H vanishes (numerically) at z.
    pub fn check_noncritical(&self, z: &[f64]) -> Result<()> {
        let g = self.system.gradient(z);
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm <= 1e-10 * self.energy.abs().max(1.0) {
            return Err(Error::NotTransversal);
        }
        Ok(())
    }

    /// Shell point above `q` along momentum direction `dir` (mechanical systems).
    pub fn point_with_momentum_direction(&self, q: &[f64], dir: &[f64]) -> Result<PhaseSpacePoint> {
        let v = self
            .system
            .potential(q)
            .ok_or_else(|| Error::param("system is not of the form |p|^2 + V(q)"))?;
        let kinetic = self.energy - v;
        if kinetic < 0.0 {
            return Err(Error::param(format!("V(q) = {v} exceeds the shell energy")));
        }
        let dn = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        if dn == 0.0 {
            return Err(Error::param("zero momentum direction"));
        }
        let p = dir.iter().map(|d| d / dn * kinetic.sqrt()).collect();
        PhaseSpacePoint::new(q.to_vec(), p)
    }
}

pub fn project_to_energy<H: Hamiltonian + ?Sized>(system: &H, z: &[f64], energy: f64) -> Result<Vec<f64>> {
    let mut x = z.to_vec();
    for _ in 0..100 {
        let r = system.energy(&x) - energy;
        if r.abs() <= 1e-14 * energy.abs().max(1.0) {
            return Ok(x);
        }
        let g = system.gradient(&x);
        let g2: f64 = g.iter().map(|v| v * v).sum();
        if g2 <= 1e-24 {
            return Err(Error::NotTransversal);
        }
        for (xi, gi) in x.iter_mut().zip(&g) {
            *xi -= r * gi / g2;
        }
    }
    let r = system.energy(&x) - energy;
    if r.abs() <= 1e-10 * energy.abs().max(1.0) {
        Ok(x)
    } else {
        Err(Error::NoConvergence { iterations: 100, residual: r.abs() })
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OrbitOptions {
    pub flow: FlowOptions,
    pub max_iter: usize,
    /// Closure tolerance relative to max(1, |alpha|).
    pub tol: f64,
    /// Poincaré eigenvalues within this distance of 1 mark the orbit degenerate.
    pub degeneracy_tol: f64,
    /// Divisors m checked when testing whether T/m already closes the orbit.
    pub max_divisor: usize,
}

impl Default for OrbitOptions {
    fn default() -> Self {
        Self {
            flow: FlowOptions { samples: 8, ..FlowOptions::default() },
            max_iter: 50,
            tol: 1e-10,
            degeneracy_tol: 1e-6,
            max_divisor: 6,
        }
    }
}

/// A closed orbit traversed k times (k < 0: reversed).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeriodicOrbit {
    pub energy: f64,
    pub start: PhaseSpacePoint,
    pub t_star: f64,
    pub k: i32,
    /// T_gamma = k T*.
    pub period: f64,
    /// Signed action int p.dq over |k| traversals.
    pub action: f64,
    pub monodromy: DMatrix<f64>,
    pub z1: Vec<f64>,
    pub z2: Vec<f64>,
    /// (F - I) z2 = beta z1.
    pub beta: f64,
    pub z1_residual: f64,
    pub z2_residual: f64,
    pub poincare: DMatrix<f64>,
    pub poincare_eigs: Vec<Complex64>,
    pub det_i_minus_p: f64,
    pub det_i_minus_p_from_eigs: f64,
    /// Number of real Poincaré eigenvalues greater than 1.
    pub sigma_prime: usize,
    pub maslov: i32,
    /// Unwrapped arg det U(T_gamma) on the continuous branch from t = 0.
    pub det_u_arg: f64,
    /// |det U(T_gamma)|.
    pub det_u_modulus: f64,
    /// Whether maslov mod 4 is one of n - 1 + sigma', n + 1 + sigma'.
    pub sign_rule_consistent: bool,
    pub nondegenerate: bool,
    pub closure_residual: f64,
    pub newton_iterations: usize,
    pub symplectic_defect: f64,
}

impl PeriodicOrbit {
    pub fn dim(&self) -> usize {
        self.start.dim()
    }

    /// The Poincaré map, or an error if the orbit is degenerate.
    pub fn poincare_map(&self) -> Result<(&DMatrix<f64>, &[Complex64], f64)> {
        if !self.nondegenerate {
            let near_one = self.poincare_eigs.iter().filter(|l| (*l - 1.0).norm() <= 1e-6).count();
            return Err(Error::DegenerateOrbit { multiplicity: 2 + near_one });
        }
        Ok((&self.poincare, &self.poincare_eigs, self.det_i_minus_p))
    }
}

/// Newton/shooting for a primitive periodic orbit on the shell near `seed`.
pub fn find_periodic_orbit<H: Hamiltonian>(
    shell: &EnergyShell<H>,
    seed: &PhaseSpacePoint,
    t_guess: f64,
    opts: &OrbitOptions,
) -> Result<PeriodicOrbit> {
    let (z, t, iters) = shoot(shell, seed, t_guess, opts)?;
    let (z, t, iters) = reduce_to_primitive(shell, z, t, iters, opts)?;
    let start = PhaseSpacePoint::from_slice(&z);
    let mut orbit = repetition(shell, &start, t, 1, opts)?;
    orbit.newton_iterations = iters;
    Ok(orbit)
}

fn residual_norm(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn shoot<H: Hamiltonian>(
    shell: &EnergyShell<H>,
    seed: &PhaseSpacePoint,
    t_guess: f64,
    opts: &OrbitOptions,
) -> Result<(Vec<f64>, f64, usize)> {
    let system = &shell.system;
    let n = system.dim();
    if seed.dim() != n {
        return Err(Error::param("seed dimension does not match the system"));
    }
    if !(t_guess > 0.0) {
        return Err(Error::param("period guess must be positive"));
    }
    let zs = shell.project(&seed.to_vec())?;
    let gs = system.gradient(&zs);
    let fs: Vec<f64> = (0..2 * n).map(|i| if i < n { gs[n + i] } else { -gs[i - n] }).collect();
    let fs_norm = residual_norm(&fs);
    if fs_norm <= 1e-10 {
        return Err(Error::NotTransversal);
    }
    let scale = residual_norm(&zs).max(1.0);

    let eval = |z: &[f64], t: f64| -> Result<(Vec<f64>, DMatrix<f64>, Vec<f64>)> {
        let (zt, f, _) = dynamics::flow_map_with_jacobian(system, z, t, &opts.flow)?;
        let mut r = Vec::with_capacity(2 * n + 2);
        r.extend(zt.iter().zip(z).map(|(a, b)| a - b));
        r.push(system.energy(z) - shell.energy);
        r.push(fs.iter().zip(z.iter().zip(&zs)).map(|(f, (a, b))| f * (a - b)) .sum::<f64>() / fs_norm);
        let gt = system.gradient(&zt);
        let ft: Vec<f64> = (0..2 * n).map(|i| if i < n { gt[n + i] } else { -gt[i - n] }).collect();
        let mut jac = DMatrix::zeros(2 * n + 2, 2 * n + 1);
        let g = system.gradient(z);
        for i in 0..2 * n {
            for j in 0..2 * n {
                jac[(i, j)] = f[(i, j)] - if i == j { 1.0 } else { 0.0 };
            }
            jac[(i, 2 * n)] = ft[i];
            jac[(2 * n, i)] = g[i];
            jac[(2 * n + 1, i)] = fs[i] / fs_norm;
        }
        Ok((r, jac, zt))
    };

    let mut z = zs.clone();
    let mut t = t_guess;
    let (mut r, mut jac, _) = eval(&z, t)?;
    let mut rn = residual_norm(&r);
    let mut iters = 0;
    while rn > opts.tol * scale {
        if iters >= opts.max_iter {
            return Err(Error::NoConvergence { iterations: iters, residual: rn });
        }
        iters += 1;
        let svd = jac.clone().svd(true, true);
        let rhs = DVector::from_vec(r.iter().map(|x| -x).collect());
        let smax = svd.singular_values.max();
        let dx = svd
            .solve(&rhs, 1e-13 * smax)
            .map_err(|e| Error::Fit(e.to_string()))?;
        let mut lambda = 1.0;
        loop {
            let zn: Vec<f64> = (0..2 * n).map(|i| z[i] + lambda * dx[i]).collect();
            let tn = t + lambda * dx[2 * n];
            if tn > 0.0 {
                if let Ok((r2, j2, _)) = eval(&zn, tn) {
                    let rn2 = residual_norm(&r2);
                    if rn2 < rn || lambda < 1e-3 {
                        z = zn;
                        t = tn;
                        r = r2;
                        jac = j2;
                        rn = rn2;
                        break;
                    }
                }
            }
            lambda *= 0.5;
            if lambda < 1e-4 {
                return Err(Error::NoConvergence { iterations: iters, residual: rn });
            }
        }
    }
    Ok((z, t, iters))
}

fn reduce_to_primitive<H: Hamiltonian>(
    shell: &EnergyShell<H>,
    z: Vec<f64>,
    t: f64,
    iters: usize,
    opts: &OrbitOptions,
) -> Result<(Vec<f64>, f64, usize)> {
    let scale = residual_norm(&z).max(1.0);
    for m in (2..=opts.max_divisor).rev() {
        let tm = t / m as f64;
        let zt = dynamics::flow_map(&shell.system, &z, tm, &opts.flow)?;
        let d = residual_norm(&zt.iter().zip(&z).map(|(a, b)| a - b).collect::<Vec<_>>());
        if d <= 1e-6 * scale {
            let seed = PhaseSpacePoint::from_slice(&z);
            let (z2, t2, it2) = shoot(shell, &seed, tm, opts)?;
            return reduce_to_primitive(shell, z2, t2, iters + it2, opts);
        }
    }
    Ok((z, t, iters))
}

/// Orbit data for the k-th (signed) traversal of the primitive orbit
/// through `start` with primitive period `t_star`.
pub fn repetition<H: Hamiltonian>(
    shell: &EnergyShell<H>,
    start: &PhaseSpacePoint,
    t_star: f64,
    k: i32,
    opts: &OrbitOptions,
) -> Result<PeriodicOrbit> {
    if k == 0 {
        return Err(Error::param("repetition index must be nonzero"));
    }
    let system = &shell.system;
    let n = system.dim();
    let period = k as f64 * t_star;
    let flow_opts = FlowOptions { samples: 4 * k.unsigned_abs() as usize, ..opts.flow };
    let (traj, flow) = dynamics::integrate_with_jacobi(system, start, period, &flow_opts)?;
    let last = flow.last();
    let f = flow.f[last].clone();
    let z0 = start.to_vec();
    let scale = residual_norm(&z0).max(1.0);
    let closure = traj.final_state().distance(start) / scale;

    let g = system.gradient(&z0);
    let (hq, hp) = g.split_at(n);
    let hp2: f64 = hp.iter().map(|x| x * x).sum();
    let hq2: f64 = hq.iter().map(|x| x * x).sum();
    let norm = (2.0 * hp2 + hq2).sqrt();
    let z1: Vec<f64> = hp.iter().chain(hq.iter()).enumerate()
        .map(|(i, v)| if i < n { v / norm } else { -v / norm })
        .collect();
    let z1v = DVector::from_column_slice(&z1);
    let fmi = &f - DMatrix::identity(2 * n, 2 * n);
    let z1_residual = (&fmi * &z1v).norm();

    // z2: in z1-perp, with (F - I) z2 parallel to z1.
    let z1hat = &z1v / z1v.norm();
    let proj = DMatrix::identity(2 * n, 2 * n) - &z1hat * z1hat.transpose();
    let perp = null_space(&DMatrix::from_row_slice(1, 2 * n, z1hat.as_slice()), 1e-12);
    let reduced = &proj * &fmi * &perp;
    let svd = reduced.clone().svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let (imin, smin) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, s)| (i, *s))
        .expect("nonempty");
    let z2v = &perp * vt.row(imin).transpose();
    let beta = z1hat.dot(&(&fmi * &z2v)) / z1v.norm();
    let z2: Vec<f64> = z2v.iter().copied().collect();

    // V = {a : sigma(a, z1) = sigma(a, z2) = 0}; sigma(a, z) = a . (-p_z, q_z).
    let w = |z: &[f64]| -> Vec<f64> { (0..2 * n).map(|i| if i < n { -z[n + i] } else { z[i - n] }).collect() };
    let mut cons = w(&z1);
    cons.extend(w(&z2));
    let basis = null_space(&DMatrix::from_row_slice(2, 2 * n, &cons), 1e-10);
    let poincare = basis.transpose() * &f * &basis;
    let m = poincare.nrows();
    let poincare_eigs = real_matrix_eigenvalues(&poincare);
    let det_i_minus_p = if m == 0 {
        1.0
    } else {
        (DMatrix::identity(m, m) - &poincare).determinant().abs()
    };
    let det_i_minus_p_from_eigs = poincare_eigs
        .iter()
        .fold(Complex64::new(1.0, 0.0), |acc, l| acc * (1.0 - l))
        .norm();
    let sigma_prime = poincare_eigs
        .iter()
        .filter(|l| l.im.abs() <= 1e-9 * l.norm().max(1.0) && l.re > 1.0)
        .count();
    let nondegenerate = poincare_eigs.iter().all(|l| (l - 1.0).norm() > opts.degeneracy_tol);

    let det_u_arg = flow.det_u_arg[last];
    let det_u = flow.u(last).determinant();
    let maslov = maslov_from_branch(n, &poincare, det_u, det_u_arg)?;
    let sign_rule_consistent = [n - 1 + sigma_prime, n + 1 + sigma_prime]
        .iter()
        .any(|c| (*c as i64 - maslov as i64).rem_euclid(4) == 0);

    Ok(PeriodicOrbit {
        energy: shell.energy,
        start: start.clone(),
        t_star,
        k,
        period,
        action: traj.action_pq[last],
        monodromy: f.clone(),
        z1,
        z2,
        beta,
        z1_residual,
        z2_residual: smin,
        poincare,
        poincare_eigs,
        det_i_minus_p,
        det_i_minus_p_from_eigs,
        sigma_prime,
        maslov,
        det_u_arg,
        det_u_modulus: det_u.norm(),
        sign_rule_consistent,
        nondegenerate,
        closure_residual: closure,
        newton_iterations: 0,
        symplectic_defect: symplectic_defect(&f),
    })
}

/// Phase theta of (det U)_c^{-1/2} [(-1)^{1-n} det(P - I) / det(U/2)]_*^{-1/2}.
pub fn maslov_phase(n: usize, poincare: &DMatrix<f64>, det_u: Complex64, det_u_arg: f64) -> f64 {
    let m = poincare.nrows();
    let det_pmi = if m == 0 {
        1.0
    } else {
        (poincare - DMatrix::identity(m, m)).determinant()
    };
    let sign = if (1 + n) % 2 == 0 { 1.0 } else { -1.0 };
    let det_half = det_u * 0.5f64.powi(n as i32);
    let x = Complex64::new(sign * det_pmi, 0.0) / det_half;
    // principal root: arg in (-pi/2, pi/2]
    -0.5 * x.arg() - 0.5 * det_u_arg
}

/// The Maslov integer: the residue class is fixed by theta (mod 4 in units
/// of pi/2), and the representative is the one closest to the winding
/// arg_c det U / pi, ties broken toward zero.
pub fn maslov_from_branch(n: usize, poincare: &DMatrix<f64>, det_u: Complex64, det_u_arg: f64) -> Result<i32> {
    let theta = maslov_phase(n, poincare, det_u, det_u_arg);
    let units = 2.0 * theta / PI;
    let r = units.round();
    let offset = (units - r).abs() * FRAC_PI_2;
    if offset > 1e-6 {
        return Err(Error::BranchTracking { phase: theta, offset });
    }
    let residue = (r as i64).rem_euclid(4);
    let mu = det_u_arg / PI;
    let base = (mu / 4.0).floor() as i64 * 4 + residue;
    let candidates = [base - 4, base, base + 4];
    let best = candidates
        .iter()
        .copied()
        .min_by(|a, b| {
            let da = (*a as f64 - mu).abs();
            let db = (*b as f64 - mu).abs();
            da.partial_cmp(&db)
                .unwrap()
                .then_with(|| a.abs().cmp(&b.abs()))
        })
        .expect("three candidates");
    Ok(best as i32)
}

/// How to find seeds for [`enumerate_orbits`].
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SeedStrategy {
    /// Explicit (point, period guess) pairs.
    pub seeds: Vec<(PhaseSpacePoint, f64)>,
    /// Random shell points scanned for closest returns.
    pub scan: Option<ScanOptions>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanOptions {
    pub points: usize,
    pub rng_seed: u64,
    /// Half-width of the box from which shell points are drawn.
    pub box_radius: f64,
    /// Maximum relative return distance for a candidate.
    pub threshold: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self { points: 20, rng_seed: 0, box_radius: 2.0, threshold: 0.05 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrbitTable {
    pub energy: f64,
    pub t_max: f64,
    pub orbits: Vec<PeriodicOrbit>,
    pub primitive_count: usize,
    pub failed_seeds: usize,
}

impl OrbitTable {
    pub fn positive(&self) -> impl Iterator<Item = &PeriodicOrbit> {
        self.orbits.iter().filter(|o| o.k > 0)
    }
}

struct Primitive {
    orbit: PeriodicOrbit,
    samples: Vec<Vec<f64>>,
    spacing: f64,
}

fn same_orbit(a: &Primitive, b: &PeriodicOrbit) -> bool {
    let o = &a.orbit;
    if (o.t_star - b.t_star).abs() > 1e-6 * o.t_star.max(1.0) {
        return false;
    }
    if (o.action - b.action).abs() > 1e-6 * o.action.abs().max(1.0) {
        return false;
    }
    let z = b.start.to_vec();
    let d = a
        .samples
        .iter()
        .map(|s| residual_norm(&s.iter().zip(&z).map(|(x, y)| x - y).collect::<Vec<_>>()))
        .fold(f64::INFINITY, f64::min);
    d <= 0.6 * a.spacing + 1e-6
}

/// Closest-return candidates: (point, time) pairs where |phi_t(a) - a| has
/// a local minimum below the threshold.
pub fn closest_return_seeds<H: Hamiltonian>(
    shell: &EnergyShell<H>,
    t_max: f64,
    scan: &ScanOptions,
    opts: &OrbitOptions,
) -> Vec<(PhaseSpacePoint, f64)> {
    let n = shell.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(scan.rng_seed);
    let mut out = Vec::new();
    let mut attempts = 0;
    while out.len() < scan.points * 4 && attempts < scan.points {
        attempts += 1;
        let z: Vec<f64> = (0..2 * n).map(|_| rng.gen_range(-scan.box_radius..scan.box_radius)).collect();
        let Ok(z) = shell.project(&z) else { continue };
        let alpha = PhaseSpacePoint::from_slice(&z);
        let samples = (400.0 * t_max.max(1.0)).ceil() as usize;
        let fo = FlowOptions { samples, rtol: 1e-9, atol: 1e-9, ..opts.flow };
        let Ok(traj) = dynamics::integrate(&shell.system, &alpha, t_max, &fo) else { continue };
        let scale = alpha.norm().max(1.0);
        let d: Vec<f64> = traj.states.iter().map(|s| s.distance(&alpha) / scale).collect();
        for i in 1..d.len() - 1 {
            if d[i] < d[i - 1] && d[i] <= d[i + 1] && d[i] < scan.threshold && traj.times[i] > 1e-3 {
                out.push((alpha.clone(), traj.times[i]));
            }
        }
    }
    out
}

/// Primitive orbits from the seeds, with signed repetitions |k T*| <= t_max.
pub fn enumerate_orbits<H: Hamiltonian>(
    shell: &EnergyShell<H>,
    t_max: f64,
    strategy: &SeedStrategy,
    opts: &OrbitOptions,
) -> Result<OrbitTable> {
    if !(t_max > 0.0) {
        return Err(Error::param("t_max must be positive"));
    }
    let mut seeds = strategy.seeds.clone();
    if let Some(scan) = &strategy.scan {
        seeds.extend(closest_return_seeds(shell, t_max, scan, opts));
    }
    let mut primitives: Vec<Primitive> = Vec::new();
    let mut failed = 0;
    for (seed, guess) in &seeds {
        let orbit = match find_periodic_orbit(shell, seed, *guess, opts) {
            Ok(o) => o,
            Err(e) => {
                warn!("seed {seed} (T = {guess}) did not converge: {e}");
                failed += 1;
                continue;
            }
        };
        if primitives.iter().any(|p| same_orbit(p, &orbit)) {
            continue;
        }
        let fo = FlowOptions { samples: 256, ..opts.flow };
        let traj = dynamics::integrate(&shell.system, &orbit.start, orbit.t_star, &fo)?;
        let samples: Vec<Vec<f64>> = traj.states.iter().map(|s| s.to_vec()).collect();
        let spacing = samples
            .windows(2)
            .map(|w| residual_norm(&w[0].iter().zip(&w[1]).map(|(a, b)| a - b).collect::<Vec<_>>()))
            .fold(0.0, f64::max);
        primitives.push(Primitive { orbit, samples, spacing });
    }
    if failed > 0 {
        warn!("{failed} of {} seeds failed to converge", seeds.len());
    }
    let mut orbits = Vec::new();
    for p in &primitives {
        let t_star = p.orbit.t_star;
        let mut k = 1;
        while k as f64 * t_star <= t_max * (1.0 + 1e-12) {
            for sk in [k, -k] {
                let o = if sk == 1 {
                    p.orbit.clone()
                } else {
                    let mut o = repetition(shell, &p.orbit.start, t_star, sk, opts)?;
                    o.newton_iterations = p.orbit.newton_iterations;
                    o
                };
                orbits.push(o);
            }
            k += 1;
        }
    }
    orbits.sort_by(|a, b| {
        a.period
            .abs()
            .total_cmp(&b.period.abs())
            .then(a.t_star.total_cmp(&b.t_star))
            .then(b.k.cmp(&a.k))
    });
    Ok(OrbitTable {
        energy: shell.energy,
        t_max,
        orbits,
        primitive_count: primitives.len(),
        failed_seeds: failed,
    })
}

/// Spectrum of F_gamma recomputed from a shifted base point on the orbit.
pub fn monodromy_spectrum_from<H: Hamiltonian>(
    shell: &EnergyShell<H>,
    orbit: &PeriodicOrbit,
    shift: f64,
    opts: &OrbitOptions,
) -> Result<Vec<Complex64>> {
    let z = dynamics::flow_map(&shell.system, &orbit.start.to_vec(), shift, &opts.flow)?;
    let (_, f, _) = dynamics::flow_map_with_jacobian(&shell.system, &z, orbit.period, &opts.flow)?;
    Ok(real_matrix_eigenvalues(&f))
}

/// Matches two eigenvalue lists up to ordering; returns the largest mismatch.
pub fn spectral_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut used = vec![false; b.len()];
    let mut worst = 0.0f64;
    for x in a {
        let (j, d) = b
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, y)| (j, (x - y).norm()))
            .min_by(|p, q| p.1.total_cmp(&q.1))
            .expect("lists of equal length");
        used[j] = true;
        worst = worst.max(d);
    }
    worst
}

pub fn complex_monodromy(orbit: &PeriodicOrbit) -> DMatrix<Complex64> {
    to_complex(&orbit.monodromy)
}
