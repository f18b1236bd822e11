//! Grid discretization of -hbar^2 Laplacian + V on a periodic box
//! [-L, L)^n (n = 1, 2) with a Fourier-spectral kinetic term: dense
//! eigensolves near an energy, the exact regularized density of states,
//! and a Strang split-operator propagator.

use std::f64::consts::PI;
use std::sync::Arc;

use log::warn;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonians::Hamiltonian;
use crate::observable::Observable;
use crate::window::SpectralWindow;

/// Required value of N pi hbar / (2 L p_max).
pub const RESOLUTION_RULE: f64 = 8.0;

/// Number of grid points per edge layer watched for boundary mass.
const EDGE_LAYER: usize = 5;

/// Largest basis the dense eigensolver accepts (an 8192^2 f64 matrix is 512 MB).
pub const MAX_DENSE_STATES: usize = 8192;

#[derive(Debug, Clone)]
pub struct GridHamiltonian {
    pub dim: usize,
    pub half_width: f64,
    pub points: usize,
    pub hbar: f64,
    /// V at the grid nodes; index i0 * N + i1 in 2D.
    pub potential: Vec<f64>,
    /// First row of the circulant kinetic matrix on one axis.
    kinetic_row: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenPair {
    pub energy: f64,
    #[serde(skip)]
    pub vector: DVector<f64>,
}

impl GridHamiltonian {
    /// Low-level constructor from potential samples; no resolution checks.
    pub fn from_potential_samples(
        dim: usize,
        half_width: f64,
        points: usize,
        hbar: f64,
        potential: Vec<f64>,
    ) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::Grid(format!("dimension {dim} not supported (1 or 2)")));
        }
        if points < 4 || points % 2 != 0 {
            return Err(Error::Grid("points per axis must be even and at least 4".into()));
        }
        if !(half_width > 0.0) || !(hbar > 0.0) {
            return Err(Error::Grid("box half-width and hbar must be positive".into()));
        }
        if potential.len() != points.pow(dim as u32) {
            return Err(Error::Grid("potential sample count does not match the grid".into()));
        }
        if potential.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("potential samples".into()));
        }
        let kinetic_row = circulant_kinetic_row(points, half_width, hbar);
        Ok(Self {
            dim,
            half_width,
            points,
            hbar,
            potential,
            kinetic_row,
        })
    }

    /// Builds the grid for a mechanical system, enforcing the resolution rule
    /// at `energy + half_window` and a confining margin of at least
    /// `half_window` on the box boundary.
    pub fn build<H: Hamiltonian + ?Sized>(
        system: &H,
        half_width: f64,
        points: usize,
        hbar: f64,
        energy: f64,
        half_window: f64,
    ) -> Result<Self> {
        let dim = system.dim();
        let axis = axis_nodes(points, half_width);
        let mut potential = Vec::with_capacity(points.pow(dim as u32));
        let mut boundary_min = f64::INFINITY;
        let edge = |i: usize| i == 0 || i == points - 1;
        match dim {
            1 => {
                for (i, &x) in axis.iter().enumerate() {
                    let v = system
                        .potential(&[x])
                        .ok_or_else(|| Error::Grid("system is not of the form |p|^2 + V(q)".into()))?;
                    if edge(i) {
                        boundary_min = boundary_min.min(v);
                    }
                    potential.push(v);
                }
            }
            2 => {
                for (i, &x) in axis.iter().enumerate() {
                    for (j, &y) in axis.iter().enumerate() {
                        let v = system
                            .potential(&[x, y])
                            .ok_or_else(|| Error::Grid("system is not of the form |p|^2 + V(q)".into()))?;
                        if edge(i) || edge(j) {
                            boundary_min = boundary_min.min(v);
                        }
                        potential.push(v);
                    }
                }
            }
            _ => return Err(Error::Grid(format!("dimension {dim} not supported (1 or 2)"))),
        }
        let top = energy + half_window;
        if boundary_min < top + half_window {
            return Err(Error::Grid(format!(
                "box too small: V on the boundary reaches down to {boundary_min:.4}, \
                 needs at least {:.4}",
                top + half_window
            )));
        }
        let gh = Self::from_potential_samples(dim, half_width, points, hbar, potential)?;
        let ratio = gh.resolution_ratio(top);
        if ratio < RESOLUTION_RULE {
            return Err(Error::Grid(format!(
                "resolution rule violated: N pi hbar / (2 L p_max) = {ratio:.3} < {RESOLUTION_RULE}"
            )));
        }
        Ok(gh)
    }

    /// Chooses L and N for the window and builds the grid: L is the smallest
    /// quarter-integer confining box with margin, enlarged by 25%, and N the
    /// smallest multiple of 32 satisfying the resolution rule.
    pub fn for_window<H: Hamiltonian + ?Sized>(system: &H, hbar: f64, energy: f64, half_window: f64) -> Result<Self> {
        let dim = system.dim();
        let need = energy + half_window + half_window.max(1.0);
        let mut l: f64 = 0.25;
        let min_on_box = |l: f64| -> Result<f64> {
            let m = 64;
            let mut vmin = f64::INFINITY;
            for i in 0..=m {
                let s = -l + 2.0 * l * i as f64 / m as f64;
                let pts: Vec<Vec<f64>> = if dim == 1 {
                    vec![vec![-l], vec![l]]
                } else {
                    vec![vec![-l, s], vec![l, s], vec![s, -l], vec![s, l]]
                };
                for q in pts {
                    let v = system
                        .potential(&q)
                        .ok_or_else(|| Error::Grid("system is not of the form |p|^2 + V(q)".into()))?;
                    vmin = vmin.min(v);
                }
            }
            Ok(vmin)
        };
        while min_on_box(l)? < need {
            l += 0.25;
            if l > 1e3 {
                return Err(Error::Grid("potential does not confine the window".into()));
            }
        }
        let l = 1.25 * l;
        let vmin = grid_min_potential(system, l, 256)?;
        let p_max = (energy + half_window - vmin).max(0.0).sqrt();
        let n_req = RESOLUTION_RULE * 2.0 * l * p_max / (PI * hbar);
        let n = ((n_req / 32.0).ceil() as usize).max(1) * 32;
        let states = n.pow(dim as u32);
        if states > MAX_DENSE_STATES {
            return Err(Error::Grid(format!(
                "window needs {n} points per axis ({states} basis states), above the dense limit of \
                 {MAX_DENSE_STATES}; raise hbar or narrow the window"
            )));
        }
        Self::build(system, l, n.max(32), hbar, energy, half_window)
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / self.points as f64
    }

    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn axis(&self) -> Vec<f64> {
        axis_nodes(self.points, self.half_width)
    }

    /// Position of flat index i.
    pub fn position(&self, i: usize) -> Vec<f64> {
        let x = |k: usize| -self.half_width + self.dx() * k as f64;
        match self.dim {
            1 => vec![x(i)],
            _ => vec![x(i / self.points), x(i % self.points)],
        }
    }

    pub fn min_potential(&self) -> f64 {
        self.potential.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// N pi hbar / (2 L p_max) with p_max = sqrt(energy - min V).
    pub fn resolution_ratio(&self, energy: f64) -> f64 {
        let p_max = (energy - self.min_potential()).max(1e-300).sqrt();
        self.points as f64 * PI * self.hbar / (2.0 * self.half_width * p_max)
    }

    /// Highest energy at which the resolution rule still holds.
    pub fn reliable_energy(&self) -> f64 {
        let p = self.points as f64 * PI * self.hbar / (2.0 * self.half_width * RESOLUTION_RULE);
        self.min_potential() + p * p
    }

    /// Dense real symmetric matrix of the discretized operator.
    pub fn dense(&self) -> DMatrix<f64> {
        let n = self.points;
        let t = |i: usize, j: usize| self.kinetic_row[(j + n - i) % n];
        match self.dim {
            1 => DMatrix::from_fn(n, n, |i, j| t(i, j) + if i == j { self.potential[i] } else { 0.0 }),
            _ => {
                let size = n * n;
                let mut h = DMatrix::zeros(size, size);
                for i0 in 0..n {
                    for i1 in 0..n {
                        let row = i0 * n + i1;
                        for j1 in 0..n {
                            h[(row, i0 * n + j1)] += t(i1, j1);
                        }
                        for j0 in 0..n {
                            h[(row, j0 * n + i1)] += t(i0, j0);
                        }
                        h[(row, row)] += self.potential[row];
                    }
                }
                h
            }
        }
    }

    /// All eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.dense().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// All eigenpairs in ascending order of energy.
    pub fn eigenpairs(&self) -> Vec<EigenPair> {
        let eig = self.dense().symmetric_eigen();
        let mut pairs: Vec<EigenPair> = eig
            .eigenvalues
            .iter()
            .enumerate()
            .map(|(j, &e)| EigenPair {
                energy: e,
                vector: eig.eigenvectors.column(j).into_owned(),
            })
            .collect();
        pairs.sort_by(|a, b| a.energy.total_cmp(&b.energy));
        pairs
    }

    fn check_window(&self, energy: f64, half_window: f64) -> Result<()> {
        if self.len() > MAX_DENSE_STATES {
            return Err(Error::Grid(format!(
                "{} basis states exceed the dense eigensolver limit of {MAX_DENSE_STATES}",
                self.len()
            )));
        }
        let top = energy + half_window;
        if top > self.reliable_energy() {
            return Err(Error::Grid(format!(
                "window top {top:.4} exceeds the resolved part of the spectrum ({:.4}); increase N",
                self.reliable_energy()
            )));
        }
        Ok(())
    }

    /// Eigenpairs with energy in [E - dE, E + dE], unit Euclidean norm.
    pub fn eigensolve_window(&self, energy: f64, half_window: f64) -> Result<Vec<EigenPair>> {
        self.check_window(energy, half_window)?;
        Ok(self
            .eigenpairs()
            .into_iter()
            .filter(|p| (p.energy - energy).abs() <= half_window)
            .collect())
    }

    /// Eigenvalues in [E - dE, E + dE].
    pub fn eigenvalues_in_window(&self, energy: f64, half_window: f64) -> Result<Vec<f64>> {
        self.check_window(energy, half_window)?;
        Ok(self
            .eigenvalues()
            .into_iter()
            .filter(|e| (e - energy).abs() <= half_window)
            .collect())
    }

    /// <psi, A psi> for a unit vector of grid values.
    pub fn expectation(&self, vector: &DVector<f64>, observable: &Observable) -> f64 {
        vector
            .iter()
            .enumerate()
            .map(|(i, v)| v * v * observable.at_position(&self.position(i)))
            .sum()
    }

    /// L2 norm of grid samples, sum |psi|^2 dx^n.
    pub fn norm(&self, psi: &[Complex64]) -> f64 {
        (psi.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.dx().powi(self.dim as i32)).sqrt()
    }

    /// Mass within the edge layer.
    pub fn edge_mass(&self, psi: &[Complex64]) -> f64 {
        let n = self.points;
        let near = |i: usize| i < EDGE_LAYER || i >= n - EDGE_LAYER;
        let vol = self.dx().powi(self.dim as i32);
        psi.iter()
            .enumerate()
            .filter(|(i, _)| match self.dim {
                1 => near(*i),
                _ => near(i / n) || near(i % n),
            })
            .map(|(_, z)| z.norm_sqr())
            .sum::<f64>()
            * vol
    }

    /// Samples a function of position on the grid.
    pub fn sample<F: Fn(&[f64]) -> Complex64>(&self, f: F) -> Vec<Complex64> {
        (0..self.len()).map(|i| f(&self.position(i))).collect()
    }

    /// L2 inner product <a, b> on the grid.
    pub fn inner(&self, a: &[Complex64], b: &[Complex64]) -> Complex64 {
        a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<Complex64>() * self.dx().powi(self.dim as i32)
    }
}

fn axis_nodes(points: usize, half_width: f64) -> Vec<f64> {
    let dx = 2.0 * half_width / points as f64;
    (0..points).map(|i| -half_width + dx * i as f64).collect()
}

fn grid_min_potential<H: Hamiltonian + ?Sized>(system: &H, l: f64, m: usize) -> Result<f64> {
    let axis = axis_nodes(m, l);
    let mut vmin = f64::INFINITY;
    for &x in &axis {
        if system.dim() == 1 {
            vmin = vmin.min(system.potential(&[x]).ok_or_else(|| Error::Grid("no potential".into()))?);
        } else {
            for &y in &axis {
                vmin = vmin.min(system.potential(&[x, y]).ok_or_else(|| Error::Grid("no potential".into()))?);
            }
        }
    }
    Ok(vmin)
}

/// Wavenumbers of the discrete Fourier modes in FFT order.
fn wavenumbers(points: usize, half_width: f64) -> Vec<f64> {
    let dk = PI / half_width;
    (0..points)
        .map(|m| {
            let mm = if m < points / 2 { m as i64 } else { m as i64 - points as i64 };
            dk * mm as f64
        })
        .collect()
}

/// c_d = N^{-1} sum_m hbar^2 k_m^2 cos(k_m d dx).
fn circulant_kinetic_row(points: usize, half_width: f64, hbar: f64) -> Vec<f64> {
    let k = wavenumbers(points, half_width);
    let n = points as f64;
    (0..points)
        .map(|d| {
            k.iter()
                .enumerate()
                .map(|(m, &km)| hbar * hbar * km * km * (2.0 * PI * (m * d) as f64 / n).cos())
                .sum::<f64>()
                / n
        })
        .collect()
}

/// Exact rho_A(E) = sum_j chi(E_j)^2 <psi_j, A psi_j> g((E - E_j) / hbar),
/// given eigenvalues and the matching expectation values.
pub fn exact_rho_from_spectrum(
    energies: &[f64],
    expectations: &[f64],
    window: &SpectralWindow,
    hbar: f64,
    e_grid: &[f64],
) -> Vec<f64> {
    let weights: Vec<f64> = energies
        .iter()
        .zip(expectations)
        .map(|(&e, &a)| window.chi(e).powi(2) * a)
        .collect();
    let mut total = 0.0;
    let mut edge = 0.0;
    let rho: Vec<f64> = e_grid
        .iter()
        .map(|&e| {
            let xs: Vec<f64> = energies.iter().map(|ej| (e - ej) / hbar).collect();
            let gs = window.g_many(&xs);
            let mut acc = 0.0;
            for ((w, g), ej) in weights.iter().zip(&gs).zip(energies) {
                let term = w * g;
                total += term.abs();
                if window.chi(*ej) < 1.0 {
                    edge += term.abs();
                }
                acc += term;
            }
            acc
        })
        .collect();
    if total > 0.0 && edge / total > 1e-6 {
        warn!(
            "eigenstates on the cutoff edge contribute {:.2e} of the density; widen the window",
            edge / total
        );
    }
    rho
}

/// The exact regularized density of states on `e_grid`.
pub fn exact_rho(
    gh: &GridHamiltonian,
    window: &SpectralWindow,
    e_grid: &[f64],
    observable: &Observable,
) -> Result<Vec<f64>> {
    observable.validate(gh.dim)?;
    let (e, dw) = (window.energy, window.half_width);
    let (energies, expectations) = match observable {
        Observable::Identity => {
            let ev = gh.eigenvalues_in_window(e, dw)?;
            let ones = vec![1.0; ev.len()];
            (ev, ones)
        }
        Observable::Constant { value } => {
            let ev = gh.eigenvalues_in_window(e, dw)?;
            let c = vec![*value; ev.len()];
            (ev, c)
        }
        _ => {
            let pairs = gh.eigensolve_window(e, dw)?;
            let ex = pairs.iter().map(|p| gh.expectation(&p.vector, observable)).collect();
            (pairs.into_iter().map(|p| p.energy).collect(), ex)
        }
    };
    Ok(exact_rho_from_spectrum(&energies, &expectations, window, gh.hbar, e_grid))
}

/// Time-stepping scheme of [`SplitOperator`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitScheme {
    /// exp(-iV dt/2hbar) exp(-i hbar k^2 dt) exp(-iV dt/2hbar), second order.
    Strang,
    /// Symmetric triple-jump composition of three Strang steps, fourth order.
    TripleJump,
}

/// Split-operator propagator for exp(-i t H / hbar).
pub struct SplitOperator {
    grid: GridHamiltonian,
    pub scheme: SplitScheme,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    k2: Vec<f64>,
}

impl SplitOperator {
    pub fn new(grid: &GridHamiltonian) -> Self {
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(grid.points);
        let ifft = planner.plan_fft_inverse(grid.points);
        let k = wavenumbers(grid.points, grid.half_width);
        let k2 = match grid.dim {
            1 => k.iter().map(|x| x * x).collect(),
            _ => {
                let mut v = Vec::with_capacity(grid.len());
                for a in &k {
                    for b in &k {
                        v.push(a * a + b * b);
                    }
                }
                v
            }
        };
        Self { grid: grid.clone(), scheme: SplitScheme::Strang, fft, ifft, k2 }
    }

    pub fn with_scheme(mut self, scheme: SplitScheme) -> Self {
        self.scheme = scheme;
        self
    }

    fn transform(&self, psi: &mut [Complex64], forward: bool) {
        let plan = if forward { &self.fft } else { &self.ifft };
        let n = self.grid.points;
        match self.grid.dim {
            1 => plan.process(psi),
            _ => {
                // rows (axis 1 contiguous)
                for row in psi.chunks_mut(n) {
                    plan.process(row);
                }
                // columns
                let mut col = vec![Complex64::new(0.0, 0.0); n];
                for j in 0..n {
                    for i in 0..n {
                        col[i] = psi[i * n + j];
                    }
                    plan.process(&mut col);
                    for i in 0..n {
                        psi[i * n + j] = col[i];
                    }
                }
            }
        }
        if !forward {
            let scale = 1.0 / self.grid.len() as f64;
            for z in psi.iter_mut() {
                *z *= scale;
            }
        }
    }

    /// Propagates over time t with `steps` steps of the configured scheme.
    pub fn propagate(&self, psi0: &[Complex64], t: f64, steps: usize) -> Result<Vec<Complex64>> {
        let g = &self.grid;
        if psi0.len() != g.len() {
            return Err(Error::Grid("state length does not match the grid".into()));
        }
        let mass0 = g.norm(psi0).powi(2);
        if g.edge_mass(psi0) > 1e-10 * mass0.max(1.0) {
            return Err(Error::BoundaryReflection { mass: g.edge_mass(psi0) });
        }
        let mut psi = psi0.to_vec();
        if t == 0.0 || steps == 0 {
            return Ok(psi);
        }
        let dt = t / steps as f64;
        let substeps: Vec<f64> = match self.scheme {
            SplitScheme::Strang => vec![dt],
            SplitScheme::TripleJump => {
                let c = 2f64.cbrt();
                let w1 = 1.0 / (2.0 - c);
                let w0 = -c / (2.0 - c);
                vec![w1 * dt, w0 * dt, w1 * dt]
            }
        };
        let phases: Vec<(Vec<Complex64>, Vec<Complex64>)> = substeps.iter().map(|&h| self.phases(h)).collect();
        for _ in 0..steps {
            for (half_v, kin) in &phases {
                self.strang_step(&mut psi, half_v, kin);
            }
        }
        let edge = g.edge_mass(&psi);
        if edge > 1e-8 * mass0.max(1e-300) {
            return Err(Error::BoundaryReflection { mass: edge });
        }
        Ok(psi)
    }

    fn phases(&self, dt: f64) -> (Vec<Complex64>, Vec<Complex64>) {
        let hbar = self.grid.hbar;
        let half_v = self
            .grid
            .potential
            .iter()
            .map(|v| Complex64::from_polar(1.0, -v * dt / (2.0 * hbar)))
            .collect();
        let kin = self.k2.iter().map(|k2| Complex64::from_polar(1.0, -hbar * k2 * dt)).collect();
        (half_v, kin)
    }

    fn strang_step(&self, psi: &mut [Complex64], half_v: &[Complex64], kin: &[Complex64]) {
        for (z, v) in psi.iter_mut().zip(half_v) {
            *z *= v;
        }
        self.transform(psi, true);
        for (z, k) in psi.iter_mut().zip(kin) {
            *z *= k;
        }
        self.transform(psi, false);
        for (z, v) in psi.iter_mut().zip(half_v) {
            *z *= v;
        }
    }

    /// Doubles the step count from `steps` until halving dt changes the
    /// result by at most `tol` in L2. Returns (psi, steps, last change).
    pub fn propagate_converged(
        &self,
        psi0: &[Complex64],
        t: f64,
        mut steps: usize,
        tol: f64,
        max_steps: usize,
    ) -> Result<(Vec<Complex64>, usize, f64)> {
        let mut prev = self.propagate(psi0, t, steps)?;
        loop {
            let next_steps = steps * 2;
            if next_steps > max_steps {
                return Err(Error::Quadrature(format!(
                    "split-operator propagation not converged to {tol:.1e} within {max_steps} steps"
                )));
            }
            let next = self.propagate(psi0, t, next_steps)?;
            let diff: Vec<Complex64> = next.iter().zip(&prev).map(|(a, b)| a - b).collect();
            let change = self.grid.norm(&diff);
            if change <= tol {
                return Ok((next, next_steps, change));
            }
            prev = next;
            steps = next_steps;
        }
    }
}

/// One-shot Strang propagation.
pub fn split_operator_propagate(
    grid: &GridHamiltonian,
    psi0: &[Complex64],
    t: f64,
    steps: usize,
) -> Result<Vec<Complex64>> {
    SplitOperator::new(grid).propagate(psi0, t, steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonians::Builtin;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn harmonic_spectrum() {
        let gh = GridHamiltonian::build(&Builtin::Ho1d, 4.0, 512, 0.05, 1.0, 0.5).unwrap();
        let ev = gh.eigenvalues();
        for k in 0..=20 {
            let exact = 0.05 * (2 * k + 1) as f64;
            assert!((ev[k] - exact).abs() / exact <= 1e-8, "k = {k}: {} vs {exact}", ev[k]);
        }
    }

    #[test]
    fn free_particle_modes() {
        let l = 3.0;
        let n = 16;
        let hbar = 0.7;
        let gh = GridHamiltonian::from_potential_samples(1, l, n, hbar, vec![0.0; n]).unwrap();
        let ev = gh.eigenvalues();
        let mut exact: Vec<f64> = (-(n as i64) / 2..(n as i64) / 2)
            .map(|m| (hbar * 2.0 * PI * m as f64 / (2.0 * l)).powi(2))
            .collect();
        exact.sort_by(f64::total_cmp);
        for (a, b) in ev.iter().zip(&exact) {
            assert!((a - b).abs() <= 1e-10 * b.max(1.0));
        }
    }

    #[test]
    fn hermitian_on_random_vectors() {
        let gh = GridHamiltonian::build(&Builtin::Quartic1d { a: 0.0 }, 2.0, 128, 0.1, 1.0, 0.5).unwrap();
        let h = gh.dense();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..5 {
            let u = DVector::from_fn(h.nrows(), |_, _| rng.gen_range(-1.0..1.0));
            let v = DVector::from_fn(h.nrows(), |_, _| rng.gen_range(-1.0..1.0));
            let a = u.dot(&(&h * &v));
            let b = (&h * &u).dot(&v);
            assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
        }
    }

    #[test]
    fn window_eigenvalues_and_residuals() {
        let gh = GridHamiltonian::build(&Builtin::Ho1d, 4.0, 512, 0.05, 1.0, 0.5).unwrap();
        let pairs = gh.eigensolve_window(1.0, 0.5).unwrap();
        let ev: Vec<f64> = pairs.iter().map(|p| p.energy).collect();
        assert_eq!(ev.len(), 10);
        for (j, e) in ev.iter().enumerate() {
            assert!((e - (0.55 + 0.1 * j as f64)).abs() < 1e-9);
        }
        let h = gh.dense();
        for p in &pairs {
            let r = (&h * &p.vector - &p.vector * p.energy).norm();
            assert!(r <= 1e-8 * p.energy.abs());
        }
        for a in &pairs {
            for b in &pairs {
                let d = a.vector.dot(&b.vector);
                let target = if std::ptr::eq(a, b) { 1.0 } else { 0.0 };
                assert!((d - target).abs() < 1e-8);
            }
        }
        assert!(gh.eigenvalues_in_window(0.01, 0.02).unwrap().is_empty());
    }

    #[test]
    fn build_rejects_bad_grids() {
        assert!(GridHamiltonian::build(&Builtin::Ho1d, 4.0, 64, 0.05, 1.0, 0.5).is_err());
        assert!(GridHamiltonian::build(&Builtin::Ho1d, 1.0, 512, 0.05, 1.0, 0.5).is_err());
        assert!(GridHamiltonian::from_potential_samples(3, 1.0, 8, 1.0, vec![0.0; 512]).is_err());
    }

    #[test]
    fn single_level_density_is_g() {
        let w = SpectralWindow::new(3.0, 1.0, 0.5).unwrap();
        let grid = [0.9, 1.0, 1.05];
        let rho = exact_rho_from_spectrum(&[1.0], &[1.0], &w, 0.05, &grid);
        for (r, e) in rho.iter().zip(grid) {
            assert!((r - w.g((e - 1.0) / 0.05)).abs() < 1e-14);
        }
    }

    #[test]
    fn q_squared_expectations_follow_virial() {
        let gh = GridHamiltonian::build(&Builtin::Ho1d, 4.0, 512, 0.05, 1.0, 0.5).unwrap();
        let pairs = gh.eigensolve_window(1.0, 0.5).unwrap();
        let obs = Observable::QPower { axis: 0, power: 2 };
        for p in &pairs {
            assert!((gh.expectation(&p.vector, &obs) - p.energy / 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn free_gaussian_spreading() {
        let hbar = 0.1;
        let l = 10.0;
        let n = 512;
        let gh = GridHamiltonian::from_potential_samples(1, l, n, hbar, vec![0.0; n]).unwrap();
        let psi0 = gh.sample(|x| Complex64::new((PI * hbar).powf(-0.25) * (-x[0] * x[0] / (2.0 * hbar)).exp(), 0.0));
        let t = 1.0;
        let psi = split_operator_propagate(&gh, &psi0, t, 1).unwrap();
        // i hbar psi_t = -hbar^2 psi_xx: width parameter s(t) = 1 + 2 i hbar t / hbar = 1 + 2it
        let s = Complex64::new(1.0, 2.0 * t);
        let exact = gh.sample(|x| (PI * hbar).powf(-0.25) / s.sqrt() * (-x[0] * x[0] / (2.0 * hbar * s)).exp());
        let diff: Vec<Complex64> = psi.iter().zip(&exact).map(|(a, b)| a - b).collect();
        assert!(gh.norm(&diff) < 1e-8);
        assert!((gh.norm(&psi) - gh.norm(&psi0)).abs() < 1e-10);
        let same = split_operator_propagate(&gh, &psi0, 0.0, 10).unwrap();
        assert_eq!(same, psi0);
    }

    #[test]
    fn coherent_state_revival_in_harmonic_well() {
        let hbar = 0.05;
        let gh = GridHamiltonian::build(&Builtin::Ho1d, 4.0, 512, hbar, 1.0, 0.5).unwrap();
        let q0 = 1.0;
        let psi0 = gh.sample(|x| Complex64::new((PI * hbar).powf(-0.25) * (-(x[0] - q0).powi(2) / (2.0 * hbar)).exp(), 0.0));
        let so = SplitOperator::new(&gh).with_scheme(SplitScheme::TripleJump);
        let (psi, _, _) = so.propagate_converged(&psi0, PI, 64, 1e-8, 1 << 16).unwrap();
        assert!(gh.inner(&psi0, &psi).norm() >= 1.0 - 1e-6);
    }

    #[test]
    fn boundary_mass_is_detected() {
        let hbar = 0.05;
        let gh = GridHamiltonian::from_potential_samples(1, 2.0, 128, hbar, vec![0.0; 128]).unwrap();
        let psi0 = gh.sample(|x| Complex64::new((PI * hbar).powf(-0.25) * (-(x[0] - 1.95).powi(2) / (2.0 * hbar)).exp(), 0.0));
        assert!(matches!(split_operator_propagate(&gh, &psi0, 0.1, 10), Err(Error::BoundaryReflection { .. })));
    }
}
