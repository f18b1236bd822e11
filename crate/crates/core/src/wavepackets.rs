//! Coherent states, leading-order Gaussian propagation and the closed-form
//! overlap m0(alpha, t).
//!
//! Phase convention: phi_alpha(x) = (pi hbar)^{-n/4}
//! exp{(i/hbar)(p.x - p.q/2) - |x - q|^2 / (2 hbar)}, i.e. T(alpha) psi_0 with
//! T(alpha) f(x) = e^{(i/hbar)(p.x - p.q/2)} f(x - q).

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, FlowOptions, LinearizedFlow, Trajectory};
use crate::error::{Error, Result};
use crate::hamiltonians::{Hamiltonian, PhaseSpacePoint};
use crate::linalg::{gaussian_integral, symplectic_form};
use crate::quantum_oracle::{GridHamiltonian, SplitOperator, SplitScheme};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoherentState {
    pub center: PhaseSpacePoint,
    pub hbar: f64,
}

impl CoherentState {
    pub fn new(center: PhaseSpacePoint, hbar: f64) -> Result<Self> {
        if !(hbar > 0.0) {
            return Err(Error::param("hbar must be positive"));
        }
        Ok(Self { center, hbar })
    }

    pub fn value(&self, x: &[f64]) -> Complex64 {
        let (q, p, h) = (&self.center.q, &self.center.p, self.hbar);
        let n = q.len();
        let px: f64 = p.iter().zip(x).map(|(a, b)| a * b).sum();
        let pq: f64 = p.iter().zip(q).map(|(a, b)| a * b).sum();
        let d2: f64 = x.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum();
        (PI * h).powf(-(n as f64) / 4.0) * Complex64::new(-d2 / (2.0 * h), (px - 0.5 * pq) / h).exp()
    }

    /// Samples on the grid; fails if the grid loses more than 1e-6 of the norm.
    pub fn sample(&self, grid: &GridHamiltonian) -> Result<Vec<Complex64>> {
        if grid.dim != self.center.dim() {
            return Err(Error::Grid("grid dimension does not match the state".into()));
        }
        let psi = grid.sample(|x| self.value(x));
        let deficit = (grid.norm(&psi) - 1.0).abs();
        if deficit > 1e-6 {
            return Err(Error::Grid(format!(
                "grid too small or coarse for the coherent state (norm deficit {deficit:.2e})"
            )));
        }
        Ok(psi)
    }
}

/// Closed form of <phi_alpha, phi_beta>.
pub fn coherent_overlap(alpha: &PhaseSpacePoint, beta: &PhaseSpacePoint, hbar: f64) -> Complex64 {
    let a = alpha.to_vec();
    let b = beta.to_vec();
    let d2: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum();
    Complex64::new(-d2 / (4.0 * hbar), -symplectic_form(&a, &b) / (2.0 * hbar)).exp()
}

/// e^{i delta/hbar} T(alpha_t) Met(F(t)) psi_0 as an explicit Gaussian.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianPacket {
    pub center: PhaseSpacePoint,
    pub width: DMatrix<Complex64>,
    pub delta: f64,
    /// (det U)_c^{-1/2}.
    pub prefactor: Complex64,
    pub hbar: f64,
    pub time: f64,
}

impl GaussianPacket {
    pub fn initial(center: PhaseSpacePoint, hbar: f64) -> Self {
        let n = center.dim();
        Self {
            center,
            width: DMatrix::identity(n, n) * I,
            delta: 0.0,
            prefactor: Complex64::new(1.0, 0.0),
            hbar,
            time: 0.0,
        }
    }

    pub fn value(&self, x: &[f64]) -> Complex64 {
        let (q, p, h) = (&self.center.q, &self.center.p, self.hbar);
        let n = q.len();
        let y = DVector::from_iterator(n, x.iter().zip(q).map(|(a, b)| Complex64::new(a - b, 0.0)));
        let quad = (y.transpose() * &self.width * &y)[(0, 0)];
        let px: f64 = p.iter().zip(x).map(|(a, b)| a * b).sum();
        let pq: f64 = p.iter().zip(q).map(|(a, b)| a * b).sum();
        let phase = I * ((px - 0.5 * pq + self.delta) / h) + I * quad / (2.0 * h);
        self.prefactor * (PI * h).powf(-(n as f64) / 4.0) * phase.exp()
    }

    pub fn sample(&self, grid: &GridHamiltonian) -> Vec<Complex64> {
        grid.sample(|x| self.value(x))
    }

    /// Analytic L2 norm |pref| (det Im M)^{-1/4}.
    pub fn analytic_norm(&self) -> f64 {
        let im = self.width.map(|z| z.im);
        self.prefactor.norm() * im.determinant().powf(-0.25)
    }
}

/// Leading-order propagated packet from the flow data at sample `i`.
pub fn packet_from_flow(traj: &Trajectory, flow: &LinearizedFlow, i: usize, hbar: f64) -> Result<GaussianPacket> {
    Ok(GaussianPacket {
        center: traj.states[i].clone(),
        width: flow.m(i)?,
        delta: traj.action_delta[i],
        prefactor: flow.inv_sqrt_det_u(i),
        hbar,
        time: traj.times[i],
    })
}

/// The packet e^{i delta/hbar} T(alpha_t) Met(F(t)) psi_0 at time t.
pub fn propagate_leading<H: Hamiltonian + ?Sized>(
    system: &H,
    alpha: &PhaseSpacePoint,
    t: f64,
    hbar: f64,
    opts: &FlowOptions,
) -> Result<GaussianPacket> {
    if !(hbar > 0.0) {
        return Err(Error::param("hbar must be positive"));
    }
    let (traj, flow) = dynamics::integrate_with_jacobi(system, alpha, t, &FlowOptions { samples: 1, ..*opts })?;
    packet_from_flow(&traj, &flow, traj.len() - 1, hbar)
}

/// m0 in scaled variables a = (q - q_t)/sqrt(hbar), b = (p - p_t)/sqrt(hbar):
/// pref pi^{-n/2} int exp{(i/2)(M + i)x.x + (a - ib).x + i a.b/2 - |a|^2/2} dx.
pub fn m0_closed_form(
    alpha: &PhaseSpacePoint,
    alpha_t: &PhaseSpacePoint,
    width: &DMatrix<Complex64>,
    prefactor: Complex64,
    hbar: f64,
) -> Result<Complex64> {
    let n = alpha.dim();
    let s = hbar.sqrt();
    let a: Vec<f64> = alpha.q.iter().zip(&alpha_t.q).map(|(x, y)| (x - y) / s).collect();
    let b: Vec<f64> = alpha.p.iter().zip(&alpha_t.p).map(|(x, y)| (x - y) / s).collect();
    let q = DMatrix::identity(n, n).map(|x: f64| Complex64::new(x, 0.0)) - width * I;
    let l = DVector::from_iterator(n, a.iter().zip(&b).map(|(x, y)| Complex64::new(*x, -*y)));
    let ab: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    let aa: f64 = a.iter().map(|x| x * x).sum();
    let c = Complex64::new(-0.5 * aa, 0.5 * ab);
    let integral = gaussian_integral(&q, &l, c)?;
    Ok(prefactor * PI.powf(-(n as f64) / 2.0) * integral)
}

/// m0(alpha, t) for the given system.
pub fn overlap_m0<H: Hamiltonian + ?Sized>(
    system: &H,
    alpha: &PhaseSpacePoint,
    t: f64,
    hbar: f64,
    opts: &FlowOptions,
) -> Result<Complex64> {
    let packet = propagate_leading(system, alpha, t, hbar, opts)?;
    m0_closed_form(alpha, &packet.center, &packet.width, packet.prefactor, hbar)
}

/// <phi_alpha, packet> = e^{i delta/hbar} e^{-i sigma(alpha, alpha_t)/2hbar} m0.
pub fn overlap_with_packet(alpha: &PhaseSpacePoint, packet: &GaussianPacket) -> Result<Complex64> {
    let m0 = m0_closed_form(alpha, &packet.center, &packet.width, packet.prefactor, packet.hbar)?;
    let sigma = symplectic_form(&alpha.to_vec(), &packet.center.to_vec());
    let phase = Complex64::from_polar(1.0, (packet.delta - 0.5 * sigma) / packet.hbar);
    Ok(phase * m0)
}

/// Leading-order packet against converged split-operator propagation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PacketComparison {
    pub hbar: f64,
    pub time: f64,
    /// L2 distance between the packet and the exact state.
    pub l2_error: f64,
    /// arg <packet, exact>.
    pub phase_offset: f64,
    pub packet_norm: f64,
    pub exact_norm: f64,
    pub grid_points: usize,
    pub steps: usize,
    pub richardson_change: f64,
}

/// Grid suited to following a packet launched at alpha: window around its
/// energy with half-width max(0.5, E / 2).
pub fn packet_grid<H: Hamiltonian + ?Sized>(system: &H, alpha: &PhaseSpacePoint, hbar: f64) -> Result<GridHamiltonian> {
    let e = system.energy(&alpha.to_vec());
    GridHamiltonian::for_window(system, hbar, e, (0.5 * e.abs()).max(0.5))
}

/// Compares the leading-order packet with the exact propagation of phi_alpha.
pub fn compare_with_exact<H: Hamiltonian + ?Sized>(
    system: &H,
    grid: &GridHamiltonian,
    alpha: &PhaseSpacePoint,
    t: f64,
    hbar: f64,
    richardson_tol: f64,
    opts: &FlowOptions,
) -> Result<PacketComparison> {
    let psi0 = CoherentState::new(alpha.clone(), hbar)?.sample(grid)?;
    let so = SplitOperator::new(grid).with_scheme(SplitScheme::TripleJump);
    let start = ((t.abs() * 32.0).ceil() as usize).max(8);
    let (exact, steps, change) = so.propagate_converged(&psi0, t, start, richardson_tol, 1 << 20)?;
    let packet = propagate_leading(system, alpha, t, hbar, opts)?;
    let approx = packet.sample(grid);
    let diff: Vec<Complex64> = approx.iter().zip(&exact).map(|(a, b)| a - b).collect();
    Ok(PacketComparison {
        hbar,
        time: t,
        l2_error: grid.norm(&diff),
        phase_offset: grid.inner(&approx, &exact).arg(),
        packet_norm: grid.norm(&approx),
        exact_norm: grid.norm(&exact),
        grid_points: grid.points,
        steps,
        richardson_change: change,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonians::Builtin;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pt(q: f64, p: f64) -> PhaseSpacePoint {
        PhaseSpacePoint::new(vec![q], vec![p]).unwrap()
    }

    fn free_grid(hbar: f64, l: f64, n: usize) -> GridHamiltonian {
        GridHamiltonian::from_potential_samples(1, l, n, hbar, vec![0.0; n]).unwrap()
    }

    #[test]
    fn ground_state_is_positive_gaussian() {
        let g = free_grid(0.1, 4.0, 256);
        let psi = CoherentState::new(pt(0.0, 0.0), 0.1).unwrap().sample(&g).unwrap();
        assert!(psi.iter().all(|z| z.im == 0.0 && z.re > 0.0));
        assert!((g.norm(&psi) - 1.0).abs() < 1e-10);
        let shifted = CoherentState::new(pt(0.7, 0.0), 0.1).unwrap().sample(&g).unwrap();
        assert!(shifted.iter().all(|z| z.im == 0.0));
    }

    #[test]
    fn small_grid_rejected() {
        let g = free_grid(0.1, 0.5, 64);
        assert!(CoherentState::new(pt(0.0, 0.0), 0.1).unwrap().sample(&g).is_err());
    }

    #[test]
    fn overlap_formula_vs_grid_quadrature() {
        let hbar = 0.1;
        let g = free_grid(hbar, 6.0, 1024);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let a = pt(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let b = pt(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let pa = CoherentState::new(a.clone(), hbar).unwrap().sample(&g).unwrap();
            let pb = CoherentState::new(b.clone(), hbar).unwrap().sample(&g).unwrap();
            let num = g.inner(&pa, &pb);
            assert!((num - coherent_overlap(&a, &b, hbar)).norm() < 1e-8);
        }
    }

    #[test]
    fn initial_packet_is_coherent_state() {
        let a = pt(0.3, -0.4);
        let packet = propagate_leading(&Builtin::Quartic1d { a: 0.0 }, &a, 0.0, 0.05, &FlowOptions::default()).unwrap();
        let cs = CoherentState::new(a.clone(), 0.05).unwrap();
        for x in [-0.2, 0.1, 0.3, 0.6] {
            assert!((packet.value(&[x]) - cs.value(&[x])).norm() < 1e-14);
        }
        let m0 = overlap_m0(&Builtin::Quartic1d { a: 0.0 }, &a, 0.0, 0.05, &FlowOptions::default()).unwrap();
        assert!((m0 - 1.0).norm() < 1e-14);
    }

    #[test]
    fn harmonic_packet_stays_coherent() {
        let a = pt(0.8, 0.1);
        for t in [0.4, 1.3, PI] {
            let packet = propagate_leading(&Builtin::Ho1d, &a, t, 0.02, &FlowOptions::default()).unwrap();
            assert!((packet.width[(0, 0)] - I).norm() < 1e-10);
            assert!((packet.prefactor.norm() - 1.0).abs() < 1e-10);
            assert!((packet.analytic_norm() - 1.0).abs() < 1e-10);
        }
        let back = propagate_leading(&Builtin::Ho1d, &a, PI, 0.02, &FlowOptions::default()).unwrap();
        assert!(back.center.distance(&a) < 1e-9);
    }

    #[test]
    fn m0_full_period_is_minus_one() {
        let e: f64 = 1.0;
        let a = pt(e.sqrt(), 0.0);
        let m0 = overlap_m0(&Builtin::Ho1d, &a, PI, 0.05, &FlowOptions::default()).unwrap();
        assert!((m0 + 1.0).norm() < 1e-9);
        let m = overlap_m0(&Builtin::Ho1d, &a, 0.77, 0.05, &FlowOptions::default()).unwrap();
        assert!(m.norm() <= 1.0);
    }

    #[test]
    fn m0_closed_form_vs_grid_quadrature() {
        let hbar = 0.05;
        let sys = Builtin::Quartic1d { a: 0.0 };
        let g = free_grid(hbar, 5.0, 2048);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let a = pt(rng.gen_range(-0.8..0.8), rng.gen_range(-0.8..0.8));
            let t = rng.gen_range(0.1..1.0);
            let packet = propagate_leading(&sys, &a, t, hbar, &FlowOptions::default()).unwrap();
            let phi = CoherentState::new(a.clone(), hbar).unwrap().sample(&g).unwrap();
            let psi = packet.sample(&g);
            let num = g.inner(&phi, &psi);
            let closed = overlap_with_packet(&a, &packet).unwrap();
            assert!((num - closed).norm() < 1e-6, "{num} vs {closed}");
            assert!((g.norm(&psi) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn harmonic_packet_matches_exact_propagation() {
        let hbar = 0.01;
        let a = pt(0.6, 0.3);
        let grid = packet_grid(&Builtin::Ho1d, &a, hbar).unwrap();
        let cmp = compare_with_exact(&Builtin::Ho1d, &grid, &a, 1.0, hbar, 1e-9, &FlowOptions::default()).unwrap();
        assert!(cmp.l2_error < 1e-6, "{cmp:?}");
        assert!(cmp.phase_offset.abs() < 5e-2);
    }
}
