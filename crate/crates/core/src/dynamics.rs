//! Hamilton's equations with the co-integrated linearized flow F(t), the
//! action integrals and the continuous branch of arg det(A + iB).

use std::f64::consts::FRAC_PI_2;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonians::{Hamiltonian, PhaseSpacePoint};
use crate::linalg::{complexify, unwrap_near};
use crate::ode::{self, OdeOptions, StepObserver};

pub use crate::linalg::symplectic_defect;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FlowOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Relative energy tolerance; integration fails beyond ten times this.
    pub energy_tol: f64,
    /// Number of intervals of the uniform reporting grid.
    pub samples: usize,
    pub max_steps: usize,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-12,
            atol: 1e-12,
            energy_tol: 1e-9,
            samples: 64,
            max_steps: 2_000_000,
        }
    }
}

impl FlowOptions {
    fn ode(&self) -> OdeOptions {
        OdeOptions {
            rtol: self.rtol,
            atol: self.atol,
            max_steps: self.max_steps,
            ..OdeOptions::default()
        }
    }
}

/// Time-sampled solution of Hamilton's equations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub descriptor: String,
    pub start: PhaseSpacePoint,
    pub energy: f64,
    pub times: Vec<f64>,
    pub states: Vec<PhaseSpacePoint>,
    /// Running integral of p . dq/dt.
    pub action_pq: Vec<f64>,
    /// S(q, p; t) = int p . dq/dt - t H.
    pub action_s: Vec<f64>,
    /// delta(alpha, t) = S - (p_t . q_t - p . q) / 2.
    pub action_delta: Vec<f64>,
    /// Running integral of the requested observable, if any.
    pub observable: Option<Vec<f64>>,
    pub max_energy_drift: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &PhaseSpacePoint {
        self.states.last().expect("trajectory has at least one sample")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory has at least one sample")
    }
}

/// F(t) samples on a trajectory's time grid, with the unwrapped argument of
/// det U, U = A + iB.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearizedFlow {
    pub n: usize,
    pub times: Vec<f64>,
    pub f: Vec<DMatrix<f64>>,
    pub det_u_arg: Vec<f64>,
}

impl LinearizedFlow {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> usize {
        self.times.len() - 1
    }

    /// (A, B, C, D) with F = [[A, B], [C, D]] in (q, p) ordering.
    pub fn blocks(&self, i: usize) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        split_blocks(&self.f[i])
    }

    pub fn u(&self, i: usize) -> DMatrix<Complex64> {
        let (a, b, _, _) = self.blocks(i);
        complexify(&a, &b)
    }

    /// C + iD.
    pub fn vc(&self, i: usize) -> DMatrix<Complex64> {
        let (_, _, c, d) = self.blocks(i);
        complexify(&c, &d)
    }

    /// M = (C + iD)(A + iB)^{-1}.
    pub fn m(&self, i: usize) -> Result<DMatrix<Complex64>> {
        width_matrix(&self.f[i], self.times[i])
    }

    /// det U on the continuous branch: |det U| e^{i arg}.
    pub fn det_u(&self, i: usize) -> Complex64 {
        let modulus = self.u(i).determinant().norm();
        Complex64::from_polar(modulus, self.det_u_arg[i])
    }

    /// (det U)_c^{-1/2}, the square root continued from 1 at t = 0.
    pub fn inv_sqrt_det_u(&self, i: usize) -> Complex64 {
        let modulus = self.u(i).determinant().norm();
        Complex64::from_polar(modulus.powf(-0.5), -0.5 * self.det_u_arg[i])
    }
}

pub fn split_blocks(f: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let n = f.nrows() / 2;
    (
        f.view((0, 0), (n, n)).into_owned(),
        f.view((0, n), (n, n)).into_owned(),
        f.view((n, 0), (n, n)).into_owned(),
        f.view((n, n), (n, n)).into_owned(),
    )
}

/// M = (C + iD)(A + iB)^{-1} for a symplectic F.
pub fn width_matrix(f: &DMatrix<f64>, t: f64) -> Result<DMatrix<Complex64>> {
    let (a, b, c, d) = split_blocks(f);
    let u = complexify(&a, &b);
    let det = u.determinant().norm();
    let inv = u.try_inverse().ok_or(Error::SingularU { t, det })?;
    Ok(complexify(&c, &d) * inv)
}

fn det_u_of(f_flat: &[f64], n: usize) -> Complex64 {
    // F stored column-major, 2n x 2n.
    let at = |r: usize, c: usize| f_flat[c * 2 * n + r];
    let u = DMatrix::from_fn(n, n, |r, c| Complex64::new(at(r, c), at(r, n + c)));
    u.determinant()
}

struct Layout {
    n: usize,
    with_obs: bool,
    with_jacobi: bool,
}

impl Layout {
    fn action(&self) -> usize {
        2 * self.n
    }
    fn obs(&self) -> usize {
        2 * self.n + 1
    }
    fn f_start(&self) -> usize {
        2 * self.n + 1 + usize::from(self.with_obs)
    }
    fn len(&self) -> usize {
        self.f_start() + if self.with_jacobi { 4 * self.n * self.n } else { 0 }
    }
}

struct Monitor<'a, H: ?Sized> {
    system: &'a H,
    layout: &'a Layout,
    energy: f64,
    limit: f64,
    max_drift: f64,
    track_branch: bool,
    arg: f64,
    outputs: Vec<f64>,
}

impl<H: Hamiltonian + ?Sized> StepObserver for Monitor<'_, H> {
    fn accept(&mut self, _t: f64, y: &[f64]) -> bool {
        if !self.track_branch {
            return true;
        }
        let d = det_u_of(&y[self.layout.f_start()..], self.layout.n);
        (unwrap_near(self.arg, d.arg()) - self.arg).abs() < FRAC_PI_2
    }

    fn commit(&mut self, t: f64, y: &[f64]) -> Result<()> {
        let n = self.layout.n;
        let drift = (self.system.energy(&y[..2 * n]) - self.energy).abs();
        self.max_drift = self.max_drift.max(drift);
        if drift > self.limit {
            return Err(Error::EnergyDrift { drift, limit: self.limit, t });
        }
        if self.track_branch {
            let d = det_u_of(&y[self.layout.f_start()..], n);
            // U^*(C + iD) - (C + iD)^*U = 2i Id keeps U invertible; collapse
            // of |det U| means F has lost symplecticity.
            if d.norm() < 1e-10 {
                return Err(Error::SingularU { t, det: d.norm() });
            }
            self.arg = unwrap_near(self.arg, d.arg());
        }
        Ok(())
    }

    fn output(&mut self, _index: usize, _t: f64, _y: &[f64]) {
        self.outputs.push(self.arg);
    }
}

/// Integrates from alpha0 through `times` (monotone, all of one sign, may
/// start at 0). Optionally co-integrates F(t) with branch tracking of
/// arg det U, and the running integral of `observable` along the orbit.
pub fn integrate_at<H: Hamiltonian + ?Sized>(
    system: &H,
    alpha0: &PhaseSpacePoint,
    times: &[f64],
    opts: &FlowOptions,
    jacobi: bool,
    observable: Option<&dyn Fn(&[f64]) -> f64>,
) -> Result<(Trajectory, Option<LinearizedFlow>)> {
    let n = system.dim();
    if alpha0.dim() != n {
        return Err(Error::param(format!(
            "point has dimension {} but the system has {n}",
            alpha0.dim()
        )));
    }
    if times.is_empty() {
        return Err(Error::param("no output times requested"));
    }
    let layout = Layout {
        n,
        with_obs: observable.is_some(),
        with_jacobi: jacobi,
    };
    let z0 = alpha0.to_vec();
    let energy = system.energy(&z0);
    if !energy.is_finite() {
        return Err(Error::NonFinite("initial energy".into()));
    }
    let mut y0 = vec![0.0; layout.len()];
    y0[..2 * n].copy_from_slice(&z0);
    if jacobi {
        let fs = layout.f_start();
        for i in 0..2 * n {
            y0[fs + i * 2 * n + i] = 1.0;
        }
    }

    let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
        let z = &y[..2 * n];
        let g = system.gradient(z);
        for i in 0..n {
            dy[i] = g[n + i];
            dy[n + i] = -g[i];
        }
        dy[layout.action()] = (0..n).map(|i| z[n + i] * g[n + i]).sum();
        if let Some(obs) = observable {
            dy[layout.obs()] = obs(z);
        }
        if jacobi {
            let hess = system.hessian(z);
            let fs = layout.f_start();
            let d = 2 * n;
            let f = &y[fs..];
            // (J H'' F): rows 0..n take +(H'' F)_{n+i}, rows n..2n take -(H'' F)_i.
            for c in 0..d {
                for r in 0..d {
                    let mut acc = 0.0;
                    let src = if r < n { r + n } else { r - n };
                    for k in 0..d {
                        acc += hess[(src, k)] * f[c * d + k];
                    }
                    dy[fs + c * d + r] = if r < n { acc } else { -acc };
                }
            }
        }
    };

    let mut monitor = Monitor {
        system,
        layout: &layout,
        energy,
        limit: 10.0 * opts.energy_tol * energy.abs().max(1.0),
        max_drift: 0.0,
        track_branch: jacobi,
        arg: 0.0,
        outputs: Vec::with_capacity(times.len()),
    };
    let ys = ode::solve(rhs, 0.0, &y0, times, &opts.ode(), &mut monitor)?;

    let pq0: f64 = (0..n).map(|i| z0[i] * z0[n + i]).sum();
    let mut traj = Trajectory {
        descriptor: system.descriptor(),
        start: alpha0.clone(),
        energy,
        times: times.to_vec(),
        states: Vec::with_capacity(ys.len()),
        action_pq: Vec::with_capacity(ys.len()),
        action_s: Vec::with_capacity(ys.len()),
        action_delta: Vec::with_capacity(ys.len()),
        observable: observable.map(|_| Vec::with_capacity(ys.len())),
        max_energy_drift: monitor.max_drift,
    };
    let mut flow = jacobi.then(|| LinearizedFlow {
        n,
        times: times.to_vec(),
        f: Vec::with_capacity(ys.len()),
        det_u_arg: monitor.outputs.clone(),
    });
    for (y, &t) in ys.iter().zip(times) {
        let state = PhaseSpacePoint::from_slice(&y[..2 * n]);
        let pq: f64 = (0..n).map(|i| state.q[i] * state.p[i]).sum();
        let apq = y[layout.action()];
        let s = apq - t * energy;
        traj.action_pq.push(apq);
        traj.action_s.push(s);
        traj.action_delta.push(s - 0.5 * (pq - pq0));
        if let Some(o) = traj.observable.as_mut() {
            o.push(y[layout.obs()]);
        }
        traj.states.push(state);
        if let Some(fl) = flow.as_mut() {
            let d = 2 * n;
            fl.f.push(DMatrix::from_column_slice(d, d, &y[layout.f_start()..]));
        }
    }
    Ok((traj, flow))
}

fn uniform_grid(t_final: f64, samples: usize) -> Vec<f64> {
    if t_final == 0.0 {
        return vec![0.0];
    }
    let m = samples.max(1);
    (0..=m).map(|i| t_final * i as f64 / m as f64).collect()
}

/// Integrates Hamilton's equations on a uniform reporting grid over [0, t_final].
pub fn integrate<H: Hamiltonian + ?Sized>(
    system: &H,
    alpha0: &PhaseSpacePoint,
    t_final: f64,
    opts: &FlowOptions,
) -> Result<Trajectory> {
    let times = uniform_grid(t_final, opts.samples);
    Ok(integrate_at(system, alpha0, &times, opts, false, None)?.0)
}

/// As [`integrate`], also returning F(t) with its blocks and det U branch.
pub fn integrate_with_jacobi<H: Hamiltonian + ?Sized>(
    system: &H,
    alpha0: &PhaseSpacePoint,
    t_final: f64,
    opts: &FlowOptions,
) -> Result<(Trajectory, LinearizedFlow)> {
    let times = uniform_grid(t_final, opts.samples);
    let (traj, flow) = integrate_at(system, alpha0, &times, opts, true, None)?;
    Ok((traj, flow.expect("requested the linearized flow")))
}

/// End point, monodromy-type Jacobian and int p.dq of the flow over time t.
pub fn flow_map_with_jacobian<H: Hamiltonian + ?Sized>(
    system: &H,
    z: &[f64],
    t: f64,
    opts: &FlowOptions,
) -> Result<(Vec<f64>, DMatrix<f64>, f64)> {
    let alpha = PhaseSpacePoint::from_slice(z);
    let (traj, flow) = integrate_at(system, &alpha, &[t], opts, true, None)?;
    let flow = flow.expect("requested the linearized flow");
    Ok((traj.final_state().to_vec(), flow.f[0].clone(), traj.action_pq[0]))
}

/// End point of the flow over time t.
pub fn flow_map<H: Hamiltonian + ?Sized>(system: &H, z: &[f64], t: f64, opts: &FlowOptions) -> Result<Vec<f64>> {
    let alpha = PhaseSpacePoint::from_slice(z);
    let (traj, _) = integrate_at(system, &alpha, &[t], opts, false, None)?;
    Ok(traj.final_state().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonians::Builtin;
    use std::f64::consts::PI;

    fn pt(q: &[f64], p: &[f64]) -> PhaseSpacePoint {
        PhaseSpacePoint::new(q.to_vec(), p.to_vec()).unwrap()
    }

    #[test]
    fn ho1d_period_and_action() {
        let e: f64 = 1.3;
        let a = pt(&[e.sqrt()], &[0.0]);
        let traj = integrate(&Builtin::Ho1d, &a, PI, &FlowOptions::default()).unwrap();
        assert!(traj.final_state().distance(&a) < 1e-9);
        assert!((traj.action_pq.last().unwrap() - PI * e).abs() < 1e-9);
        assert!(traj.action_s.last().unwrap().abs() < 1e-9);
    }

    #[test]
    fn zero_time_is_trivial() {
        let a = pt(&[0.3], &[0.2]);
        let (traj, flow) = integrate_with_jacobi(&Builtin::Quartic1d { a: 0.0 }, &a, 0.0, &FlowOptions::default()).unwrap();
        assert_eq!(traj.len(), 1);
        assert_eq!(traj.states[0], a);
        assert_eq!(traj.action_s[0], 0.0);
        assert_eq!(traj.action_delta[0], 0.0);
        assert_eq!(flow.f[0], DMatrix::identity(2, 2));
        assert_eq!(flow.det_u_arg[0], 0.0);
        let m = flow.m(0).unwrap();
        assert!((m[(0, 0)] - Complex64::i()).norm() < 1e-15);
    }

    #[test]
    fn ho1d_linearized_flow_closed_form() {
        let a = pt(&[0.7], &[-0.4]);
        let opts = FlowOptions { samples: 40, ..Default::default() };
        let (traj, flow) = integrate_with_jacobi(&Builtin::Ho1d, &a, 3.0, &opts).unwrap();
        for i in 0..traj.len() {
            let t = traj.times[i];
            let exact = DMatrix::from_row_slice(2, 2, &[(2.0 * t).cos(), (2.0 * t).sin(), -(2.0 * t).sin(), (2.0 * t).cos()]);
            assert!((&flow.f[i] - exact).amax() < 1e-10);
            let m = flow.m(i).unwrap();
            assert!((m[(0, 0)] - Complex64::i()).norm() < 1e-10);
            assert!((flow.det_u_arg[i] - 2.0 * t).abs() < 1e-10);
            // delta vanishes identically for the harmonic oscillator
            assert!(traj.action_delta[i].abs() < 1e-10);
        }
    }

    #[test]
    fn action_identity_and_energy() {
        let sys = Builtin::HenonHeilesBounded { lambda: 1.0, mu: 0.1 };
        let a = pt(&[0.3, -0.2], &[0.5, 0.4]);
        let traj = integrate(&sys, &a, 5.0, &FlowOptions::default()).unwrap();
        for i in 0..traj.len() {
            let lhs = traj.action_pq[i];
            let rhs = traj.action_s[i] + traj.times[i] * traj.energy;
            assert!((lhs - rhs).abs() < 1e-12);
            let drift = (sys.energy(&traj.states[i].to_vec()) - traj.energy).abs();
            assert!(drift <= 1e-9 * traj.energy.max(1.0));
        }
    }

    #[test]
    fn reversibility_and_flow_property() {
        let sys = Builtin::Quartic1d { a: 1.0 };
        let a = pt(&[0.4], &[0.9]);
        let opts = FlowOptions::default();
        let fwd = flow_map(&sys, &a.to_vec(), 1.7, &opts).unwrap();
        let back = flow_map(&sys, &fwd, -1.7, &opts).unwrap();
        assert!(PhaseSpacePoint::from_slice(&back).distance(&a) < 1e-7);
        let mid = flow_map(&sys, &a.to_vec(), 0.6, &opts).unwrap();
        let two = flow_map(&sys, &mid, 1.1, &opts).unwrap();
        let d: f64 = two.iter().zip(&fwd).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(d < 1e-7);
    }

    #[test]
    fn quartic_symplecticity_and_unit_determinant() {
        let sys = Builtin::Quartic1d { a: 0.0 };
        let a = pt(&[0.8], &[-0.3]);
        let (_, flow) = integrate_with_jacobi(&sys, &a, 1.0, &FlowOptions::default()).unwrap();
        for f in &flow.f {
            assert!(symplectic_defect(f) <= 1e-8);
            assert!((f.determinant() - 1.0).abs() < 1e-8);
        }
        for i in 0..flow.len() {
            let m = flow.m(i).unwrap();
            assert!(m[(0, 0)].im > 0.0);
        }
    }

    #[test]
    fn ho2d_width_matrix_symmetric_with_positive_imaginary_part() {
        let sys = Builtin::Ho2dAniso { omega: 1.6180339887 };
        let a = pt(&[0.5, 0.1], &[0.2, -0.6]);
        let (_, flow) = integrate_with_jacobi(&sys, &a, 4.0, &FlowOptions::default()).unwrap();
        for i in 0..flow.len() {
            let m = flow.m(i).unwrap();
            assert!((&m - m.transpose()).camax() < 1e-9);
            let im = m.map(|z| z.im);
            let ev = im.symmetric_eigenvalues();
            assert!(ev.min() > 0.0);
        }
        // branch: consecutive samples move by less than pi/2
        for w in flow.det_u_arg.windows(2) {
            assert!((w[1] - w[0]).abs() < FRAC_PI_2);
        }
    }

    #[test]
    fn energy_drift_failure_is_reported() {
        let sys = Builtin::Quartic1d { a: 0.0 };
        let a = pt(&[1.0], &[0.0]);
        let opts = FlowOptions { rtol: 1e-3, atol: 1e-3, energy_tol: 1e-14, ..Default::default() };
        let r = integrate(&sys, &a, 5.0, &opts);
        assert!(matches!(r, Err(Error::EnergyDrift { .. })));
    }
}
