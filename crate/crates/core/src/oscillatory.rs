//! Stationary phase with a critical manifold and a complex phase, checked
//! numerically, and the Hessian of the trace-formula phase at a periodic orbit.
//!
//! J(omega) = int e^{i omega f(x)} a(x) dx ~ (2 pi / omega)^{(d-k)/2} sum_j c_j omega^{-j},
//! c_0 = int_M e^{i omega f(m)} [det(f''(m)|N_m / i)]_*^{-1/2} a(m) dV_M.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, FlowOptions};
use crate::error::{Error, Result};
use crate::hamiltonians::{Hamiltonian, PhaseSpacePoint};
use crate::linalg::complex_eigenvalues;
use crate::orbits::{self, EnergyShell, OrbitOptions, PeriodicOrbit};
use crate::quadrature::CompositeRule;

type RealFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type PhaseFn = Arc<dyn Fn(&[f64]) -> Complex64 + Send + Sync>;
type GradFn = Arc<dyn Fn(&[f64]) -> Vec<Complex64> + Send + Sync>;
type HessFn = Arc<dyn Fn(&[f64]) -> DMatrix<Complex64> + Send + Sync>;
type MapFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type TangentFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

/// Integration region of J.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// The disk |x| < r_max in d = 2, integrated in polar coordinates.
    Polar { r_max: f64 },
}

/// Parametrization of the critical manifold M over a parameter box.
#[derive(Clone)]
pub struct ManifoldChart {
    pub k: usize,
    pub params: Vec<(f64, f64)>,
    pub map: MapFn,
    /// d x k matrix of tangent vectors.
    pub tangent: TangentFn,
}

impl ManifoldChart {
    pub fn point(m: Vec<f64>) -> Self {
        let d = m.len();
        Self {
            k: 0,
            params: vec![],
            map: Arc::new(move |_| m.clone()),
            tangent: Arc::new(move |_| DMatrix::zeros(d, 0)),
        }
    }

    /// Chart-quadrature nodes: (parameter, weight).
    fn nodes(&self, panels: usize) -> Vec<(Vec<f64>, f64)> {
        let mut out = vec![(Vec::new(), 1.0)];
        for &(a, b) in &self.params {
            let rule = CompositeRule::new(a, b, panels, 16);
            out = out
                .into_iter()
                .flat_map(|(p, w)| {
                    rule.nodes.iter().zip(&rule.weights).map(move |(&x, &wx)| {
                        let mut q = p.clone();
                        q.push(x);
                        (q, w * wx)
                    })
                })
                .collect();
        }
        out
    }
}

#[derive(Clone)]
pub struct OscillatoryProblem {
    pub name: String,
    pub dim: usize,
    pub phase: PhaseFn,
    pub gradient: GradFn,
    pub hessian: HessFn,
    pub amplitude: RealFn,
    pub domain: Domain,
    pub manifold: ManifoldChart,
    pub omegas: Vec<f64>,
}

/// [det P]_*^{-1/2}: product of reciprocal principal square roots of the
/// eigenvalues, which must have nonnegative real part.
pub fn det_inv_sqrt_star(p: &DMatrix<Complex64>) -> Result<Complex64> {
    let scale = p.iter().fold(0.0f64, |a, z| a.max(z.norm())).max(1e-300);
    let mut out = Complex64::new(1.0, 0.0);
    for l in complex_eigenvalues(p) {
        if l.norm() <= 1e-14 * scale {
            return Err(Error::NotPositiveDefinite);
        }
        if l.re < -1e-10 * scale {
            return Err(Error::param(format!(
                "eigenvalue {l} of f''/i has negative real part; Im f >= 0 is violated"
            )));
        }
        out /= l.sqrt();
    }
    Ok(out)
}

fn orthonormal_complement(t: &DMatrix<f64>) -> DMatrix<f64> {
    let d = t.nrows();
    if t.ncols() == 0 {
        return DMatrix::identity(d, d);
    }
    // columns of I - T T^+ span the normal space; take d - k of them via SVD
    let svd = (t * t.transpose()).svd(true, false);
    let u = svd.u.expect("requested U");
    let k = t.ncols();
    let mut idx: Vec<usize> = (0..d).collect();
    idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    DMatrix::from_columns(&idx[k..].iter().map(|&i| u.column(i).into_owned()).collect::<Vec<_>>())
}

impl OscillatoryProblem {
    /// Checks Im f >= 0 on seeded samples, and criticality, Im f = 0 and a
    /// nondegenerate normal Hessian at chart samples.
    pub fn validate(&self, seed: u64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..1000 {
            let x = self.sample_domain(&mut rng);
            let f = (self.phase)(&x);
            if f.im < -1e-14 {
                return Err(Error::param(format!("Im f = {:.3e} < 0 at {x:?}", f.im)));
            }
        }
        for (u, _) in self.manifold.nodes(2) {
            let m = (self.manifold.map)(&u);
            let g = (self.gradient)(&m);
            let gn = g.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if gn > 1e-10 {
                return Err(Error::param(format!("|f'| = {gn:.2e} on the critical manifold")));
            }
            if (self.phase)(&m).im > 1e-12 {
                return Err(Error::param("Im f > 0 on the critical manifold"));
            }
            let hn = self.normal_hessian(&u);
            let smin = hn.singular_values().min();
            if smin <= 1e-8 {
                return Err(Error::param(format!("normal Hessian is degenerate (min singular value {smin:.2e})")));
            }
        }
        Ok(())
    }

    fn sample_domain(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match &self.domain {
            Domain::Box { lo, hi } => lo.iter().zip(hi).map(|(a, b)| rng.gen_range(*a..*b)).collect(),
            Domain::Polar { r_max } => {
                let r = r_max * rng.gen::<f64>().sqrt();
                let th = rng.gen_range(0.0..2.0 * PI);
                vec![r * th.cos(), r * th.sin()]
            }
        }
    }

    /// f''(m) restricted to the normal space N_m, in an orthonormal basis.
    fn normal_hessian(&self, u: &[f64]) -> DMatrix<Complex64> {
        let m = (self.manifold.map)(u);
        let t = (self.manifold.tangent)(u);
        let n = orthonormal_complement(&t).map(|x| Complex64::new(x, 0.0));
        n.transpose() * (self.hessian)(&m) * n
    }

    /// Leading coefficient by chart quadrature.
    pub fn leading_coefficient(&self, omega: f64) -> Result<Complex64> {
        let mut total = Complex64::new(0.0, 0.0);
        for (u, w) in self.manifold.nodes(8) {
            let m = (self.manifold.map)(&u);
            let a = (self.amplitude)(&m);
            if a == 0.0 {
                continue;
            }
            let t = (self.manifold.tangent)(&u);
            let dv = if t.ncols() == 0 { 1.0 } else { (t.transpose() * &t).determinant().sqrt() };
            let hn = self.normal_hessian(&u) / Complex64::i();
            let root = det_inv_sqrt_star(&hn)?;
            total += Complex64::from_polar(1.0, omega * (self.phase)(&m).re)
                * (-omega * (self.phase)(&m).im).exp()
                * root
                * (a * dv * w);
        }
        Ok(total)
    }

    fn integrate_with(&self, omega: f64, panels: &[usize]) -> Complex64 {
        let integrand = |x: &[f64]| -> Complex64 {
            let a = (self.amplitude)(x);
            if a == 0.0 {
                return Complex64::new(0.0, 0.0);
            }
            (Complex64::i() * omega * (self.phase)(x)).exp() * a
        };
        match &self.domain {
            Domain::Box { lo, hi } => {
                let rules: Vec<CompositeRule> = (0..self.dim)
                    .map(|i| CompositeRule::new(lo[i], hi[i], panels[i], 16))
                    .collect();
                tensor_sum(&rules, &integrand)
            }
            Domain::Polar { r_max } => {
                let rr = CompositeRule::new(0.0, *r_max, panels[0], 16);
                let rt = CompositeRule::new(0.0, 2.0 * PI, panels[1], 16);
                let mut acc = Complex64::new(0.0, 0.0);
                for (&r, &wr) in rr.nodes.iter().zip(&rr.weights) {
                    for (&th, &wt) in rt.nodes.iter().zip(&rt.weights) {
                        acc += integrand(&[r * th.cos(), r * th.sin()]) * (wr * wt * r);
                    }
                }
                acc
            }
        }
    }

    /// J(omega) by tensor Gauss-Legendre, doubling panels per axis until
    /// every single-axis refinement changes J by less than `tol` relative.
    pub fn quadrature_j(&self, omega: f64, tol: f64) -> Result<Complex64> {
        let axes = match self.domain {
            Domain::Polar { .. } => 2,
            Domain::Box { .. } => self.dim,
        };
        let start = ((omega / (4.0 * PI)).ceil() as usize).max(4);
        let mut panels = vec![start; axes];
        if let Domain::Polar { .. } = self.domain {
            panels[1] = 4;
        }
        let budget = 1usize << 22;
        let mut current = self.integrate_with(omega, &panels);
        // absolute floor for integrals that vanish
        let floor = 1e-13 * {
            let mut abs = self.clone();
            let a = self.amplitude.clone();
            abs.amplitude = Arc::new(move |x| a(x).abs());
            abs.phase = Arc::new(|_| Complex64::new(0.0, 0.0));
            abs.integrate_with(0.0, &panels).re
        };
        loop {
            let mut converged = true;
            for i in 0..axes {
                let mut trial = panels.clone();
                trial[i] *= 2;
                if trial.iter().map(|p| p * 16).product::<usize>() > budget {
                    return Err(Error::Quadrature(format!("J({omega}) refinement budget exceeded")));
                }
                let next = self.integrate_with(omega, &trial);
                let scale = next.norm().max(current.norm());
                if (next - current).norm() > (tol * scale).max(floor) {
                    converged = false;
                    panels = trial;
                }
                current = next;
            }
            if converged {
                return Ok(current);
            }
        }
    }
}

fn tensor_sum(rules: &[CompositeRule], f: &dyn Fn(&[f64]) -> Complex64) -> Complex64 {
    fn rec(rules: &[CompositeRule], x: &mut Vec<f64>, w: f64, f: &dyn Fn(&[f64]) -> Complex64) -> Complex64 {
        match rules.split_first() {
            None => f(x) * w,
            Some((r, rest)) => {
                let mut acc = Complex64::new(0.0, 0.0);
                for (&xi, &wi) in r.nodes.iter().zip(&r.weights) {
                    x.push(xi);
                    acc += rec(rest, x, w * wi, f);
                    x.pop();
                }
                acc
            }
        }
    }
    rec(rules, &mut Vec::new(), 1.0, f)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpansionReport {
    pub name: String,
    pub dim: usize,
    pub manifold_dim: usize,
    pub omegas: Vec<f64>,
    pub j: Vec<Complex64>,
    pub c0: Vec<Complex64>,
    /// |J (omega / 2 pi)^{(d-k)/2} - c0|.
    pub residuals: Vec<f64>,
    /// Minus the log-log slope of the residuals.
    pub exponent: f64,
    /// | |J| (omega/2pi)^{(d-k)/2} / |c0| - 1 | at the largest omega (None if c0 = 0).
    pub modulus_error: Option<f64>,
    pub accepted: bool,
}

/// Least-squares slope of log y against log x.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() < 2 || x.len() != y.len() {
        return Err(Error::Fit("need at least two points".into()));
    }
    if y.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Fit("nonpositive value in log-log fit".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("degenerate abscissae".into()));
    }
    Ok(sxy / sxx)
}

/// Fits |J(omega)(omega/2pi)^{(d-k)/2} - c0| ~ C omega^{-exponent}.
pub fn verify_expansion(problem: &OscillatoryProblem, tol: f64) -> Result<ExpansionReport> {
    let omegas = &problem.omegas;
    if omegas.len() < 2 {
        return Err(Error::Fit("at least two frequencies are needed".into()));
    }
    let (lo, hi) = omegas.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &w| (a.min(w), b.max(w)));
    if hi < 10.0 * lo * (1.0 - 1e-12) {
        return Err(Error::Fit("frequencies must span at least one decade".into()));
    }
    let evaluated: Vec<(Complex64, Complex64)> = omegas
        .par_iter()
        .map(|&w| Ok((problem.quadrature_j(w, tol)?, problem.leading_coefficient(w)?)))
        .collect::<Result<_>>()?;
    let power = 0.5 * (problem.dim - problem.manifold.k) as f64;
    let residuals: Vec<f64> = omegas
        .iter()
        .zip(&evaluated)
        .map(|(&w, (j, c0))| (j * (w / (2.0 * PI)).powf(power) - c0).norm())
        .collect();
    let mut order: Vec<usize> = (0..omegas.len()).collect();
    order.sort_by(|&a, &b| omegas[a].total_cmp(&omegas[b]));
    if order.windows(2).any(|p| residuals[p[1]] > residuals[p[0]]) {
        return Err(Error::Fit(format!("residuals are not monotone in omega: {residuals:?}")));
    }
    let exponent = -log_log_slope(omegas, &residuals)?;
    let imax = order[order.len() - 1];
    let (jm, cm) = evaluated[imax];
    let modulus_error = if cm.norm() > 0.0 {
        Some((jm.norm() * (omegas[imax] / (2.0 * PI)).powf(power) / cm.norm() - 1.0).abs())
    } else {
        None
    };
    let accepted = (0.7..=1.3).contains(&exponent) && modulus_error.map_or(true, |e| e <= 0.02);
    Ok(ExpansionReport {
        name: problem.name.clone(),
        dim: problem.dim,
        manifold_dim: problem.manifold.k,
        omegas: omegas.clone(),
        j: evaluated.iter().map(|e| e.0).collect(),
        c0: evaluated.iter().map(|e| e.1).collect(),
        residuals,
        exponent,
        modulus_error,
        accepted,
    })
}

/// exp(1 - 1/(1 - u^2)) on |u| < 1, zero outside; equals 1 at u = 0.
pub fn bump(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - u * u)).exp()
    }
}

/// Default frequency list: 6 log-spaced values in [1e2, 1e3].
pub fn default_omegas() -> Vec<f64> {
    (0..6).map(|i| 100.0 * 10f64.powf(i as f64 / 5.0)).collect()
}

/// f = x^2/2 in d = 1 with a bump amplitude of radius `radius`, shifted by `shift`,
/// multiplied by x^power.
fn fresnel_family(name: &str, radius: f64, shift: f64, power: i32) -> OscillatoryProblem {
    OscillatoryProblem {
        name: name.into(),
        dim: 1,
        phase: Arc::new(|x| Complex64::new(0.5 * x[0] * x[0], 0.0)),
        gradient: Arc::new(|x| vec![Complex64::new(x[0], 0.0)]),
        hessian: Arc::new(|_| DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0))),
        amplitude: Arc::new(move |x| x[0].powi(power) * bump((x[0] - shift) / radius)),
        domain: Domain::Box { lo: vec![shift - radius], hi: vec![shift + radius] },
        manifold: ManifoldChart::point(vec![0.0]),
        omegas: default_omegas(),
    }
}

/// d = 1, f = x^2/2, a = bump with a(0) = 1; c0 = e^{i pi/4}.
pub fn fresnel_problem() -> OscillatoryProblem {
    fresnel_family("fresnel", 2.0, 0.0, 0)
}

/// Amplitude vanishing at the stationary point, a = x bump(x - 0.3): c0 = 0.
pub fn vanishing_amplitude_problem() -> OscillatoryProblem {
    fresnel_family("vanishing_amplitude", 2.0, 0.3, 1)
}

/// Odd amplitude x bump(x): J vanishes identically by parity.
pub fn odd_amplitude_problem() -> OscillatoryProblem {
    fresnel_family("odd_amplitude", 2.0, 0.0, 1)
}

/// d = 2, f = (|x|^2 - 1)^2 with an annular radial bump around the unit
/// circle; c0 = 8^{-1/2} e^{i pi/4} 2 pi.
pub fn circle_problem() -> OscillatoryProblem {
    let f = |x: &[f64]| {
        let r2 = x[0] * x[0] + x[1] * x[1];
        (r2 - 1.0) * (r2 - 1.0)
    };
    OscillatoryProblem {
        name: "circle".into(),
        dim: 2,
        phase: Arc::new(move |x| Complex64::new(f(x), 0.0)),
        gradient: Arc::new(|x| {
            let s = 4.0 * (x[0] * x[0] + x[1] * x[1] - 1.0);
            vec![Complex64::new(s * x[0], 0.0), Complex64::new(s * x[1], 0.0)]
        }),
        hessian: Arc::new(|x| {
            let s = 4.0 * (x[0] * x[0] + x[1] * x[1] - 1.0);
            DMatrix::from_fn(2, 2, |i, j| {
                let d = if i == j { s } else { 0.0 };
                Complex64::new(d + 8.0 * x[i] * x[j], 0.0)
            })
        }),
        amplitude: Arc::new(|x| bump(((x[0] * x[0] + x[1] * x[1]).sqrt() - 1.0) / 0.5)),
        domain: Domain::Polar { r_max: 1.5 },
        manifold: ManifoldChart {
            k: 1,
            params: vec![(0.0, 2.0 * PI)],
            map: Arc::new(|u| vec![u[0].cos(), u[0].sin()]),
            tangent: Arc::new(|u| DMatrix::from_column_slice(2, 1, &[-u[0].sin(), u[0].cos()])),
        },
        omegas: default_omegas(),
    }
}

/// d = 2 saddle f = (x^2 - y^2)/2 at a point manifold; c0 = a(0) = 1.
pub fn saddle_problem() -> OscillatoryProblem {
    OscillatoryProblem {
        name: "saddle".into(),
        dim: 2,
        phase: Arc::new(|x| Complex64::new(0.5 * (x[0] * x[0] - x[1] * x[1]), 0.0)),
        gradient: Arc::new(|x| vec![Complex64::new(x[0], 0.0), Complex64::new(-x[1], 0.0)]),
        hessian: Arc::new(|_| DMatrix::from_diagonal(&DVector::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)]))),
        amplitude: Arc::new(|x| bump(x[0] / 1.5) * bump(x[1] / 1.5)),
        domain: Domain::Box { lo: vec![-1.5, -1.5], hi: vec![1.5, 1.5] },
        manifold: ManifoldChart::point(vec![0.0, 0.0]),
        omegas: default_omegas(),
    }
}

/// Problems of the default stationary-phase suite.
pub fn builtin_suite() -> Vec<OscillatoryProblem> {
    vec![fresnel_problem(), circle_problem(), vanishing_amplitude_problem()]
}

/// The trace-formula phase
/// Phi_E(t, y, alpha) = S + q.p + (y - q_t).p_t + (y - q_t).M(y - q_t)/2
///   + i|y - q|^2/2 - y.p + E t, with S(alpha, t) = int_0^t (p.dq - H ds).
pub fn trace_phase<H: Hamiltonian + ?Sized>(
    system: &H,
    t: f64,
    y: &[f64],
    alpha: &PhaseSpacePoint,
    energy: f64,
    opts: &FlowOptions,
) -> Result<Complex64> {
    let n = system.dim();
    let (zt, f, apq) = dynamics::flow_map_with_jacobian(system, &alpha.to_vec(), t, opts)?;
    let (q, p) = (&alpha.q, &alpha.p);
    let (qt, pt) = (&zt[..n], &zt[n..]);
    let m = dynamics::width_matrix(&f, t)?;
    let s = apq - t * system.energy(&alpha.to_vec());
    let d: DVector<Complex64> = DVector::from_iterator(n, (0..n).map(|i| Complex64::new(y[i] - qt[i], 0.0)));
    let quad = (d.transpose() * &m * &d)[(0, 0)];
    let mut re = s + t * energy;
    let mut im = 0.0;
    for i in 0..n {
        re += q[i] * p[i] + (y[i] - qt[i]) * pt[i] - y[i] * p[i];
        im += 0.5 * (y[i] - q[i]).powi(2);
    }
    Ok(Complex64::new(re, im) + 0.5 * quad)
}

/// The (1 + 3n) x (1 + 3n) Hessian of Phi_E at a critical point, variables
/// ordered (t, y, p, q), from H_p, H_q at alpha_t and the blocks of F(t).
pub fn phase_hessian(hp: &[f64], hq: &[f64], f: &DMatrix<f64>) -> Result<DMatrix<Complex64>> {
    let n = hp.len();
    let c = |m: DMatrix<f64>| m.map(|x| Complex64::new(x, 0.0));
    let (a, b, cc, d) = dynamics::split_blocks(f);
    let (a, b, cc, d) = (c(a), c(b), c(cc), c(d));
    let i = Complex64::i();
    let u = &a + &b * i;
    let v = &cc + &d * i;
    let m = &v * u.clone().try_inverse().ok_or(Error::SingularU { t: f64::NAN, det: 0.0 })?;
    let id = DMatrix::<Complex64>::identity(n, n);
    let hpv = DVector::from_iterator(n, hp.iter().map(|x| Complex64::new(*x, 0.0)));
    let hqv = DVector::from_iterator(n, hq.iter().map(|x| Complex64::new(*x, 0.0)));
    let mut h = DMatrix::<Complex64>::zeros(1 + 3 * n, 1 + 3 * n);
    let (ty, tp, tq) = (1, 1 + n, 1 + 2 * n);

    h[(0, 0)] = hpv.dot(&(&hqv + &m * &hpv));
    let col_y = -(&hqv + &m * &hpv);
    let col_p = -((d.transpose() - b.transpose() * &m) * &hpv);
    let col_q = -((cc.transpose() - a.transpose() * &m) * &hpv);
    for r in 0..n {
        h[(ty + r, 0)] = col_y[r];
        h[(0, ty + r)] = col_y[r];
        h[(tp + r, 0)] = col_p[r];
        h[(0, tp + r)] = col_p[r];
        h[(tq + r, 0)] = col_q[r];
        h[(0, tq + r)] = col_q[r];
    }
    let yy = &m + &id * i;
    let yp = &d - &m * &b - &id;
    let yq = &cc - &m * &a - &id * i;
    let pp = b.transpose() * &m * &b - d.transpose() * &b;
    let pq = b.transpose() * &m * &a - b.transpose() * &cc;
    let qq = a.transpose() * &m * &a - cc.transpose() * &a + &id * i;
    let mut put = |r0: usize, c0: usize, blk: &DMatrix<Complex64>| {
        for r in 0..n {
            for s in 0..n {
                h[(r0 + r, c0 + s)] = blk[(r, s)];
            }
        }
    };
    put(ty, ty, &yy);
    put(ty, tp, &yp);
    put(tp, ty, &yp.transpose());
    put(ty, tq, &yq);
    put(tq, ty, &yq.transpose());
    put(tp, tp, &pp);
    put(tp, tq, &pq);
    put(tq, tp, &pq.transpose());
    put(tq, tq, &qq);
    Ok(h)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HessianIdentityReport {
    pub k: i32,
    pub period: f64,
    /// max |H - H^T| / max |H|.
    pub symmetry_defect: f64,
    pub singular_values: Vec<f64>,
    pub null_dim: usize,
    /// |H v| / (|H| |v|) for the orbit tangent v = (0, H_p, -H_q, H_p).
    pub null_residual: f64,
    /// Distance of the numerical null direction from span{v}.
    pub null_alignment: f64,
    /// det(H + P) with P the orthogonal projector on the null space.
    pub restricted_det: Complex64,
    /// (-1)^{n-1} (-i)^n det(U/2)^{-1} |v|^2 det(P_gamma - I).
    pub rhs: Complex64,
    /// |restricted_det / rhs - 1|.
    pub relative_residual: f64,
    /// restricted_det / rhs.
    pub ratio: Complex64,
    pub im_phi_samples: usize,
    pub im_phi_violations: usize,
    pub im_phi_min: f64,
    /// max |2 Im Phi - |y - q|^2 - |U^{-1}(y - q_t)|^2| over the samples.
    pub im_phi_identity_error: f64,
    pub passed: bool,
}

/// Checks the determinant factorization of the phase Hessian at the start
/// point of `orbit` traversed `orbit.k` times, and the sign of Im Phi_E on
/// `samples` seeded points near the orbit.
pub fn hessian_identity_check<H: Hamiltonian>(
    system: &H,
    orbit: &PeriodicOrbit,
    samples: usize,
    seed: u64,
    opts: &FlowOptions,
) -> Result<HessianIdentityReport> {
    let n = system.dim();
    if n != 2 {
        return Err(Error::param("the Hessian identity check is set up for n = 2"));
    }
    let (poincare, _, _) = orbit.poincare_map()?;
    let z = orbit.start.to_vec();
    let t = orbit.period;
    let (_, f, _) = dynamics::flow_map_with_jacobian(system, &z, t, opts)?;
    let grad = system.gradient(&z);
    let (hq, hp) = (&grad[..n], &grad[n..]);
    let h = phase_hessian(hp, hq, &f)?;
    let hmax = h.iter().fold(0.0f64, |a, x| a.max(x.norm()));
    let symmetry_defect = (&h - h.transpose()).iter().fold(0.0f64, |a, x| a.max(x.norm())) / hmax;

    let dimh = 1 + 3 * n;
    let mut v = DVector::<f64>::zeros(dimh);
    for i in 0..n {
        v[1 + i] = hp[i];
        v[1 + n + i] = -hq[i];
        v[1 + 2 * n + i] = hp[i];
    }
    let vn = v.norm();
    let vc = v.map(|x| Complex64::new(x, 0.0));
    let null_residual = (&h * &vc).norm() / (hmax * vn);

    let svd = h.clone().svd(true, true);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let null_dim = sv.iter().filter(|s| **s <= 1e-6 * sv[0]).count();
    let vt = svd.v_t.expect("requested V^T");
    let imin = (0..dimh)
        .min_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]))
        .expect("nonempty");
    let w: DVector<Complex64> = vt.row(imin).transpose().map(|z| z.conj());
    let along = vc.dotc(&w) / Complex64::new(vn, 0.0);
    let null_alignment = (w.norm_squared() - along.norm_sqr()).max(0.0).sqrt();

    let vvt = &v * v.transpose();
    let proj = (&vvt / (vn * vn)).map(|x| Complex64::new(x, 0.0));
    let restricted_det = (&h + proj).determinant();

    let (a, b, _, _) = dynamics::split_blocks(&f);
    let u = (a.map(|x| Complex64::new(x, 0.0)) + b.map(|x| Complex64::new(0.0, x))) / Complex64::new(2.0, 0.0);
    let det_u2 = u.determinant();
    let det_pm = (poincare - DMatrix::<f64>::identity(poincare.nrows(), poincare.ncols())).determinant();
    let sign = if (n - 1) % 2 == 0 { 1.0 } else { -1.0 };
    let rhs = Complex64::new(sign, 0.0) * (-Complex64::i()).powi(n as i32) / det_u2 * (vn * vn * det_pm);
    let ratio = restricted_det / rhs;
    let relative_residual = (ratio - 1.0).norm();

    // Im Phi_E near the orbit
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let traj = dynamics::integrate(system, &orbit.start, orbit.t_star, &FlowOptions { samples: 64, ..*opts })?;
    let mut violations = 0;
    let mut im_min = f64::INFINITY;
    let mut id_err = 0.0f64;
    for _ in 0..samples {
        let base = &traj.states[rng.gen_range(0..traj.states.len())];
        let mut az = base.to_vec();
        for x in az.iter_mut() {
            *x += rng.gen_range(-0.2..0.2);
        }
        let alpha = PhaseSpacePoint::from_slice(&az);
        let ts = t + rng.gen_range(-0.3..0.3);
        let y: Vec<f64> = alpha.q.iter().map(|q| q + rng.gen_range(-0.5..0.5)).collect();
        let phi = trace_phase(system, ts, &y, &alpha, orbit.energy, opts)?;
        if phi.im < 0.0 {
            violations += 1;
        }
        im_min = im_min.min(phi.im);
        let (zt, fs, _) = dynamics::flow_map_with_jacobian(system, &az, ts, opts)?;
        let (a, b, _, _) = dynamics::split_blocks(&fs);
        let us = a.map(|x| Complex64::new(x, 0.0)) + b.map(|x| Complex64::new(0.0, x));
        let dq = DVector::from_iterator(n, (0..n).map(|i| Complex64::new(y[i] - zt[i], 0.0)));
        let w = us.lu().solve(&dq).ok_or(Error::SingularU { t: ts, det: 0.0 })?;
        let expected: f64 = (0..n).map(|i| (y[i] - alpha.q[i]).powi(2)).sum::<f64>() + w.norm_squared();
        id_err = id_err.max((2.0 * phi.im - expected).abs());
    }

    let passed = null_dim == 1 && null_residual <= 1e-6 && relative_residual <= 1e-6 && violations == 0;
    Ok(HessianIdentityReport {
        k: orbit.k,
        period: t,
        symmetry_defect,
        singular_values: sv,
        null_dim,
        null_residual,
        null_alignment,
        restricted_det,
        rhs,
        relative_residual,
        ratio,
        im_phi_samples: samples,
        im_phi_violations: violations,
        im_phi_min: im_min,
        im_phi_identity_error: id_err,
        passed,
    })
}

/// The mode-1 orbit (motion along q_1) of an anisotropic 2D oscillator at energy E,
/// traversed k times.
pub fn normal_mode_orbit<H: Hamiltonian>(system: H, energy: f64, t_guess: f64, k: i32, opts: &OrbitOptions) -> Result<PeriodicOrbit> {
    let shell = EnergyShell::new(system, energy, 0.5)?;
    let seed = shell.point_with_momentum_direction(&[0.0, 0.0], &[1.0, 0.0])?;
    let orbit = orbits::find_periodic_orbit(&shell, &seed, t_guess, opts)?;
    if k == 1 {
        Ok(orbit)
    } else {
        orbits::repetition(&shell, &orbit.start, orbit.t_star, k, opts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonians::{Builtin, Scaled};

    const GOLDEN: f64 = 1.618_033_988_749_895;

    #[test]
    fn det_branch_for_pure_imaginary() {
        for d in 1..4 {
            let p = DMatrix::<Complex64>::identity(d, d) * Complex64::i();
            let v = det_inv_sqrt_star(&p).unwrap();
            let e = Complex64::from_polar(1.0, -PI * d as f64 / 4.0);
            assert!((v - e).norm() < 1e-14);
        }
        let bad = DMatrix::from_element(1, 1, Complex64::new(-1.0, 0.0));
        assert!(det_inv_sqrt_star(&bad).is_err());
    }

    #[test]
    fn point_manifold_coefficients() {
        let f = fresnel_problem();
        f.validate(1).unwrap();
        let c0 = f.leading_coefficient(100.0).unwrap();
        assert!((c0 - Complex64::from_polar(1.0, PI / 4.0)).norm() < 1e-14);
        let s = saddle_problem();
        s.validate(1).unwrap();
        assert!((s.leading_coefficient(100.0).unwrap() - 1.0).norm() < 1e-14);
    }

    #[test]
    fn circle_coefficient_closed_form() {
        let c = circle_problem();
        c.validate(2).unwrap();
        let c0 = c.leading_coefficient(100.0).unwrap();
        let exact = Complex64::from_polar(8f64.powf(-0.5) * 2.0 * PI, PI / 4.0);
        assert!((c0 - exact).norm() < 1e-12);
    }

    #[test]
    fn zero_amplitude_gives_zero() {
        let mut f = fresnel_problem();
        f.amplitude = Arc::new(|_| 0.0);
        assert_eq!(f.quadrature_j(300.0, 1e-6).unwrap(), Complex64::new(0.0, 0.0));
        assert_eq!(f.leading_coefficient(300.0).unwrap(), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn fresnel_expansion_has_unit_exponent() {
        let r = verify_expansion(&fresnel_problem(), 1e-9).unwrap();
        assert!(r.accepted, "{r:?}");
        assert!((r.exponent - 1.0).abs() < 0.1);
    }

    #[test]
    fn odd_amplitude_integral_vanishes() {
        let f = odd_amplitude_problem();
        for w in [100.0, 1000.0] {
            assert!(f.quadrature_j(w, 1e-9).unwrap().norm() < 1e-12);
        }
        let r = verify_expansion(&vanishing_amplitude_problem(), 1e-9).unwrap();
        assert!(r.c0.iter().all(|c| c.norm() == 0.0));
        assert!((0.7..=1.3).contains(&r.exponent), "{r:?}");
    }

    #[test]
    fn single_frequency_is_rejected() {
        let mut f = fresnel_problem();
        f.omegas = vec![100.0];
        assert!(matches!(verify_expansion(&f, 1e-6), Err(Error::Fit(_))));
    }

    #[test]
    fn hessian_block_form_matches_finite_differences() {
        let sys = Builtin::Ho2dAniso { omega: GOLDEN };
        let orbit = normal_mode_orbit(sys, 1.0, PI, 1, &OrbitOptions::default()).unwrap();
        let fo = FlowOptions::default();
        let z = orbit.start.to_vec();
        let (_, f, _) = dynamics::flow_map_with_jacobian(&sys, &z, orbit.period, &fo).unwrap();
        let g = sys.gradient(&z);
        let h = phase_hessian(&g[2..], &g[..2], &f).unwrap();
        // phi as a function of x = (t, y, p, q)
        let phi = |x: &[f64]| {
            let alpha = PhaseSpacePoint::new(x[5..7].to_vec(), x[3..5].to_vec()).unwrap();
            trace_phase(&sys, x[0], &x[1..3], &alpha, 1.0, &fo).unwrap()
        };
        let mut x0 = vec![orbit.period];
        x0.extend_from_slice(&orbit.start.q);
        x0.extend_from_slice(&orbit.start.p);
        x0.extend_from_slice(&orbit.start.q);
        let step = 1e-3;
        for i in 0..7 {
            for j in 0..7 {
                let at = |si: f64, sj: f64| {
                    let mut x = x0.clone();
                    x[i] += si * step;
                    x[j] += sj * step;
                    phi(&x)
                };
                let fd = (at(1.0, 1.0) - at(1.0, -1.0) - at(-1.0, 1.0) + at(-1.0, -1.0)) / (4.0 * step * step);
                assert!((fd - h[(i, j)]).norm() < 1e-4, "entry ({i},{j}): fd {fd} vs {}", h[(i, j)]);
            }
        }
    }

    #[test]
    fn hessian_identity_on_normal_mode() {
        let sys = Builtin::Ho2dAniso { omega: GOLDEN };
        for k in [1, -1] {
            let orbit = normal_mode_orbit(sys, 1.0, PI, k, &OrbitOptions::default()).unwrap();
            let r = hessian_identity_check(&sys, &orbit, 200, 3, &FlowOptions::default()).unwrap();
            assert!(r.symmetry_defect < 1e-12);
            assert_eq!(r.null_dim, 1, "{r:?}");
            assert!(r.null_alignment < 1e-6);
            assert!(r.relative_residual < 1e-6, "{r:?}");
            assert_eq!(r.im_phi_violations, 0);
            assert!(r.im_phi_identity_error < 1e-8);
        }
    }

    #[test]
    fn identity_ratio_invariant_under_scaling() {
        let base = Builtin::Ho2dAniso { omega: GOLDEN };
        let o1 = normal_mode_orbit(base, 1.0, PI, 1, &OrbitOptions::default()).unwrap();
        let r1 = hessian_identity_check(&base, &o1, 10, 0, &FlowOptions::default()).unwrap();
        let scaled = Scaled { inner: base, factor: 3.0 };
        let shell = EnergyShell::new(scaled.clone(), 3.0, 0.5).unwrap();
        let seed = PhaseSpacePoint::new(vec![0.0, 0.0], vec![1.0, 0.0]).unwrap();
        let o2 = orbits::find_periodic_orbit(&shell, &seed, PI / 3.0, &OrbitOptions::default()).unwrap();
        let r2 = hessian_identity_check(&scaled, &o2, 10, 0, &FlowOptions::default()).unwrap();
        assert!((r1.ratio - r2.ratio).norm() < 1e-8, "{:?} vs {:?}", r1.ratio, r2.ratio);
    }
}
