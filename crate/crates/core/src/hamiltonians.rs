//! Classical Hamiltonians H(q, p) on R^{2n} and the builtin benchmark family.
//!
//! Phase-space vectors are stored as `[q_1..q_n, p_1..p_n]`. Builtins are of
//! mechanical form H = |p|^2 + V(q) (no factor 1/2), so that the matching
//! quantum operator is -hbar^2 Laplacian + V.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point alpha = (q, p) of phase space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpacePoint {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl PhaseSpacePoint {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        if q.is_empty() || q.len() != p.len() {
            return Err(Error::param(format!(
                "q and p must have equal nonzero length (got {} and {})",
                q.len(),
                p.len()
            )));
        }
        if q.iter().chain(&p).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("phase-space point".into()));
        }
        Ok(Self { q, p })
    }

    /// Splits a stacked `[q, p]` slice.
    pub fn from_slice(z: &[f64]) -> Self {
        let n = z.len() / 2;
        Self {
            q: z[..n].to_vec(),
            p: z[n..2 * n].to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut z = self.q.clone();
        z.extend_from_slice(&self.p);
        z
    }

    pub fn norm(&self) -> f64 {
        self.q.iter().chain(&self.p).map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn distance(&self, other: &PhaseSpacePoint) -> f64 {
        self.to_vec()
            .iter()
            .zip(other.to_vec())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

impl fmt::Display for PhaseSpacePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(q={:?}, p={:?})", self.q, self.p)
    }
}

/// A smooth classical Hamiltonian. `gradient` is ordered (H_q, H_p) and
/// `hessian` is the full 2n x 2n second-derivative matrix.
pub trait Hamiltonian: Send + Sync {
    fn dim(&self) -> usize;

    fn energy(&self, z: &[f64]) -> f64;

    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let h = default_step(z);
        finite_difference_derivatives(|x| self.energy(x), z, h)
            .expect("finite energy near the evaluation point")
            .0
    }

    fn hessian(&self, z: &[f64]) -> DMatrix<f64> {
        let h = 10.0 * default_step(z);
        finite_difference_derivatives(|x| self.energy(x), z, h)
            .expect("finite energy near the evaluation point")
            .1
    }

    /// V(q) when the system has the form |p|^2 + V(q).
    fn potential(&self, _q: &[f64]) -> Option<f64> {
        None
    }

    fn descriptor(&self) -> String;
}

impl<T: Hamiltonian + ?Sized> Hamiltonian for Arc<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn energy(&self, z: &[f64]) -> f64 {
        (**self).energy(z)
    }
    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        (**self).gradient(z)
    }
    fn hessian(&self, z: &[f64]) -> DMatrix<f64> {
        (**self).hessian(z)
    }
    fn potential(&self, q: &[f64]) -> Option<f64> {
        (**self).potential(q)
    }
    fn descriptor(&self) -> String {
        (**self).descriptor()
    }
}

/// Default finite-difference step, 1e-5 * max(1, |z|).
pub fn default_step(z: &[f64]) -> f64 {
    let norm = z.iter().map(|x| x * x).sum::<f64>().sqrt();
    1e-5 * norm.max(1.0)
}

/// Central-difference gradient and Hessian of `eval` at `z` with step `h`.
pub fn finite_difference_derivatives<F>(eval: F, z: &[f64], h: f64) -> Result<(Vec<f64>, DMatrix<f64>)>
where
    F: Fn(&[f64]) -> f64,
{
    if !(h > 0.0) {
        return Err(Error::param("finite-difference step must be positive"));
    }
    let d = z.len();
    let mut x = z.to_vec();
    let call = |x: &[f64]| -> Result<f64> {
        let v = eval(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite(format!("eval at {x:?}")))
        }
    };
    let f0 = call(&x)?;
    let mut grad = vec![0.0; d];
    let mut hess = DMatrix::zeros(d, d);
    for i in 0..d {
        x[i] = z[i] + h;
        let fp = call(&x)?;
        x[i] = z[i] - h;
        let fm = call(&x)?;
        x[i] = z[i];
        grad[i] = (fp - fm) / (2.0 * h);
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
    }
    for i in 0..d {
        for j in (i + 1)..d {
            let mut corner = |si: f64, sj: f64| -> Result<f64> {
                x[i] = z[i] + si * h;
                x[j] = z[j] + sj * h;
                let v = call(&x);
                x[i] = z[i];
                x[j] = z[j];
                v
            };
            let fpp = corner(1.0, 1.0)?;
            let fpm = corner(1.0, -1.0)?;
            let fmp = corner(-1.0, 1.0)?;
            let fmm = corner(-1.0, -1.0)?;
            let v = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    Ok((grad, hess))
}

/// Builtin benchmark systems, all of the form |p|^2 + V(q).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Builtin {
    /// H = p^2 + q^2.
    Ho1d,
    /// H = p^2 + q^4 + a q^2.
    Quartic1d { a: f64 },
    /// H = p1^2 + p2^2 + q1^2 + omega^2 q2^2.
    Ho2dAniso { omega: f64 },
    /// H = |p|^2 + |q|^2 + lambda (q1^2 q2 - q2^3 / 3) + mu |q|^4.
    HenonHeilesBounded { lambda: f64, mu: f64 },
}

/// Builds a builtin by family name. `reference_energy`, when given, is used
/// to reject parameters whose sublevel set at that energy is unbounded.
pub fn make_builtin(
    name: &str,
    params: &BTreeMap<String, f64>,
    reference_energy: Option<f64>,
) -> Result<Builtin> {
    let allowed: &[&str] = match name {
        "ho1d" => &[],
        "quartic1d" => &["a"],
        "ho2d_aniso" => &["omega"],
        "henon_heiles_bounded" => &["lambda", "mu"],
        other => return Err(Error::UnknownSystem(other.to_string())),
    };
    if let Some(key) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(Error::param(format!("`{key}` is not a parameter of {name}")));
    }
    let get = |key: &str, default: f64| params.get(key).copied().unwrap_or(default);
    let system = match name {
        "ho1d" => Builtin::Ho1d,
        "quartic1d" => Builtin::Quartic1d { a: get("a", 0.0) },
        "ho2d_aniso" => {
            let omega = get("omega", (1.0 + 5f64.sqrt()) / 2.0);
            if !(omega > 0.0) {
                return Err(Error::param(format!("omega must be positive (got {omega})")));
            }
            Builtin::Ho2dAniso { omega }
        }
        "henon_heiles_bounded" => {
            let lambda = get("lambda", 1.0);
            let mu = get("mu", 0.1);
            if mu < 0.0 {
                return Err(Error::param("mu < 0 gives an unbounded potential"));
            }
            if mu == 0.0 {
                // Without the quartic confinement the well only holds below the saddle.
                let saddle = if lambda == 0.0 { f64::INFINITY } else { 4.0 / (3.0 * lambda * lambda) };
                match reference_energy {
                    Some(e) if e < saddle => {}
                    _ => {
                        return Err(Error::param(format!(
                            "mu = 0 leaves the sublevel set unbounded above the saddle energy {saddle:.6}"
                        )))
                    }
                }
            }
            Builtin::HenonHeilesBounded { lambda, mu }
        }
        _ => unreachable!(),
    };
    for (k, v) in params {
        if !v.is_finite() {
            return Err(Error::param(format!("parameter `{k}` is not finite")));
        }
    }
    Ok(system)
}

impl Builtin {
    pub fn name(&self) -> &'static str {
        match self {
            Builtin::Ho1d => "ho1d",
            Builtin::Quartic1d { .. } => "quartic1d",
            Builtin::Ho2dAniso { .. } => "ho2d_aniso",
            Builtin::HenonHeilesBounded { .. } => "henon_heiles_bounded",
        }
    }

    pub fn v(&self, q: &[f64]) -> f64 {
        match *self {
            Builtin::Ho1d => q[0] * q[0],
            Builtin::Quartic1d { a } => q[0].powi(4) + a * q[0] * q[0],
            Builtin::Ho2dAniso { omega } => q[0] * q[0] + omega * omega * q[1] * q[1],
            Builtin::HenonHeilesBounded { lambda, mu } => {
                let r2 = q[0] * q[0] + q[1] * q[1];
                r2 + lambda * (q[0] * q[0] * q[1] - q[1].powi(3) / 3.0) + mu * r2 * r2
            }
        }
    }

    pub fn grad_v(&self, q: &[f64]) -> Vec<f64> {
        match *self {
            Builtin::Ho1d => vec![2.0 * q[0]],
            Builtin::Quartic1d { a } => vec![4.0 * q[0].powi(3) + 2.0 * a * q[0]],
            Builtin::Ho2dAniso { omega } => vec![2.0 * q[0], 2.0 * omega * omega * q[1]],
            Builtin::HenonHeilesBounded { lambda, mu } => {
                let r2 = q[0] * q[0] + q[1] * q[1];
                vec![
                    2.0 * q[0] + 2.0 * lambda * q[0] * q[1] + 4.0 * mu * r2 * q[0],
                    2.0 * q[1] + lambda * (q[0] * q[0] - q[1] * q[1]) + 4.0 * mu * r2 * q[1],
                ]
            }
        }
    }

    pub fn hess_v(&self, q: &[f64]) -> DMatrix<f64> {
        match *self {
            Builtin::Ho1d => DMatrix::from_element(1, 1, 2.0),
            Builtin::Quartic1d { a } => DMatrix::from_element(1, 1, 12.0 * q[0] * q[0] + 2.0 * a),
            Builtin::Ho2dAniso { omega } => {
                DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 2.0 * omega * omega])
            }
            Builtin::HenonHeilesBounded { lambda, mu } => {
                let r2 = q[0] * q[0] + q[1] * q[1];
                let v11 = 2.0 + 2.0 * lambda * q[1] + 4.0 * mu * (r2 + 2.0 * q[0] * q[0]);
                let v12 = 2.0 * lambda * q[0] + 8.0 * mu * q[0] * q[1];
                let v22 = 2.0 - 2.0 * lambda * q[1] + 4.0 * mu * (r2 + 2.0 * q[1] * q[1]);
                DMatrix::from_row_slice(2, 2, &[v11, v12, v12, v22])
            }
        }
    }

    /// Position of the potential minimum.
    pub fn potential_minimum(&self) -> Vec<f64> {
        vec![0.0; Hamiltonian::dim(self)]
    }
}

impl<T: Hamiltonian + ?Sized> Hamiltonian for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn energy(&self, z: &[f64]) -> f64 {
        (**self).energy(z)
    }
    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        (**self).gradient(z)
    }
    fn hessian(&self, z: &[f64]) -> DMatrix<f64> {
        (**self).hessian(z)
    }
    fn potential(&self, q: &[f64]) -> Option<f64> {
        (**self).potential(q)
    }
    fn descriptor(&self) -> String {
        (**self).descriptor()
    }
}

impl Hamiltonian for Builtin {
    fn dim(&self) -> usize {
        match self {
            Builtin::Ho1d | Builtin::Quartic1d { .. } => 1,
            Builtin::Ho2dAniso { .. } | Builtin::HenonHeilesBounded { .. } => 2,
        }
    }

    fn energy(&self, z: &[f64]) -> f64 {
        let n = Hamiltonian::dim(self);
        let p2: f64 = z[n..2 * n].iter().map(|p| p * p).sum();
        p2 + self.v(&z[..n])
    }

    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let n = Hamiltonian::dim(self);
        let mut g = self.grad_v(&z[..n]);
        g.extend(z[n..2 * n].iter().map(|p| 2.0 * p));
        g
    }

    fn hessian(&self, z: &[f64]) -> DMatrix<f64> {
        let n = Hamiltonian::dim(self);
        let mut h = DMatrix::zeros(2 * n, 2 * n);
        h.view_mut((0, 0), (n, n)).copy_from(&self.hess_v(&z[..n]));
        for i in 0..n {
            h[(n + i, n + i)] = 2.0;
        }
        h
    }

    fn potential(&self, q: &[f64]) -> Option<f64> {
        Some(self.v(q))
    }

    fn descriptor(&self) -> String {
        match *self {
            Builtin::Ho1d => "ho1d: H = p^2 + q^2".into(),
            Builtin::Quartic1d { a } => format!("quartic1d: H = p^2 + q^4 + {a} q^2"),
            Builtin::Ho2dAniso { omega } => {
                format!("ho2d_aniso: H = |p|^2 + q1^2 + {omega}^2 q2^2")
            }
            Builtin::HenonHeilesBounded { lambda, mu } => format!(
                "henon_heiles_bounded: H = |p|^2 + |q|^2 + {lambda} (q1^2 q2 - q2^3/3) + {mu} |q|^4"
            ),
        }
    }
}

/// c * H for a positive constant c.
#[derive(Debug, Clone)]
pub struct Scaled<H> {
    pub inner: H,
    pub factor: f64,
}

impl<H: Hamiltonian> Hamiltonian for Scaled<H> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn energy(&self, z: &[f64]) -> f64 {
        self.factor * self.inner.energy(z)
    }
    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        self.inner.gradient(z).into_iter().map(|g| self.factor * g).collect()
    }
    fn hessian(&self, z: &[f64]) -> DMatrix<f64> {
        self.inner.hessian(z) * self.factor
    }
    fn descriptor(&self) -> String {
        format!("{} x [{}]", self.factor, self.inner.descriptor())
    }
}

type EnergyFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// A user-supplied Hamiltonian; derivatives come from central differences.
pub struct CustomHamiltonian {
    dim: usize,
    eval: Box<EnergyFn>,
    step: Option<f64>,
    name: String,
}

impl CustomHamiltonian {
    pub fn new<F>(dim: usize, name: impl Into<String>, eval: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            dim,
            eval: Box::new(eval),
            step: None,
            name: name.into(),
        }
    }

    /// Overrides the default step 1e-5 * max(1, |z|).
    pub fn with_step(mut self, h: f64) -> Self {
        self.step = Some(h);
        self
    }

    fn step_at(&self, z: &[f64]) -> f64 {
        self.step.unwrap_or_else(|| default_step(z))
    }
}

impl Hamiltonian for CustomHamiltonian {
    fn dim(&self) -> usize {
        self.dim
    }
    fn energy(&self, z: &[f64]) -> f64 {
        (self.eval)(z)
    }
    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        finite_difference_derivatives(|x| (self.eval)(x), z, self.step_at(z))
            .expect("finite energy near the evaluation point")
            .0
    }
    fn hessian(&self, z: &[f64]) -> DMatrix<f64> {
        finite_difference_derivatives(|x| (self.eval)(x), z, 10.0 * self.step_at(z))
            .expect("finite energy near the evaluation point")
            .1
    }
    fn descriptor(&self) -> String {
        self.name.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(kv: &[(&str, f64)]) -> BTreeMap<String, f64> {
        kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    fn all_builtins() -> Vec<Builtin> {
        vec![
            Builtin::Ho1d,
            Builtin::Quartic1d { a: 0.5 },
            Builtin::Ho2dAniso { omega: 1.6180339887 },
            Builtin::HenonHeilesBounded { lambda: 1.0, mu: 0.1 },
        ]
    }

    #[test]
    fn ho1d_values() {
        let h = make_builtin("ho1d", &params(&[]), None).unwrap();
        assert_eq!(h.energy(&[1.0, 0.0]), 1.0);
        assert_eq!(h.gradient(&[1.0, 0.0]), vec![2.0, 0.0]);
    }

    #[test]
    fn ho2d_energy_on_mode_axis() {
        let h = make_builtin("ho2d_aniso", &params(&[("omega", 1.6180339887)]), None).unwrap();
        assert_eq!(h.energy(&[1.0, 0.0, 0.0, 0.0]), 1.0);
    }

    #[test]
    fn quartic_hessian_by_hand_and_by_differences() {
        let h = make_builtin("quartic1d", &params(&[("a", 0.0)]), None).unwrap();
        let z = [1.0, 1.0];
        assert_eq!(h.energy(&z), 2.0);
        let hess = h.hessian(&z);
        assert_eq!(hess, DMatrix::from_row_slice(2, 2, &[12.0, 0.0, 0.0, 2.0]));
        let (_, fd) = finite_difference_derivatives(|x| h.energy(x), &z, 1e-4).unwrap();
        assert!((fd - hess).amax() < 1e-6);
    }

    #[test]
    fn builtin_errors() {
        assert!(matches!(
            make_builtin("nope", &params(&[]), None),
            Err(Error::UnknownSystem(_))
        ));
        assert!(make_builtin("ho2d_aniso", &params(&[("omega", 0.0)]), None).is_err());
        assert!(make_builtin("ho2d_aniso", &params(&[("omega", -1.0)]), None).is_err());
        assert!(make_builtin("henon_heiles_bounded", &params(&[("mu", -0.1)]), None).is_err());
        assert!(make_builtin("henon_heiles_bounded", &params(&[("mu", 0.0)]), Some(5.0)).is_err());
        assert!(make_builtin("henon_heiles_bounded", &params(&[("mu", 0.0)]), Some(0.5)).is_ok());
        assert!(make_builtin("ho1d", &params(&[("omega", 1.0)]), None).is_err());
    }

    #[test]
    fn fd_of_ho1d_gradient() {
        let h = Builtin::Ho1d;
        let (g, _) = finite_difference_derivatives(|x| h.energy(x), &[1.0, 0.0], 1e-5).unwrap();
        assert!((g[0] - 2.0).abs() <= 1e-8);
        assert!(g[1].abs() <= 1e-8);
    }

    #[test]
    fn fd_of_constant_is_zero() {
        let (g, h) = finite_difference_derivatives(|_| 3.5, &[0.3, -0.2, 1.0, 2.0], 1e-5).unwrap();
        assert!(g.iter().all(|&x| x == 0.0));
        assert!(h.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn fd_of_quadratic_form_recovers_matrix() {
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, -1.0]);
        let f = |x: &[f64]| {
            let v = nalgebra::DVector::from_column_slice(x);
            0.5 * (v.transpose() * &s * v)[(0, 0)]
        };
        let (_, h) = finite_difference_derivatives(f, &[0.7, -0.4], 1e-4).unwrap();
        assert!((h - &s).amax() < 1e-7);
    }

    #[test]
    fn fd_rejects_nonfinite_stencil() {
        let r = finite_difference_derivatives(|x| 1.0 / x[0], &[0.0, 1.0], 1e-5);
        assert!(matches!(r, Err(Error::NonFinite(_))));
        assert!(finite_difference_derivatives(|x| x[0], &[0.0], 0.0).is_err());
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for sys in all_builtins() {
            let d = 2 * Hamiltonian::dim(&sys);
            for _ in 0..100 {
                let z: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.5..1.5)).collect();
                let (g_fd, _) = finite_difference_derivatives(|x| sys.energy(x), &z, 1e-5).unwrap();
                let (_, h_fd) = finite_difference_derivatives(|x| sys.energy(x), &z, 1e-4).unwrap();
                let g = sys.gradient(&z);
                let h = sys.hessian(&z);
                let gscale = g.iter().fold(1.0f64, |m, x| m.max(x.abs()));
                for (a, b) in g.iter().zip(&g_fd) {
                    assert!((a - b).abs() <= 1e-5 * gscale, "{} grad {a} vs {b}", sys.name());
                }
                let hscale = h.amax().max(1.0);
                assert!((&h - &h_fd).amax() <= 1e-5 * hscale, "{} hessian", sys.name());
                assert!((&h - h.transpose()).amax() <= 1e-10 * hscale);
            }
        }
    }

    #[test]
    fn harmonic_hessians_are_constant() {
        for sys in [Builtin::Ho1d, Builtin::Ho2dAniso { omega: 1.3 }] {
            let d = 2 * Hamiltonian::dim(&sys);
            let h0 = sys.hessian(&vec![0.0; d]);
            let h1 = sys.hessian(&vec![0.9; d]);
            assert_eq!(h0, h1);
        }
    }

    #[test]
    fn custom_system_uses_finite_differences() {
        let c = CustomHamiltonian::new(1, "custom ho", |z| z[0] * z[0] + z[1] * z[1]);
        let g = c.gradient(&[1.0, 0.5]);
        assert_relative_eq!(g[0], 2.0, epsilon = 1e-8);
        assert_relative_eq!(g[1], 1.0, epsilon = 1e-8);
        let h = c.hessian(&[1.0, 0.5]);
        assert_relative_eq!(h[(0, 0)], 2.0, epsilon = 1e-5);
        assert!(c.potential(&[0.0]).is_none());
    }

    #[test]
    fn phase_space_point_validation() {
        assert!(PhaseSpacePoint::new(vec![], vec![]).is_err());
        assert!(PhaseSpacePoint::new(vec![1.0], vec![1.0, 2.0]).is_err());
        assert!(PhaseSpacePoint::new(vec![f64::NAN], vec![1.0]).is_err());
        let a = PhaseSpacePoint::new(vec![1.0, 2.0], vec![3.0, 4.0]).unwrap();
        assert_eq!(a.to_vec(), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(PhaseSpacePoint::from_slice(&a.to_vec()), a);
    }
}
