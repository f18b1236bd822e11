//! Small dense linear-algebra helpers shared across modules: the symplectic
//! structure on R^{2n}, complex eigenvalues, and Gaussian integrals with
//! complex symmetric quadratic forms.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// J = [[0, I], [-I, 0]] with the (q, p) ordering.
pub fn symplectic_j(n: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        j[(i, n + i)] = 1.0;
        j[(n + i, i)] = -1.0;
    }
    j
}

/// sigma(a, b) = p_a . q_b - p_b . q_a for a = (q_a, p_a), b = (q_b, p_b).
pub fn symplectic_form(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    assert!(a.len() % 2 == 0);
    let n = a.len() / 2;
    (0..n).map(|i| a[n + i] * b[i] - b[n + i] * a[i]).sum()
}

/// Largest entry of |F^T J F - J|.
pub fn symplectic_defect(f: &DMatrix<f64>) -> f64 {
    assert!(f.is_square() && f.nrows() % 2 == 0, "F must be 2n x 2n");
    let j = symplectic_j(f.nrows() / 2);
    (f.transpose() * &j * f - j).amax()
}

pub fn to_complex(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|x| Complex64::new(x, 0.0))
}

/// A + iB for real A, B.
pub fn complexify(re: &DMatrix<f64>, im: &DMatrix<f64>) -> DMatrix<Complex64> {
    re.zip_map(im, Complex64::new)
}

/// Eigenvalues of a complex square matrix. Closed forms for n <= 2, complex
/// Schur decomposition otherwise.
pub fn complex_eigenvalues(m: &DMatrix<Complex64>) -> Vec<Complex64> {
    assert!(m.is_square());
    match m.nrows() {
        0 => vec![],
        1 => vec![m[(0, 0)]],
        2 => {
            let tr = m[(0, 0)] + m[(1, 1)];
            let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
            let disc = (tr * tr - 4.0 * det).sqrt();
            vec![(tr + disc) * 0.5, (tr - disc) * 0.5]
        }
        _ => {
            let schur = nalgebra::linalg::Schur::new(m.clone());
            let (_, t) = schur.unpack();
            (0..t.nrows()).map(|i| t[(i, i)]).collect()
        }
    }
}

/// Eigenvalues of a real square matrix (complex in general).
pub fn real_matrix_eigenvalues(m: &DMatrix<f64>) -> Vec<Complex64> {
    if m.nrows() == 0 {
        return vec![];
    }
    if m.nrows() <= 2 {
        return complex_eigenvalues(&to_complex(m));
    }
    m.complex_eigenvalues().iter().copied().collect()
}

/// Product of reciprocal square roots of the eigenvalues of `m`, each root
/// taken with positive real part. Fails if an eigenvalue lies on the closed
/// negative real axis (no root with positive real part exists).
pub fn inv_sqrt_det_right_half(m: &DMatrix<Complex64>) -> Result<Complex64> {
    let mut acc = Complex64::new(1.0, 0.0);
    for lambda in complex_eigenvalues(m) {
        if lambda.norm() == 0.0 || (lambda.im == 0.0 && lambda.re < 0.0) {
            return Err(Error::NotPositiveDefinite);
        }
        acc /= lambda.sqrt();
    }
    Ok(acc)
}

/// Integral over R^n of exp(-x.Qx/2 + L.x + c) for complex symmetric Q
/// with positive-definite real part.
pub fn gaussian_integral(
    q: &DMatrix<Complex64>,
    l: &DVector<Complex64>,
    c: Complex64,
) -> Result<Complex64> {
    let n = q.nrows();
    let re = q.map(|z| z.re);
    let re_sym = (&re + re.transpose()) * 0.5;
    if n > 0 && re_sym.cholesky().is_none() {
        return Err(Error::NotPositiveDefinite);
    }
    let inv = q.clone().try_inverse().ok_or(Error::NotPositiveDefinite)?;
    let quad = (l.transpose() * &inv * l)[(0, 0)];
    let pref = (2.0 * std::f64::consts::PI).powf(n as f64 / 2.0) * inv_sqrt_det_right_half(q)?;
    Ok(pref * (0.5 * quad + c).exp())
}

/// Shift `raw` (an angle in (-pi, pi]) by multiples of 2 pi so that it is as
/// close as possible to `reference`.
pub fn unwrap_near(reference: f64, raw: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    raw + two_pi * ((reference - raw) / two_pi).round()
}

/// Orthonormal basis of the (numerical) null space of `m`, using the right
/// singular vectors whose singular values fall below `rel_tol * sigma_max`.
pub fn null_space(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let ncols = m.ncols();
    if m.nrows() == 0 {
        return DMatrix::identity(ncols, ncols);
    }
    // Pad to a square matrix so the SVD returns a full set of right vectors.
    let rows = m.nrows().max(ncols);
    let mut padded = DMatrix::zeros(rows, ncols);
    padded.view_mut((0, 0), (m.nrows(), ncols)).copy_from(m);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let smax = svd.singular_values.max().max(f64::MIN_POSITIVE);
    let cols: Vec<DVector<f64>> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s <= rel_tol * smax)
        .map(|(i, _)| vt.row(i).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(ncols, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}
