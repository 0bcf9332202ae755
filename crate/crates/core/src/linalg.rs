//! Small dense complex linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

/// Dense complex matrix.
pub type CMat = DMatrix<Complex64>;
/// Dense complex column vector.
pub type CVec = DVector<Complex64>;

/// Complex zero.
pub const C0: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Real scalar as a complex number.
#[inline]
pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Hermitian part `(X + Xᴴ)/2`.
pub fn hermitian_part(x: &CMat) -> CMat {
    (x + x.adjoint()) * c(0.5)
}

/// Largest absolute entry of `X − Xᴴ`.
pub fn max_asymmetry(x: &CMat) -> f64 {
    let d = x - x.adjoint();
    d.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// Matrix trace.
pub fn trace(x: &CMat) -> Complex64 {
    x.diagonal().iter().sum()
}

/// Real parts of the diagonal.
pub fn diag_re(x: &CMat) -> Vec<f64> {
    x.diagonal().iter().map(|v| v.re).collect()
}

/// Diagonal matrix from real entries.
pub fn diag_from(d: &[f64]) -> CMat {
    CMat::from_diagonal(&CVec::from_iterator(d.len(), d.iter().map(|&v| c(v))))
}

/// Keep only the diagonal of `x`.
pub fn diag_part(x: &CMat) -> CMat {
    CMat::from_diagonal(&x.diagonal())
}

/// Scale rows by a real diagonal: `diag(d)·X`.
pub fn scale_rows(d: &[f64], x: &CMat) -> CMat {
    let mut y = x.clone();
    for (i, &s) in d.iter().enumerate() {
        y.row_mut(i).scale_mut(s);
    }
    y
}

/// Scale columns by a real diagonal: `X·diag(d)`.
pub fn scale_cols(x: &CMat, d: &[f64]) -> CMat {
    let mut y = x.clone();
    for (j, &s) in d.iter().enumerate() {
        y.column_mut(j).scale_mut(s);
    }
    y
}

/// Inverse of a Hermitian positive-definite matrix through its Cholesky factor.
pub fn hermitian_inverse(x: &CMat) -> Result<CMat> {
    let n = x.nrows();
    let chol = hermitian_part(x)
        .cholesky()
        .ok_or_else(|| Error::Numerical(format!("{n}x{n} matrix is not positive definite")))?;
    Ok(hermitian_part(&chol.inverse()))
}

/// Solve `X·z = b` for Hermitian positive-definite `X`.
pub fn hermitian_solve(x: &CMat, b: &CVec) -> Result<CVec> {
    let n = x.nrows();
    let chol = hermitian_part(x)
        .cholesky()
        .ok_or_else(|| Error::Numerical(format!("{n}x{n} matrix is not positive definite")))?;
    Ok(chol.solve(b))
}

/// Ratio of extreme eigenvalues of a Hermitian matrix.
pub fn condition_number(x: &CMat) -> f64 {
    let ev = hermitian_part(x).symmetric_eigenvalues();
    let max = ev.iter().cloned().fold(f64::MIN, f64::max);
    let min = ev.iter().cloned().fold(f64::MAX, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Principal square root of a Hermitian PSD matrix; small negative
/// eigenvalues produced by rounding are clamped to zero.
pub fn hermitian_sqrt(x: &CMat) -> CMat {
    let eig = hermitian_part(x).symmetric_eigen();
    let n = x.nrows();
    let mut out = CMat::zeros(n, n);
    for (j, &lam) in eig.eigenvalues.iter().enumerate() {
        let s = lam.max(0.0).sqrt();
        if s == 0.0 {
            continue;
        }
        let v = eig.eigenvectors.column(j);
        out += (&v * v.adjoint()) * c(s);
    }
    out
}

/// Sorted eigenvalues of a Hermitian matrix.
pub fn hermitian_eigenvalues(x: &CMat) -> Vec<f64> {
    let mut ev: Vec<f64> = hermitian_part(x).symmetric_eigenvalues().iter().cloned().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Draw from the circularly symmetric complex normal with the given variance.
#[inline]
pub fn cn<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (0.5 * variance).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// Unit-modulus phasor with phase uniform on `[−π, π)`.
#[inline]
pub fn uniform_phasor<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let phi: f64 = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    Complex64::from_polar(1.0, phi)
}

/// Quadratic form `aᴴ X a`.
pub fn quad_form(a: &CVec, x: &CMat) -> Complex64 {
    a.dotc(&(x * a))
}
