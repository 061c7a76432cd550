//! Small dense linear-algebra helpers shared by the Gaussian, GP and EP code.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Relative jitter added on the first retry of a failed factorization.
pub const JITTER_START: f64 = 1e-10;
/// Number of jittered retries before giving up.
pub const JITTER_RETRIES: usize = 3;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn symmetrize_in_place(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Cholesky factorization without any regularization.
pub fn cholesky_strict(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    if m.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Cholesky::new(m.clone())
}

/// Cholesky factorization with the escalating diagonal jitter policy:
/// add `1e-10 * trace / dim` to the diagonal and retry with 10x escalation,
/// at most three times.
pub fn cholesky_jittered(m: &DMatrix<f64>, what: &'static str) -> Result<Cholesky<f64, Dyn>> {
    regularize(m)
        .map(|(_, c)| c)
        .ok_or(Error::CholeskyFailure(what))
}

/// Applies the jitter policy and returns the (possibly regularized) matrix
/// together with its factor, or `None` when every retry fails.
pub fn regularize(m: &DMatrix<f64>) -> Option<(DMatrix<f64>, Cholesky<f64, Dyn>)> {
    if let Some(c) = cholesky_strict(m) {
        return Some((m.clone(), c));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let n = m.nrows().max(1);
    let scale = (m.trace().abs() / n as f64).max(f64::MIN_POSITIVE);
    let mut jitter = JITTER_START * scale;
    for _ in 0..JITTER_RETRIES {
        let mut regularized = m.clone();
        for i in 0..m.nrows() {
            regularized[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(regularized.clone()) {
            return Some((regularized, c));
        }
        jitter *= 10.0;
    }
    None
}

pub fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    cholesky_strict(m).is_some()
}

/// `log|A|` from a Cholesky factor of `A`.
pub fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol
        .l_dirty()
        .diagonal()
        .iter()
        .map(|v| v.ln())
        .sum::<f64>()
}

/// Inverse of a symmetric positive-definite matrix, symmetrized.
pub fn spd_inverse(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    let chol = cholesky_jittered(m, what)?;
    let mut inv = chol.inverse();
    symmetrize_in_place(&mut inv);
    Ok(inv)
}

/// Solves `A x = b` for a general square matrix via LU.
pub fn solve_general(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    a.clone()
        .lu()
        .solve(b)
        .ok_or(Error::NonPositiveDefinite("singular linear system"))
}

pub fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn relative_asymmetry(m: &DMatrix<f64>) -> f64 {
    let norm = frobenius(m);
    if norm == 0.0 {
        0.0
    } else {
        frobenius(&(m - m.transpose())) / norm
    }
}

pub fn quad_form(chol: &Cholesky<f64, Dyn>, v: &DVector<f64>) -> f64 {
    let w = chol
        .l_dirty()
        .solve_lower_triangular(v)
        .expect("cholesky factor is nonsingular");
    w.dot(&w)
}
