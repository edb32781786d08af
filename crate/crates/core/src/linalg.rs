//! Small dense complex linear-algebra helpers on top of nalgebra.

use nalgebra::SymmetricEigen;

use crate::{CMatrix, CVector, Error, Result, C64};

/// `a^H b`.
#[inline]
pub fn dotc(a: &CVector, b: &CVector) -> C64 {
    a.dotc(b)
}

/// `||a||^2`.
#[inline]
pub fn norm_sqr(a: &CVector) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}

/// Replaces `m` by `(m + m^H) / 2`.
pub fn hermitize(m: &mut CMatrix) {
    let n = m.nrows();
    for i in 0..n {
        m[(i, i)] = C64::new(m[(i, i)].re, 0.0);
        for j in (i + 1)..n {
            let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
}

/// Largest absolute deviation from Hermitian symmetry.
pub fn hermitian_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn all_finite_vec(v: &CVector) -> bool {
    v.iter().all(|x| x.re.is_finite() && x.im.is_finite())
}

pub fn all_finite_mat(m: &CMatrix) -> bool {
    m.iter().all(|x| x.re.is_finite() && x.im.is_finite())
}

/// Eigenvalues (ascending) and eigenvectors of a Hermitian matrix.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(m.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Unit-norm eigenvector for the smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvector(m: &CMatrix) -> (f64, CVector) {
    let (values, vectors) = hermitian_eigen(m);
    (values[0], vectors.column(0).into_owned())
}

/// Eigenvalues of a general square complex matrix via the Schur form.
pub fn complex_eigenvalues(m: &CMatrix) -> Result<Vec<C64>> {
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::numerical("Schur decomposition did not converge"))?;
    let (_, t) = schur.unpack();
    Ok((0..t.nrows()).map(|i| t[(i, i)]).collect())
}

/// Inverse of a Hermitian positive-definite matrix.
pub fn hpd_inverse(m: &CMatrix) -> Result<CMatrix> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::numerical("matrix is not positive definite"))?;
    let mut inv = chol.inverse();
    hermitize(&mut inv);
    Ok(inv)
}

/// Solves `m x = b` for Hermitian positive-definite `m`.
pub fn hpd_solve(m: &CMatrix, b: &CVector) -> Result<CVector> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::numerical("matrix is not positive definite"))?;
    Ok(chol.solve(b))
}
