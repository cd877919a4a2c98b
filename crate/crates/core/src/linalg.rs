//! Thin dense linear-algebra layer over `faer`.

use faer::linalg::solvers::DenseSolveCore;
use faer::{Accum, Mat, MatRef, Par, Side};

use crate::error::{Error, Result};

pub type Matrix = Mat<f64>;

fn par() -> Par {
    Par::Seq
}

/// Eigenvalues ascending with matching eigenvector columns.
pub fn sym_eigen(a: MatRef<'_, f64>) -> Result<(Vec<f64>, Matrix)> {
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::LinearAlgebra(format!("eigendecomposition: {e:?}")))?;
    let s = evd.S();
    let vals = (0..a.nrows()).map(|i| s[i]).collect();
    Ok((vals, evd.U().to_owned()))
}

pub fn sym_eigenvalues(a: MatRef<'_, f64>) -> Result<Vec<f64>> {
    a.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::LinearAlgebra(format!("eigenvalues: {e:?}")))
}

/// Thin SVD `a = U diag(s) Vᵀ`, singular values descending.
pub fn svd(a: MatRef<'_, f64>) -> Result<(Matrix, Vec<f64>, Matrix)> {
    let f = a
        .svd()
        .map_err(|e| Error::LinearAlgebra(format!("svd: {e:?}")))?;
    let s = f.S();
    let k = a.nrows().min(a.ncols());
    let vals = (0..k).map(|i| s[i]).collect();
    Ok((f.U().to_owned(), vals, f.V().to_owned()))
}

pub fn singular_values(a: MatRef<'_, f64>) -> Result<Vec<f64>> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(Vec::new());
    }
    a.singular_values()
        .map_err(|e| Error::LinearAlgebra(format!("svd: {e:?}")))
}

/// Inverse of a symmetric positive definite matrix.
pub fn spd_inverse(a: MatRef<'_, f64>) -> Result<Matrix> {
    let llt = a
        .llt(Side::Lower)
        .map_err(|e| Error::LinearAlgebra(format!("cholesky: {e:?}")))?;
    let mut inv = llt.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

/// Solves `a x = b` for symmetric positive definite `a`.
pub fn spd_solve(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Result<Matrix> {
    use faer::linalg::solvers::Solve;
    let llt = a
        .llt(Side::Lower)
        .map_err(|e| Error::LinearAlgebra(format!("cholesky: {e:?}")))?;
    Ok(llt.solve(b))
}

pub fn symmetrize(a: &mut Matrix) {
    let n = a.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

/// `dst += alpha * lhs * rhs`.
pub fn gemm_add(dst: &mut Matrix, lhs: MatRef<'_, f64>, rhs: MatRef<'_, f64>, alpha: f64) {
    faer::linalg::matmul::matmul(dst.as_mut(), Accum::Add, lhs, rhs, alpha, par());
}

pub fn matmul(lhs: MatRef<'_, f64>, rhs: MatRef<'_, f64>) -> Matrix {
    let mut out = Mat::zeros(lhs.nrows(), rhs.ncols());
    faer::linalg::matmul::matmul(out.as_mut(), Accum::Replace, lhs, rhs, 1.0, par());
    out
}

pub fn mat_vec(a: MatRef<'_, f64>, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.nrows()];
    for (j, &xj) in x.iter().enumerate() {
        if xj == 0.0 {
            continue;
        }
        let col = a.col(j);
        for (i, o) in out.iter_mut().enumerate() {
            *o += col[i] * xj;
        }
    }
    out
}

pub fn mat_t_vec(a: MatRef<'_, f64>, x: &[f64]) -> Vec<f64> {
    (0..a.ncols())
        .map(|j| {
            let col = a.col(j);
            (0..a.nrows()).map(|i| col[i] * x[i]).sum()
        })
        .collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Spectral condition number of a symmetric positive semidefinite matrix.
pub fn spd_condition(a: MatRef<'_, f64>) -> Result<f64> {
    let ev = sym_eigenvalues(a)?;
    let lo = ev.first().copied().unwrap_or(1.0);
    let hi = ev.last().copied().unwrap_or(1.0);
    if lo <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(hi / lo)
}
