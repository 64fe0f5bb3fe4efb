use nalgebra::{DMatrix, SVD};

use crate::error::{Error, Result};

const SVD_MAX_ITER: usize = 100_000;

fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            if !m[(r, c)].is_finite() {
                return Err(Error::NonFinite { row: r, col: c });
            }
        }
    }
    Ok(())
}

fn decompose(m: &DMatrix<f64>, vectors: bool) -> Result<SVD<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    check_finite(m)?;
    SVD::try_new(m.clone(), vectors, vectors, f64::EPSILON, SVD_MAX_ITER).ok_or(Error::SvdFailure)
}

/// Singular values in non-increasing order.
pub fn singular_values(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    let mut s: Vec<f64> = decompose(m, false)?
        .singular_values
        .iter()
        .copied()
        .collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

pub fn nuclear_norm(m: &DMatrix<f64>) -> Result<f64> {
    Ok(singular_values(m)?.iter().sum())
}

/// Result of singular value soft-thresholding.
#[derive(Debug, Clone)]
pub struct Thresholded {
    pub matrix: DMatrix<f64>,
    /// Thresholded singular values, non-increasing.
    pub singular_values: Vec<f64>,
}

/// `U diag(max(s - lambda, 0)) V^T`: the unique minimizer of
/// `0.5 ||X - M||_F^2 + lambda ||X||_*`.
pub fn svt(m: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    Ok(svt_with_spectrum(m, lambda)?.matrix)
}

/// Like [`svt`], also returning the shrunk spectrum.
pub fn svt_with_spectrum(m: &DMatrix<f64>, lambda: f64) -> Result<Thresholded> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "lambda must be a finite value >= 0, got {lambda}"
        )));
    }
    let svd = decompose(m, true)?;
    let u = svd.u.as_ref().ok_or(Error::SvdFailure)?;
    let v_t = svd.v_t.as_ref().ok_or(Error::SvdFailure)?;
    let (nrows, ncols) = m.shape();
    let mut out = DMatrix::<f64>::zeros(nrows, ncols);
    let mut kept = Vec::with_capacity(svd.singular_values.len());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        let shrunk = (s - lambda).max(0.0);
        kept.push(shrunk);
        if shrunk > 0.0 {
            out.ger(shrunk, &u.column(k), &v_t.row(k).transpose(), 1.0);
        }
    }
    kept.sort_by(|a, b| b.total_cmp(a));
    Ok(Thresholded {
        matrix: out,
        singular_values: kept,
    })
}
