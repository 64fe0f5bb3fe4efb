use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::svt::{nuclear_norm, svt_with_spectrum};
use crate::error::{Error, Result};

/// Starting values for the unobserved cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitFill {
    /// Suited to data with fixed effects already removed.
    Zeros,
    /// Mean of the observed cells in the same column; suited to levels data.
    ColumnMeans,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SoftImputeOptions {
    /// Stop once the relative Frobenius change between iterates drops below this.
    pub tol: f64,
    pub max_iter: usize,
    pub init: InitFill,
}

impl Default for SoftImputeOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iter: 2_000,
            init: InitFill::ColumnMeans,
        }
    }
}

/// A completed matrix and its solver record.
#[derive(Debug, Clone)]
pub struct MCFit {
    pub completed: DMatrix<f64>,
    /// Singular values of `completed`, non-increasing.
    pub singular_values: Vec<f64>,
    pub lambda: f64,
    pub iterations: usize,
    pub final_delta: f64,
    pub converged: bool,
    /// Penalized objective after each iteration.
    pub objective: Vec<f64>,
}

impl MCFit {
    pub fn rank(&self) -> usize {
        self.singular_values.iter().filter(|&&s| s > 0.0).count()
    }

    pub fn nuclear_norm(&self) -> f64 {
        self.singular_values.iter().sum()
    }
}

/// `0.5 ||P_obs(X - data)||_F^2 + lambda ||X||_*`.
pub fn objective(
    data: &DMatrix<f64>,
    observed: &DMatrix<bool>,
    x: &DMatrix<f64>,
    lambda: f64,
) -> Result<f64> {
    Ok(fit_term(data, observed, x) + lambda * nuclear_norm(x)?)
}

fn fit_term(data: &DMatrix<f64>, observed: &DMatrix<bool>, x: &DMatrix<f64>) -> f64 {
    0.5 * data
        .iter()
        .zip(x.iter())
        .zip(observed.iter())
        .filter(|(_, &o)| o)
        .map(|((d, v), _)| (d - v) * (d - v))
        .sum::<f64>()
}

pub(crate) fn check_coverage(observed: &DMatrix<bool>) -> Result<()> {
    let (n, t) = observed.shape();
    for i in 0..n {
        if !(0..t).any(|c| observed[(i, c)]) {
            return Err(Error::RankDeficient {
                axis: "row",
                index: i,
            });
        }
    }
    for c in 0..t {
        if !(0..n).any(|i| observed[(i, c)]) {
            return Err(Error::RankDeficient {
                axis: "column",
                index: c,
            });
        }
    }
    Ok(())
}

fn initial_fill(data: &DMatrix<f64>, observed: &DMatrix<bool>, fill: InitFill) -> DMatrix<f64> {
    let (n, t) = data.shape();
    let mut out = data.clone();
    for c in 0..t {
        let value = match fill {
            InitFill::Zeros => 0.0,
            InitFill::ColumnMeans => {
                let (sum, count) = (0..n)
                    .filter(|&i| observed[(i, c)])
                    .fold((0.0, 0usize), |(s, k), i| (s + data[(i, c)], k + 1));
                if count == 0 {
                    0.0
                } else {
                    sum / count as f64
                }
            }
        };
        for i in 0..n {
            if !observed[(i, c)] {
                out[(i, c)] = value;
            }
        }
    }
    out
}

/// Soft-impute: repeat `X <- svt(P_obs(data) + P_miss(X), lambda)`.
///
/// `warm_start`, when given, supplies the starting values of the unobserved
/// cells; otherwise they come from `opts.init`. The penalized objective is
/// non-increasing across iterations. Hitting `max_iter` is not an error; the
/// fit is returned with `converged = false`.
pub fn soft_impute(
    data: &DMatrix<f64>,
    observed: &DMatrix<bool>,
    lambda: f64,
    opts: &SoftImputeOptions,
    warm_start: Option<&DMatrix<f64>>,
) -> Result<MCFit> {
    if data.shape() != observed.shape() {
        return Err(Error::DimensionMismatch(format!(
            "data {:?} vs observed {:?}",
            data.shape(),
            observed.shape()
        )));
    }
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "lambda must be >= 0, got {lambda}"
        )));
    }
    check_coverage(observed)?;

    let mut filled = match warm_start {
        Some(w) if w.shape() == data.shape() => {
            let mut f = data.clone();
            for (k, o) in observed.iter().enumerate() {
                if !o {
                    f[k] = w[k];
                }
            }
            f
        }
        Some(w) => {
            return Err(Error::DimensionMismatch(format!(
                "warm start {:?} vs data {:?}",
                w.shape(),
                data.shape()
            )))
        }
        None => initial_fill(data, observed, opts.init),
    };

    let mut previous = filled.clone();
    let mut objective_path = Vec::new();
    let mut final_delta = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    let mut spectrum = Vec::new();
    while iterations < opts.max_iter {
        iterations += 1;
        let step = svt_with_spectrum(&filled, lambda)?;
        let x = step.matrix;
        spectrum = step.singular_values;
        objective_path.push(fit_term(data, observed, &x) + lambda * spectrum.iter().sum::<f64>());

        let diff = (&x - &previous).norm();
        let base = previous.norm();
        final_delta = if base > 0.0 {
            diff / base
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        for (k, o) in observed.iter().enumerate() {
            if !o {
                filled[k] = x[k];
            }
        }
        previous = x;
        if final_delta < opts.tol {
            converged = true;
            break;
        }
    }

    Ok(MCFit {
        completed: previous,
        singular_values: spectrum,
        lambda,
        iterations,
        final_delta,
        converged,
        objective: objective_path,
    })
}

/// Ratio of the largest singular value to the smallest one above `threshold`.
///
/// With `threshold = None` the cut-off is `1e-8` times the largest value.
pub fn condition_report(fit: &MCFit, threshold: Option<f64>) -> Result<f64> {
    let top = fit.singular_values.iter().copied().fold(0.0, f64::max);
    let threshold = threshold.unwrap_or(1e-8 * top);
    let smallest = fit
        .singular_values
        .iter()
        .copied()
        .filter(|&s| s > threshold)
        .fold(f64::INFINITY, f64::min);
    if !smallest.is_finite() {
        return Err(Error::DegenerateFit { threshold });
    }
    Ok(top / smallest)
}
