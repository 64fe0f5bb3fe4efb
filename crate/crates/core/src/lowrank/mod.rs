//! Nuclear-norm regularized low-rank matrix completion.
//!
//! [`svt`] is the proximal operator of `lambda * ||X||_*`; [`soft_impute`]
//! iterates it over an arbitrary set of observed cells; [`cross_validate`]
//! picks the regularization level from held-out observed cells.

mod cv;
mod impute;
mod svt;

pub use cv::{cross_validate, default_lambda_grid, lambda_max, CvConfig, CvReport, CvScheme};
pub use impute::{condition_report, objective, soft_impute, InitFill, MCFit, SoftImputeOptions};
pub use svt::{nuclear_norm, singular_values, svt, svt_with_spectrum, Thresholded};
