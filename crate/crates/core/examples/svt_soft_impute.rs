//! Singular value thresholding and soft-impute on a small rank-1 matrix with
//! one hidden entry.
//!
//! ```text
//! cargo run --example svt_soft_impute
//! ```

use mcpanel::lowrank::{singular_values, soft_impute, svt, InitFill, SoftImputeOptions};
use nalgebra::DMatrix;

fn main() -> mcpanel::Result<()> {
    let u = [1.0, 2.0, -1.5, 0.5];
    let v = [2.0, -1.0, 0.5, 3.0];
    let truth = DMatrix::from_fn(4, 4, |i, j| u[i] * v[j]);

    let noisy = &truth + DMatrix::from_fn(4, 4, |i, j| 0.05 * ((i * 7 + j * 3) % 5) as f64 - 0.1);
    println!(
        "singular values of the noisy matrix: {:?}",
        singular_values(&noisy)?.as_slice()
    );
    let shrunk = svt(&noisy, 0.5)?;
    println!(
        "after thresholding at 0.5:           {:?}",
        singular_values(&shrunk)?.as_slice()
    );

    let mut observed = DMatrix::from_element(4, 4, true);
    observed[(2, 3)] = false;
    let opts = SoftImputeOptions {
        tol: 1e-12,
        max_iter: 100_000,
        init: InitFill::Zeros,
    };
    let fit = soft_impute(&truth, &observed, 1e-3, &opts, None)?;
    println!(
        "hidden entry: truth {:.4}, imputed {:.4} (rank {}, {} iterations, converged {})",
        truth[(2, 3)],
        fit.completed[(2, 3)],
        fit.rank(),
        fit.iterations,
        fit.converged
    );
    Ok(())
}
