//! Choosing the regularization level by cross-validation over held-out
//! untreated cells, with each of the three fold schemes.
//!
//! ```text
//! cargo run --release --example cross_validation
//! ```

use mcpanel::lowrank::{cross_validate, default_lambda_grid, CvConfig, CvScheme};
use mcpanel::simulate::{simulate_panel, SimConfig};

fn main() -> mcpanel::Result<()> {
    let sim = simulate_panel(&SimConfig {
        n_units: 40,
        n_periods: 20,
        rank: 3,
        factor_scale: 2.0,
        noise_scale: 0.5,
        seed: 3,
        ..Default::default()
    })?;
    let data = sim.panel.outcomes();
    let observed = sim.panel.mask().untreated();
    let grid = default_lambda_grid(data, &observed, 12, 1e-3)?;

    for scheme in [
        CvScheme::ObservedKfold,
        CvScheme::MissingFraction,
        CvScheme::PrePeriodHoldout,
    ] {
        let report = cross_validate(
            data,
            &observed,
            &CvConfig {
                lambda_grid: grid.clone(),
                scheme,
                seed: 11,
                ..Default::default()
            },
        )?;
        println!("{scheme:?}: chosen lambda {:.4}", report.chosen_lambda);
        for (l, e) in report.lambda_grid.iter().zip(&report.mean_errors) {
            let mark = if *l == report.chosen_lambda { " <" } else { "" };
            println!("    {l:>10.4}  {e:.5}{mark}");
        }
    }
    Ok(())
}
