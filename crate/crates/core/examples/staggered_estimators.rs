//! Full-matrix completion, the per-cohort split estimator, its cohort-average
//! variant and not-yet-treated DiD on one simulated staggered panel whose
//! adoption depends on a latent factor.
//!
//! ```text
//! cargo run --release --example staggered_estimators
//! ```

use mcpanel::aggregate::{aggregate_event, mean_post_effect, PostWeighting};
use mcpanel::estimators::{fit_twfe_pooled, EstimatorKind, EstimatorSpec};
use mcpanel::lowrank::lambda_max;
use mcpanel::simulate::{simulate_panel, AdoptionMechanism, EffectPath, SimConfig};

fn main() -> mcpanel::Result<()> {
    let sim = simulate_panel(&SimConfig {
        n_units: 40,
        n_periods: 20,
        noise_scale: 0.1,
        adoption_mechanism: AdoptionMechanism::FactorSelected,
        treatment_effect: EffectPath::Ramp {
            start: 1.0,
            slope: 0.25,
        },
        treated_fraction: 0.4,
        min_pre: 8,
        seed: 2,
        ..Default::default()
    })?;
    let panel = &sim.panel;
    let lambda = 0.01 * lambda_max(panel.outcomes(), &panel.mask().untreated())?;

    let mask = panel.mask();
    let truth: f64 = (0..panel.n_units())
        .flat_map(|i| (0..panel.n_periods()).map(move |t| (i, t)))
        .filter(|&(i, t)| mask.is_treated(i, t))
        .map(|(i, t)| sim.true_effects[(i, t)])
        .sum::<f64>()
        / mask.n_treated() as f64;
    println!("true average effect on treated cells: {truth:.3}");

    for kind in [
        EstimatorKind::FullMc,
        EstimatorKind::Cy,
        EstimatorKind::CombineApply,
        EstimatorKind::Did,
    ] {
        let mut spec = EstimatorSpec::new(kind, lambda, false);
        spec.cy.placebo_horizon = Some(5);
        let grid = spec.estimate(panel)?;
        let cells: Vec<f64> = grid.treated().map(|e| e.estimate).collect();
        let study = aggregate_event(&grid, -5, 5)?;
        println!(
            "{:<14} cell average {:>7.3}   event-time average {:>7.3}   inestimable {}",
            grid.estimator_tag(),
            cells.iter().sum::<f64>() / cells.len() as f64,
            mean_post_effect(&study, PostWeighting::PerEventTime)?,
            grid.inestimable().len()
        );
    }
    println!(
        "{:<14} pooled coefficient {:.3}",
        "twfe-pooled",
        fit_twfe_pooled(panel)?
    );
    Ok(())
}
