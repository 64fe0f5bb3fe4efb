use crate::error::Result;
use crate::lowrank::{soft_impute, MCFit, SoftImputeOptions};
use crate::panel::Panel;

use super::grid::EffectGrid;

/// Effects from completing the whole panel, plus the underlying fit.
#[derive(Debug, Clone)]
pub struct McEstimate {
    pub grid: EffectGrid,
    /// `None` when the panel has no treated units and nothing was fitted.
    pub fit: Option<MCFit>,
}

/// Matrix completion on the entire panel with untreated cells as the
/// observed set. Treated cells get `observed - completed`; pre-periods of
/// eventually-treated units get the same in-sample residual as placebos.
pub fn full_mc_estimate(
    panel: &Panel,
    lambda: f64,
    opts: &SoftImputeOptions,
    tag: &str,
) -> Result<McEstimate> {
    let mut grid = EffectGrid::new(panel, tag, Some(lambda));
    let treated = panel.treated_units();
    if treated.is_empty() {
        return Ok(McEstimate { grid, fit: None });
    }
    let mask = panel.mask();
    let fit = soft_impute(panel.outcomes(), &mask.untreated(), lambda, opts, None)?;
    let y = panel.outcomes();
    for i in treated {
        for t in 0..panel.n_periods() {
            grid.insert(i, t, y[(i, t)] - fit.completed[(i, t)])?;
        }
    }
    Ok(McEstimate {
        grid,
        fit: Some(fit),
    })
}
