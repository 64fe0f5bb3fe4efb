//! Split-apply-combine matrix completion.
//!
//! Each split pairs one adoption cohort with one (or a few) focal periods.
//! The submatrix keeps the cohort and every unit still untreated at the focal
//! period, over the cohort's own pre-treatment columns plus the focal
//! columns. The only missing cells are the cohort's focal cells, so every
//! split has block missingness and a single soft-impute solve fills it.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lowrank::{soft_impute, SoftImputeOptions};
use crate::panel::Panel;

use super::grid::EffectGrid;

/// One cohort/focal-period subproblem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CySplit {
    /// Adoption column shared by the treated rows.
    pub cohort: usize,
    /// Focal columns, ascending. One per split when the group size is 1.
    pub focal: Vec<usize>,
    pub treated_rows: Vec<usize>,
    pub control_rows: Vec<usize>,
    /// Pre-treatment columns `0..cohort` followed by the focal columns.
    pub columns: Vec<usize>,
}

impl CySplit {
    /// Submatrix rows: treated rows first, then controls.
    pub fn rows(&self) -> Vec<usize> {
        self.treated_rows
            .iter()
            .chain(&self.control_rows)
            .copied()
            .collect()
    }

    /// Observed-cell grid of the submatrix (false exactly on treated rows ×
    /// focal columns).
    pub fn observed(&self) -> DMatrix<bool> {
        let n_treated = self.treated_rows.len();
        let n_pre = self.columns.len() - self.focal.len();
        DMatrix::from_fn(
            n_treated + self.control_rows.len(),
            self.columns.len(),
            |r, c| !(r < n_treated && c >= n_pre),
        )
    }
}

fn not_yet_treated(panel: &Panel, after: usize, exclude: Option<usize>) -> Vec<usize> {
    let adoption = panel.adoption();
    (0..panel.n_units())
        .filter(|&j| adoption[j].is_none_or(|g| g > after))
        .filter(|&j| exclude.is_none_or(|g| adoption[j] != Some(g)))
        .collect()
}

fn cohort_rows(panel: &Panel, cohort: usize) -> Vec<usize> {
    (0..panel.n_units())
        .filter(|&i| panel.adoption()[i] == Some(cohort))
        .collect()
}

/// Split for cohort `g` (adoption column) at focal column `t0 >= g`.
pub fn cy_split(panel: &Panel, t0: usize, g: usize) -> Result<CySplit> {
    split_for(panel, g, &[t0])
}

fn split_for(panel: &Panel, cohort: usize, focal: &[usize]) -> Result<CySplit> {
    let last = *focal
        .iter()
        .max()
        .ok_or_else(|| Error::EmptySplit("no focal period".into()))?;
    if focal.iter().any(|&t| t < cohort) || last >= panel.n_periods() {
        return Err(Error::EmptySplit(format!(
            "focal periods {focal:?} invalid for cohort {cohort}"
        )));
    }
    let treated_rows = cohort_rows(panel, cohort);
    if treated_rows.is_empty() {
        return Err(Error::EmptySplit(format!(
            "no unit adopts at column {cohort}"
        )));
    }
    let control_rows = not_yet_treated(panel, last, None);
    if control_rows.is_empty() {
        return Err(Error::EmptySplit(format!(
            "no not-yet-treated units at column {last}"
        )));
    }
    let mut focal = focal.to_vec();
    focal.sort_unstable();
    let columns = (0..cohort).chain(focal.iter().copied()).collect();
    Ok(CySplit {
        cohort,
        focal,
        treated_rows,
        control_rows,
        columns,
    })
}

/// Placebo split: the cohort's pre-period columns with column `p < g`
/// masked for the cohort; controls are other units untreated through `g - 1`.
fn placebo_split(panel: &Panel, cohort: usize, p: usize) -> Result<CySplit> {
    let treated_rows = cohort_rows(panel, cohort);
    if treated_rows.is_empty() {
        return Err(Error::EmptySplit(format!(
            "no unit adopts at column {cohort}"
        )));
    }
    if cohort == 0 || p >= cohort {
        return Err(Error::EmptySplit(format!(
            "no pre-period column {p} for cohort {cohort}"
        )));
    }
    let control_rows = not_yet_treated(panel, cohort - 1, Some(cohort));
    if control_rows.is_empty() {
        return Err(Error::EmptySplit(format!(
            "no comparison units untreated through column {}",
            cohort - 1
        )));
    }
    // Put the masked column last so the block layout matches regular splits.
    let columns = (0..cohort)
        .filter(|&c| c != p)
        .chain(std::iter::once(p))
        .collect();
    Ok(CySplit {
        cohort,
        focal: vec![p],
        treated_rows,
        control_rows,
        columns,
    })
}

/// Imputed values for the split's missing block. With `average`, the treated
/// rows are first collapsed into their mean row and a single row is returned.
fn impute_block(
    panel: &Panel,
    split: &CySplit,
    average: bool,
    lambda: f64,
    opts: &SoftImputeOptions,
) -> Result<DMatrix<f64>> {
    let y = panel.outcomes();
    let n_cols = split.columns.len();
    let n_focal = split.focal.len();
    let n_pre = n_cols - n_focal;
    let treated_block: Vec<Vec<f64>> = if average {
        let k = split.treated_rows.len() as f64;
        vec![split
            .columns
            .iter()
            .map(|&c| split.treated_rows.iter().map(|&i| y[(i, c)]).sum::<f64>() / k)
            .collect()]
    } else {
        split
            .treated_rows
            .iter()
            .map(|&i| split.columns.iter().map(|&c| y[(i, c)]).collect())
            .collect()
    };
    let n_treated = treated_block.len();
    let n_rows = n_treated + split.control_rows.len();
    let data = DMatrix::from_fn(n_rows, n_cols, |r, c| {
        if r < n_treated {
            treated_block[r][c]
        } else {
            y[(split.control_rows[r - n_treated], split.columns[c])]
        }
    });
    let observed = DMatrix::from_fn(n_rows, n_cols, |r, c| !(r < n_treated && c >= n_pre));
    let fit = soft_impute(&data, &observed, lambda, opts, None)?;
    Ok(fit
        .completed
        .view((0, n_pre), (n_treated, n_focal))
        .into_owned())
}

/// Options for the split-apply-combine estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CyOptions {
    /// Focal periods handled per solve. 1 gives one split per (cohort, period).
    pub group_size: usize,
    /// Compute placebo cells for event times `-horizon..-1` only. `None`
    /// computes every pre-period.
    pub placebo_horizon: Option<usize>,
    /// Skip placebo estimation entirely.
    pub placebos: bool,
    pub solver: SoftImputeOptions,
}

impl Default for CyOptions {
    fn default() -> Self {
        Self {
            group_size: 1,
            placebo_horizon: None,
            placebos: true,
            solver: SoftImputeOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
enum Work {
    Focal { cohort: usize, focal: Vec<usize> },
    Placebo { cohort: usize, column: usize },
}

/// Every split the estimator solves, in deterministic order.
fn work_items(panel: &Panel, opts: &CyOptions) -> Vec<Work> {
    let t = panel.n_periods();
    let mut items = Vec::new();
    for g in panel.cohorts() {
        let focal: Vec<usize> = (g..t).collect();
        for chunk in focal.chunks(opts.group_size.max(1)) {
            items.push(Work::Focal {
                cohort: g,
                focal: chunk.to_vec(),
            });
        }
        if opts.placebos {
            let first = opts.placebo_horizon.map_or(0, |h| g.saturating_sub(h));
            for p in first..g {
                items.push(Work::Placebo {
                    cohort: g,
                    column: p,
                });
            }
        }
    }
    items
}

fn is_inestimable(e: &Error) -> bool {
    matches!(e, Error::EmptySplit(_) | Error::RankDeficient { .. })
}

/// Shared driver for the per-unit and cohort-averaged variants.
fn estimate_splits(
    panel: &Panel,
    lambda: f64,
    opts: &CyOptions,
    average: bool,
    tag: &str,
) -> Result<EffectGrid> {
    if opts.group_size == 0 {
        return Err(Error::InvalidConfig("group_size must be >= 1".into()));
    }
    let items = work_items(panel, opts);
    let results: Vec<Result<(CySplit, DMatrix<f64>)>> = items
        .par_iter()
        .map(|w| {
            let split = match w {
                Work::Focal { cohort, focal } => split_for(panel, *cohort, focal)?,
                Work::Placebo { cohort, column } => placebo_split(panel, *cohort, *column)?,
            };
            let block = impute_block(panel, &split, average, lambda, &opts.solver)?;
            Ok((split, block))
        })
        .collect();

    let y = panel.outcomes();
    let mut grid = EffectGrid::new(panel, tag, Some(lambda));
    for (w, res) in items.iter().zip(results) {
        match res {
            Ok((split, block)) => {
                for (r, &i) in split.treated_rows.iter().enumerate() {
                    let row = if average { 0 } else { r };
                    for (k, &t) in split.focal.iter().enumerate() {
                        grid.insert(i, t, y[(i, t)] - block[(row, k)])?;
                    }
                }
            }
            Err(e) if is_inestimable(&e) => {
                let (cohort, cells) = match w {
                    Work::Focal { cohort, focal } => (*cohort, focal.clone()),
                    Work::Placebo { cohort, column } => (*cohort, vec![*column]),
                };
                for i in cohort_rows(panel, cohort) {
                    for &t in &cells {
                        grid.mark_inestimable(i, t, e.to_string())?;
                    }
                }
            }
            Err(e) => return Err(e),
        }
    }
    Ok(grid)
}

/// Per-unit split-apply-combine matrix completion estimates for every
/// treated cell, plus leave-column-out placebo estimates in the pre-periods.
///
/// Splits without not-yet-treated comparison units are reported through
/// [`EffectGrid::inestimable`].
pub fn cy_estimate(panel: &Panel, lambda: f64, opts: &CyOptions, tag: &str) -> Result<EffectGrid> {
    estimate_splits(panel, lambda, opts, false, tag)
}

/// Cohort ATT at focal column `t0` from the averaged-row ("combine, then
/// apply") variant: the cohort's mean outcome minus the imputed focal cell of
/// its mean row.
pub fn combine_apply_estimate(
    panel: &Panel,
    lambda: f64,
    t0: usize,
    g: usize,
    opts: &SoftImputeOptions,
) -> Result<f64> {
    let split = cy_split(panel, t0, g)?;
    let block = impute_block(panel, &split, true, lambda, opts)?;
    let y = panel.outcomes();
    let mean_obs = split.treated_rows.iter().map(|&i| y[(i, t0)]).sum::<f64>()
        / split.treated_rows.len() as f64;
    Ok(mean_obs - block[(0, 0)])
}

/// Combine-apply estimates for every treated cell. Each cohort member gets
/// its own outcome minus the cohort-level counterfactual, so cohort averages
/// equal [`combine_apply_estimate`].
pub fn combine_apply_grid(
    panel: &Panel,
    lambda: f64,
    opts: &CyOptions,
    tag: &str,
) -> Result<EffectGrid> {
    estimate_splits(panel, lambda, opts, true, tag)
}
