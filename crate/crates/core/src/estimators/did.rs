use crate::error::{Error, Result};
use crate::panel::Panel;

use super::grid::EffectGrid;

fn mean_change(panel: &Panel, units: &[usize], t: usize, base: usize) -> f64 {
    let y = panel.outcomes();
    units.iter().map(|&j| y[(j, t)] - y[(j, base)]).sum::<f64>() / units.len() as f64
}

/// Split-apply-combine difference in differences with not-yet-treated
/// comparisons.
///
/// For a unit adopting at `g` the baseline is `g - 1`. A post cell `t >= g`
/// is compared with units still untreated at `t`; a placebo cell `t < g - 1`
/// with units untreated through `g - 1` outside the unit's own cohort.
pub fn did_estimate(panel: &Panel, tag: &str) -> Result<EffectGrid> {
    let mut grid = EffectGrid::new(panel, tag, None);
    let adoption = panel.adoption();
    let y = panel.outcomes();
    let untreated_after = |t: usize, exclude_cohort: Option<usize>| -> Vec<usize> {
        (0..panel.n_units())
            .filter(|&j| adoption[j].is_none_or(|gj| gj > t))
            .filter(|&j| exclude_cohort.is_none_or(|g| adoption[j] != Some(g)))
            .collect()
    };
    for i in panel.treated_units() {
        let g = adoption[i].expect("treated unit");
        if g == 0 {
            for t in 0..panel.n_periods() {
                grid.mark_inestimable(i, t, "no pre-treatment baseline period")?;
            }
            continue;
        }
        let base = g - 1;
        let placebo_controls = untreated_after(base, Some(g));
        for t in (0..panel.n_periods()).filter(|&t| t != base) {
            let controls = if t >= g {
                untreated_after(t, None)
            } else {
                placebo_controls.clone()
            };
            if controls.is_empty() {
                grid.mark_inestimable(i, t, "no not-yet-treated comparison units")?;
                continue;
            }
            let own = y[(i, t)] - y[(i, base)];
            grid.insert(i, t, own - mean_change(panel, &controls, t, base))?;
        }
    }
    Ok(grid)
}

/// Single coefficient on the treatment indicator from the pooled regression
/// `y = alpha_i + eta_t + tau * D + e` over every cell.
///
/// Under effect heterogeneity this coefficient need not be any convex
/// average of the cell-level effects; it is kept as a contrast to the
/// split-apply-combine estimators.
pub fn fit_twfe_pooled(panel: &Panel) -> Result<f64> {
    let mask = panel.mask();
    let (n, t) = (panel.n_units(), panel.n_periods());
    let d = mask.treated().map(|b| if b { 1.0 } else { 0.0 });
    let row_means: Vec<f64> = (0..n).map(|i| d.row(i).sum() / t as f64).collect();
    let col_means: Vec<f64> = (0..t).map(|c| d.column(c).sum() / n as f64).collect();
    let grand = d.sum() / (n * t) as f64;
    let y = panel.outcomes();
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..n {
        for c in 0..t {
            let resid = d[(i, c)] - row_means[i] - col_means[c] + grand;
            num += resid * y[(i, c)];
            den += resid * resid;
        }
    }
    if den <= 1e-12 * (n * t) as f64 {
        return Err(Error::Collinear(
            "treatment indicator is absorbed by the unit and period effects".into(),
        ));
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn canonical_two_by_two() {
        let y = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 5.0]);
        let p = Panel::from_matrix(y, vec![None, Some(1)]).unwrap();
        let g = did_estimate(&p, "did").unwrap();
        assert_eq!(g.get(1, 1).unwrap().estimate, 1.0);
        assert_eq!(fit_twfe_pooled(&p).unwrap(), 1.0);
    }

    #[test]
    fn additive_panel_has_zero_effects() {
        let y = DMatrix::from_fn(5, 6, |i, t| i as f64 * 3.0 + (t as f64).sin() * 10.0);
        let p = Panel::from_matrix(y, vec![Some(2), Some(3), Some(4), None, Some(2)]).unwrap();
        let g = did_estimate(&p, "did").unwrap();
        assert!(!g.is_empty());
        assert!(g.entries().all(|e| e.estimate.abs() < 1e-12));
        assert!(fit_twfe_pooled(&p).unwrap().abs() < 1e-12);
    }

    #[test]
    fn no_controls_is_inestimable() {
        let y = DMatrix::from_fn(2, 4, |i, t| (i + t) as f64);
        let p = Panel::from_matrix(y, vec![Some(1), Some(2)]).unwrap();
        let g = did_estimate(&p, "did").unwrap();
        // At t = 2, 3 nobody is untreated.
        assert!(g.inestimable().iter().any(|c| c.unit == 0 && c.period == 3));
        assert!(g.get(0, 1).is_some());
    }

    #[test]
    fn pooled_twfe_collinear_when_all_treated() {
        let y = DMatrix::from_element(2, 3, 1.0);
        let p = Panel::from_matrix(y, vec![Some(0), Some(0)]).unwrap();
        assert!(matches!(fit_twfe_pooled(&p), Err(Error::Collinear(_))));
    }
}
