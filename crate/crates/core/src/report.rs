//! Descriptive summary of an outcome panel.

use serde::Serialize;

use crate::error::Result;
use crate::panel::{filter_min_pretreatment, Panel};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnitRange {
    pub unit: String,
    pub min: f64,
    pub max: f64,
    pub range: f64,
    /// Period label of adoption, `None` if never treated.
    pub adoption: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DataReport {
    pub n_units: usize,
    pub n_periods: usize,
    pub first_period: i64,
    pub last_period: i64,
    pub units: Vec<UnitRange>,
    /// Mean of the within-unit max - min over all units.
    pub mean_range: f64,
    pub min_pre: Option<usize>,
    pub retained: Vec<String>,
    pub excluded: Vec<String>,
    /// Mean within-unit range over retained units only.
    pub mean_range_retained: f64,
    /// Earliest adoption label among retained units and who adopted then.
    pub first_adoption: Option<(i64, Vec<String>)>,
    pub last_adoption: Option<(i64, Vec<String>)>,
    /// Periods between the first and last retained adopters.
    pub adoption_span: Option<i64>,
}

fn unit_ranges(panel: &Panel) -> Vec<UnitRange> {
    let y = panel.outcomes();
    (0..panel.n_units())
        .map(|i| {
            let row = y.row(i);
            let (min, max) = (row.min(), row.max());
            UnitRange {
                unit: panel.unit_ids()[i].clone(),
                min,
                max,
                range: max - min,
                adoption: panel.adoption()[i].map(|g| panel.period_labels()[g]),
            }
        })
        .collect()
}

fn mean_of(ranges: &[UnitRange]) -> f64 {
    ranges.iter().map(|r| r.range).sum::<f64>() / ranges.len() as f64
}

fn adopters_at(ranges: &[UnitRange], label: i64) -> Vec<String> {
    ranges
        .iter()
        .filter(|r| r.adoption == Some(label))
        .map(|r| r.unit.clone())
        .collect()
}

/// Per-unit outcome ranges, adoption timing and (with `min_pre`) the
/// retained/excluded split used for estimation.
pub fn summarize_data(panel: &Panel, min_pre: Option<usize>) -> Result<DataReport> {
    let units = unit_ranges(panel);
    let (retained_panel, excluded) = match min_pre {
        Some(m) => {
            let f = filter_min_pretreatment(panel, m)?;
            (f.panel, f.excluded)
        }
        None => (panel.clone(), Vec::new()),
    };
    let retained_ranges = unit_ranges(&retained_panel);
    let adoptions: Vec<i64> = retained_ranges.iter().filter_map(|r| r.adoption).collect();
    let first = adoptions.iter().min().copied();
    let last = adoptions.iter().max().copied();
    let labels = panel.period_labels();
    Ok(DataReport {
        n_units: panel.n_units(),
        n_periods: panel.n_periods(),
        first_period: labels[0],
        last_period: labels[labels.len() - 1],
        mean_range: mean_of(&units),
        units,
        min_pre,
        retained: retained_panel.unit_ids().to_vec(),
        excluded,
        mean_range_retained: mean_of(&retained_ranges),
        first_adoption: first.map(|l| (l, adopters_at(&retained_ranges, l))),
        last_adoption: last.map(|l| (l, adopters_at(&retained_ranges, l))),
        adoption_span: first.zip(last).map(|(a, b)| b - a),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn constant_panel_has_zero_ranges() {
        let p = Panel::from_matrix(DMatrix::from_element(3, 4, 2.5), vec![None, Some(2), None])
            .unwrap();
        let r = summarize_data(&p, None).unwrap();
        assert!(r.units.iter().all(|u| u.range == 0.0));
        assert_eq!(r.mean_range, 0.0);
        assert_eq!(r.adoption_span, Some(0));
    }

    #[test]
    fn span_uses_retained_units() {
        let y = DMatrix::from_fn(3, 10, |i, t| (i * t) as f64);
        let p = Panel::from_matrix(y, vec![Some(1), Some(4), Some(8)]).unwrap();
        let r = summarize_data(&p, Some(3)).unwrap();
        assert_eq!(r.excluded, vec!["u0".to_string()]);
        assert_eq!(r.first_adoption, Some((5, vec!["u1".to_string()])));
        assert_eq!(r.adoption_span, Some(4));
        assert_eq!(r.mean_range, (0.0 + 9.0 + 18.0) / 3.0);
        assert_eq!(r.mean_range_retained, 13.5);
    }
}
