//! Credibility checks: per-unit gap series, pre-trend summaries and in-time
//! placebos.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::aggregate::EventStudy;
use crate::error::{Error, Result};
use crate::estimators::{CellKind, EffectGrid, EstimatorSpec};
use crate::io::fmt_f64;
use crate::panel::Panel;

/// A unit's estimates ordered by event time, placebo cells included.
pub fn gap_series(grid: &EffectGrid, unit: usize) -> Result<Vec<(i64, f64)>> {
    if grid.adoption().get(unit).copied().flatten().is_none() {
        return Err(Error::NoGap(unit));
    }
    // Entries iterate in period order, which is event-time order for one unit.
    Ok(grid
        .entries()
        .filter(|e| e.unit == unit)
        .map(|e| (e.event_time, e.estimate))
        .collect())
}

/// Largest and mean absolute event-study estimate over `k < 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PretrendSummary {
    pub max_abs: f64,
    pub mean_abs: f64,
}

pub fn pretrend_summary(study: &EventStudy) -> Result<PretrendSummary> {
    let pre: Vec<f64> = study
        .entries
        .range(..0)
        .map(|(_, e)| e.estimate.abs())
        .collect();
    if pre.is_empty() {
        return Err(Error::NoPreEntries);
    }
    Ok(PretrendSummary {
        max_abs: pre.iter().copied().fold(0.0, f64::max),
        mean_abs: pre.iter().sum::<f64>() / pre.len() as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlaceboCell {
    pub unit: String,
    /// Event time relative to the placebo adoption, `0 <= k < shift`.
    pub k: i64,
    pub estimate: f64,
    pub true_adoption: i64,
    pub placebo_adoption: i64,
    #[serde(skip)]
    pub period: usize,
    #[serde(skip)]
    pub true_adoption_column: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlaceboReport {
    pub shift: usize,
    pub estimator_tag: String,
    pub cells: Vec<PlaceboCell>,
    /// Units whose backdated adoption leaves no pre-period.
    pub excluded: Vec<String>,
    pub mean_abs: f64,
    pub max_abs: f64,
    pub per_k_mean: BTreeMap<i64, f64>,
    pub warning: String,
}

const OVERFIT_WARNING: &str = "placebo estimates near zero may reflect over-fitting rather than a \
valid counterfactual; compare with in-sample pre-period gaps";

impl PlaceboReport {
    /// CSV rows `unit,k,estimate,true_adoption,placebo_adoption`.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["unit", "k", "estimate", "true_adoption", "placebo_adoption"])?;
        for c in &self.cells {
            w.write_record([
                c.unit.clone(),
                c.k.to_string(),
                fmt_f64(c.estimate),
                c.true_adoption.to_string(),
                c.placebo_adoption.to_string(),
            ])?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

/// In-time placebo: backdate every adoption by `shift` periods, rerun the
/// estimator, and report its "effects" for `0 <= k < shift`, all of which
/// fall before real treatment.
///
/// Units left without a pre-period are dropped and listed. Under the
/// backdated mask the shifted units' real post-treatment outcomes are never
/// used for fitting, and only cells before the true adoption are scored.
pub fn in_time_placebo(panel: &Panel, spec: &EstimatorSpec, shift: usize) -> Result<PlaceboReport> {
    if shift == 0 {
        return Err(Error::InvalidConfig("placebo shift must be >= 1".into()));
    }
    let adoption = panel.adoption();
    let (keep, drop): (Vec<usize>, Vec<usize>) =
        (0..panel.n_units()).partition(|&i| adoption[i].is_none_or(|g| g > shift));
    let excluded: Vec<String> = drop.iter().map(|&i| panel.unit_ids()[i].clone()).collect();
    if keep.iter().all(|&i| adoption[i].is_none()) {
        return Err(Error::EmptyPlacebo);
    }
    let kept = panel.select_units(&keep)?;
    let true_adoption: Vec<Option<usize>> = kept.adoption().to_vec();
    let shifted =
        kept.with_adoption(true_adoption.iter().map(|a| a.map(|g| g - shift)).collect())?;
    let grid = spec.estimate(&shifted)?;

    let labels = panel.period_labels();
    let mut cells = Vec::new();
    for e in grid.entries() {
        let Some(g_true) = true_adoption[e.unit] else {
            continue;
        };
        if e.kind != CellKind::Treated || e.period >= g_true {
            continue;
        }
        cells.push(PlaceboCell {
            unit: kept.unit_ids()[e.unit].clone(),
            k: e.event_time,
            estimate: e.estimate,
            true_adoption: labels[g_true],
            placebo_adoption: labels[g_true - shift],
            period: e.period,
            true_adoption_column: g_true,
        });
    }
    if cells.is_empty() {
        return Err(Error::EmptyPlacebo);
    }
    let abs: Vec<f64> = cells.iter().map(|c| c.estimate.abs()).collect();
    let mut per_k: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
    for c in &cells {
        let s = per_k.entry(c.k).or_insert((0.0, 0));
        s.0 += c.estimate;
        s.1 += 1;
    }
    Ok(PlaceboReport {
        shift,
        estimator_tag: grid.estimator_tag().to_string(),
        mean_abs: abs.iter().sum::<f64>() / abs.len() as f64,
        max_abs: abs.iter().copied().fold(0.0, f64::max),
        per_k_mean: per_k
            .into_iter()
            .map(|(k, (s, n))| (k, s / n as f64))
            .collect(),
        cells,
        excluded,
        warning: OVERFIT_WARNING.to_string(),
    })
}
