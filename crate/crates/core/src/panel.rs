//! Balanced outcome panels with staggered, absorbing treatment adoption.
//!
//! A [`Panel`] holds an N×T outcome grid together with the period at which
//! each unit adopts treatment (or `None` for never-treated units). Adoption
//! is stored as a 0-based column index; a unit adopting at column `g` has
//! exactly `g` pre-treatment periods.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::fmt_f64;

/// Outcome panel: units × periods, plus per-unit adoption column.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    unit_ids: Vec<String>,
    period_labels: Vec<i64>,
    outcomes: DMatrix<f64>,
    adoption: Vec<Option<usize>>,
}

impl Panel {
    /// Builds a panel, checking shapes, label ordering and adoption bounds.
    pub fn new(
        unit_ids: Vec<String>,
        period_labels: Vec<i64>,
        outcomes: DMatrix<f64>,
        adoption: Vec<Option<usize>>,
    ) -> Result<Self> {
        let (n, t) = outcomes.shape();
        if unit_ids.len() != n || adoption.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} unit ids and {} adoption values for {} outcome rows",
                unit_ids.len(),
                adoption.len(),
                n
            )));
        }
        if period_labels.len() != t {
            return Err(Error::DimensionMismatch(format!(
                "{} period labels for {} outcome columns",
                period_labels.len(),
                t
            )));
        }
        if n == 0 {
            return Err(Error::EmptyPanel);
        }
        if period_labels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(
                "period labels must be strictly increasing".into(),
            ));
        }
        for (i, a) in adoption.iter().enumerate() {
            if let Some(g) = *a {
                if g >= t {
                    return Err(Error::InvalidAdoption {
                        unit: unit_ids[i].clone(),
                        value: format!("column {g}"),
                    });
                }
            }
        }
        Ok(Self {
            unit_ids,
            period_labels,
            outcomes,
            adoption,
        })
    }

    /// Panel with generated unit ids `u0, u1, ...` and periods `1..=T`.
    pub fn from_matrix(outcomes: DMatrix<f64>, adoption: Vec<Option<usize>>) -> Result<Self> {
        let ids = (0..outcomes.nrows()).map(|i| format!("u{i}")).collect();
        let labels = (1..=outcomes.ncols() as i64).collect();
        Self::new(ids, labels, outcomes, adoption)
    }

    pub fn n_units(&self) -> usize {
        self.outcomes.nrows()
    }

    pub fn n_periods(&self) -> usize {
        self.outcomes.ncols()
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }

    pub fn period_labels(&self) -> &[i64] {
        &self.period_labels
    }

    pub fn outcomes(&self) -> &DMatrix<f64> {
        &self.outcomes
    }

    pub fn adoption(&self) -> &[Option<usize>] {
        &self.adoption
    }

    /// Same units and adoption with a replacement outcome grid.
    pub fn with_outcomes(&self, outcomes: DMatrix<f64>) -> Result<Self> {
        if outcomes.shape() != self.outcomes.shape() {
            return Err(Error::DimensionMismatch(format!(
                "replacement outcomes {:?} vs panel {:?}",
                outcomes.shape(),
                self.outcomes.shape()
            )));
        }
        Ok(Self {
            outcomes,
            ..self.clone()
        })
    }

    /// Same outcomes with a replacement adoption vector.
    pub fn with_adoption(&self, adoption: Vec<Option<usize>>) -> Result<Self> {
        Self::new(
            self.unit_ids.clone(),
            self.period_labels.clone(),
            self.outcomes.clone(),
            adoption,
        )
    }

    /// Sub-panel made of the given rows, in the given order. Rows may repeat.
    pub fn select_units(&self, rows: &[usize]) -> Result<Self> {
        let t = self.n_periods();
        let outcomes = DMatrix::from_fn(rows.len(), t, |r, c| self.outcomes[(rows[r], c)]);
        let mut seen: HashMap<usize, usize> = HashMap::new();
        let ids = rows
            .iter()
            .map(|&r| {
                let copy = seen.entry(r).or_insert(0);
                *copy += 1;
                if *copy == 1 {
                    self.unit_ids[r].clone()
                } else {
                    format!("{}#{}", self.unit_ids[r], copy)
                }
            })
            .collect();
        let adoption = rows.iter().map(|&r| self.adoption[r]).collect();
        Self::new(ids, self.period_labels.clone(), outcomes, adoption)
    }

    /// Indices of units that adopt treatment at some period.
    pub fn treated_units(&self) -> Vec<usize> {
        (0..self.n_units())
            .filter(|&i| self.adoption[i].is_some())
            .collect()
    }

    /// Distinct adoption columns, ascending.
    pub fn cohorts(&self) -> Vec<usize> {
        self.adoption
            .iter()
            .flatten()
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Treatment indicator grid implied by the adoption columns.
    pub fn mask(&self) -> TreatmentMask {
        build_mask(self)
    }
}

/// Boolean N×T grid of treatment indicators.
#[derive(Debug, Clone, PartialEq)]
pub struct TreatmentMask {
    treated: DMatrix<bool>,
}

impl TreatmentMask {
    pub fn from_grid(treated: DMatrix<bool>) -> Self {
        Self { treated }
    }

    pub fn is_treated(&self, unit: usize, period: usize) -> bool {
        self.treated[(unit, period)]
    }

    pub fn treated(&self) -> &DMatrix<bool> {
        &self.treated
    }

    /// Complement of the mask: cells whose untreated outcome is observed.
    pub fn untreated(&self) -> DMatrix<bool> {
        self.treated.map(|d| !d)
    }

    pub fn n_treated(&self) -> usize {
        self.treated.iter().filter(|&&d| d).count()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.treated.shape()
    }
}

/// Treatment indicators `D[i][t] = t >= G_i`.
pub fn build_mask(panel: &Panel) -> TreatmentMask {
    let adoption = panel.adoption();
    let treated = DMatrix::from_fn(panel.n_units(), panel.n_periods(), |i, t| {
        adoption[i].is_some_and(|g| t >= g)
    });
    TreatmentMask { treated }
}

/// How adoption is recorded in the input file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdoptionColumn {
    /// Calendar label of the adoption period; blank, `Inf` or `NA` for never treated.
    Period(String),
    /// Per-row 0/1 treatment indicator; adoption is the first treated period.
    Indicator(String),
}

/// Column names of the long-format input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schema {
    pub unit: String,
    pub period: String,
    pub outcome: String,
    pub adoption: AdoptionColumn,
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            unit: "unit".into(),
            period: "period".into(),
            outcome: "outcome".into(),
            adoption: AdoptionColumn::Period("adoption".into()),
        }
    }
}

fn is_never_marker(s: &str) -> bool {
    let s = s.trim();
    s.is_empty() || s.eq_ignore_ascii_case("inf") || s == "NA"
}

fn parse_label(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(v) = s.parse::<i64>() {
        return Some(v);
    }
    // Some exports write integer years as floats ("1977.0").
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v.fract() == 0.0 => Some(v as i64),
        _ => None,
    }
}

/// Reads a long-format CSV (one row per unit and period) into a [`Panel`].
///
/// Units are sorted by id and periods ascending. Every (unit, period) pair
/// must be present exactly once.
pub fn load_panel<R: Read>(source: R, schema: &Schema) -> Result<Panel> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse {
                row: 1,
                message: format!("missing column `{name}`"),
            })
    };
    let unit_col = column(&schema.unit)?;
    let period_col = column(&schema.period)?;
    let outcome_col = column(&schema.outcome)?;
    let adoption_col = match &schema.adoption {
        AdoptionColumn::Period(name) | AdoptionColumn::Indicator(name) => column(name)?,
    };

    struct Row {
        unit: String,
        period: i64,
        outcome: f64,
        adoption: String,
        line: usize,
    }

    let mut rows = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        // Header is line 1.
        let line = idx + 2;
        let record = record?;
        let field = |c: usize| record.get(c).unwrap_or("");
        let unit = field(unit_col).to_string();
        let period = parse_label(field(period_col)).ok_or_else(|| Error::Parse {
            row: line,
            message: format!("period `{}` is not an integer", field(period_col)),
        })?;
        let outcome: f64 = field(outcome_col).parse().map_err(|_| Error::Parse {
            row: line,
            message: format!("outcome `{}` is not numeric", field(outcome_col)),
        })?;
        if !outcome.is_finite() {
            return Err(Error::Parse {
                row: line,
                message: format!("outcome `{}` is not finite", field(outcome_col)),
            });
        }
        rows.push(Row {
            unit,
            period,
            outcome,
            adoption: field(adoption_col).to_string(),
            line,
        });
    }
    if rows.is_empty() {
        return Err(Error::EmptyPanel);
    }

    let units: Vec<String> = rows
        .iter()
        .map(|r| r.unit.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let periods: Vec<i64> = rows
        .iter()
        .map(|r| r.period)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let unit_index: HashMap<&str, usize> = units
        .iter()
        .enumerate()
        .map(|(i, u)| (u.as_str(), i))
        .collect();
    let period_index: HashMap<i64, usize> =
        periods.iter().enumerate().map(|(i, &p)| (p, i)).collect();

    let (n, t) = (units.len(), periods.len());
    let mut outcomes = DMatrix::<f64>::zeros(n, t);
    let mut filled = DMatrix::<bool>::from_element(n, t, false);
    let mut raw_adoption: Vec<BTreeMap<usize, String>> = vec![BTreeMap::new(); n];
    for row in &rows {
        let i = unit_index[row.unit.as_str()];
        let c = period_index[&row.period];
        if filled[(i, c)] {
            return Err(Error::DuplicateCell {
                unit: row.unit.clone(),
                period: row.period,
                row: row.line,
            });
        }
        filled[(i, c)] = true;
        outcomes[(i, c)] = row.outcome;
        raw_adoption[i].insert(c, row.adoption.trim().to_string());
    }
    for i in 0..n {
        for c in 0..t {
            if !filled[(i, c)] {
                return Err(Error::UnbalancedPanel {
                    unit: units[i].clone(),
                    period: periods[c],
                });
            }
        }
    }

    let mut adoption = Vec::with_capacity(n);
    for (i, values) in raw_adoption.iter().enumerate() {
        let a = match &schema.adoption {
            AdoptionColumn::Period(_) => adoption_from_labels(&units[i], values, &periods)?,
            AdoptionColumn::Indicator(_) => adoption_from_indicator(&units[i], values)?,
        };
        adoption.push(a);
    }
    Panel::new(units, periods, outcomes, adoption)
}

fn adoption_from_labels(
    unit: &str,
    values: &BTreeMap<usize, String>,
    periods: &[i64],
) -> Result<Option<usize>> {
    let distinct: BTreeSet<&str> = values.values().map(String::as_str).collect();
    let invalid = |value: &str| Error::InvalidAdoption {
        unit: unit.to_string(),
        value: value.to_string(),
    };
    let mut parsed = None;
    for v in &distinct {
        let this = if is_never_marker(v) {
            None
        } else {
            let label = parse_label(v).ok_or_else(|| invalid(v))?;
            let first = periods[0];
            let last = periods[periods.len() - 1];
            if label < first || label > last {
                return Err(invalid(v));
            }
            // First period at or after the adoption label.
            Some(periods.partition_point(|&p| p < label))
        };
        match parsed {
            None => parsed = Some(this),
            Some(prev) if prev != this => {
                return Err(invalid(
                    &distinct.iter().copied().collect::<Vec<_>>().join("|"),
                ))
            }
            _ => {}
        }
    }
    Ok(parsed.flatten())
}

fn adoption_from_indicator(unit: &str, values: &BTreeMap<usize, String>) -> Result<Option<usize>> {
    let mut first = None;
    for (&c, v) in values {
        let on = match v.as_str() {
            "1" | "1.0" | "true" | "TRUE" => true,
            "0" | "0.0" | "false" | "FALSE" => false,
            other => {
                return Err(Error::InvalidAdoption {
                    unit: unit.to_string(),
                    value: other.to_string(),
                })
            }
        };
        match (on, first) {
            (true, None) => first = Some(c),
            (false, Some(_)) => {
                return Err(Error::InvalidAdoption {
                    unit: unit.to_string(),
                    value: "treatment switches off (non-absorbing)".into(),
                })
            }
            _ => {}
        }
    }
    Ok(first)
}

/// Writes the panel in the long format accepted by [`load_panel`] with the
/// default schema.
pub fn write_panel<W: Write>(panel: &Panel, sink: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(["unit", "period", "outcome", "adoption"])?;
    for i in 0..panel.n_units() {
        let adoption = panel.adoption[i]
            .map(|g| panel.period_labels[g].to_string())
            .unwrap_or_default();
        for (c, label) in panel.period_labels.iter().enumerate() {
            writer.write_record([
                panel.unit_ids[i].as_str(),
                &label.to_string(),
                &fmt_f64(panel.outcomes[(i, c)]),
                &adoption,
            ])?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Panel after dropping units with too few pre-treatment periods.
#[derive(Debug, Clone)]
pub struct Filtered {
    pub panel: Panel,
    pub excluded: Vec<String>,
}

/// Keeps never-treated units and units with at least `min_pre` pre-treatment
/// periods.
pub fn filter_min_pretreatment(panel: &Panel, min_pre: usize) -> Result<Filtered> {
    if min_pre == 0 {
        return Err(Error::InvalidConfig("min_pre must be at least 1".into()));
    }
    let (keep, drop): (Vec<usize>, Vec<usize>) =
        (0..panel.n_units()).partition(|&i| panel.adoption[i].is_none_or(|g| g >= min_pre));
    if keep.is_empty() {
        return Err(Error::EmptyPanel);
    }
    Ok(Filtered {
        panel: panel.select_units(&keep)?,
        excluded: drop
            .into_iter()
            .map(|i| panel.unit_ids[i].clone())
            .collect(),
    })
}

/// Additive unit and period effects fitted on untreated cells.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedEffects {
    pub unit_effects: Vec<f64>,
    pub time_effects: Vec<f64>,
    pub grand_mean: f64,
    pub sweeps: usize,
}

impl FixedEffects {
    pub fn fitted(&self, unit: usize, period: usize) -> f64 {
        self.grand_mean + self.unit_effects[unit] + self.time_effects[period]
    }
}

const FE_TOL: f64 = 1e-10;
const FE_MAX_SWEEPS: usize = 10_000;

/// Least-squares two-way fixed effects over the untreated cells of `mask`.
///
/// Solved by alternating unit/period demeaning on the observed cells until the
/// largest effect update falls below 1e-10 (or 10,000 sweeps), then
/// normalized so both effect vectors sum to zero.
pub fn fit_fixed_effects(panel: &Panel, mask: &TreatmentMask) -> Result<FixedEffects> {
    if mask.shape() != panel.outcomes.shape() {
        return Err(Error::DimensionMismatch(format!(
            "mask {:?} vs panel {:?}",
            mask.shape(),
            panel.outcomes.shape()
        )));
    }
    fit_two_way(
        &panel.outcomes,
        &mask.untreated(),
        |i| format!("unit `{}`", panel.unit_ids[i]),
        |t| format!("period {}", panel.period_labels[t]),
    )
}

pub(crate) fn fit_two_way(
    y: &DMatrix<f64>,
    observed: &DMatrix<bool>,
    unit_name: impl Fn(usize) -> String,
    period_name: impl Fn(usize) -> String,
) -> Result<FixedEffects> {
    let (n, t) = y.shape();
    let row_counts: Vec<usize> = (0..n)
        .map(|i| (0..t).filter(|&c| observed[(i, c)]).count())
        .collect();
    let col_counts: Vec<usize> = (0..t)
        .map(|c| (0..n).filter(|&i| observed[(i, c)]).count())
        .collect();
    if let Some(c) = col_counts.iter().position(|&k| k == 0) {
        return Err(Error::InestimableEffect {
            what: period_name(c),
        });
    }
    if let Some(i) = row_counts.iter().position(|&k| k == 0) {
        return Err(Error::InestimableEffect { what: unit_name(i) });
    }

    let total: usize = row_counts.iter().sum();
    let mean = (0..n)
        .flat_map(|i| (0..t).map(move |c| (i, c)))
        .filter(|&(i, c)| observed[(i, c)])
        .map(|(i, c)| y[(i, c)])
        .sum::<f64>()
        / total as f64;

    let mut alpha = vec![0.0; n];
    let mut eta = vec![0.0; t];
    let mut sweeps = 0;
    while sweeps < FE_MAX_SWEEPS {
        sweeps += 1;
        let mut change: f64 = 0.0;
        for i in 0..n {
            let s: f64 = (0..t)
                .filter(|&c| observed[(i, c)])
                .map(|c| y[(i, c)] - mean - eta[c])
                .sum();
            let next = s / row_counts[i] as f64;
            change = change.max((next - alpha[i]).abs());
            alpha[i] = next;
        }
        for c in 0..t {
            let s: f64 = (0..n)
                .filter(|&i| observed[(i, c)])
                .map(|i| y[(i, c)] - mean - alpha[i])
                .sum();
            let next = s / col_counts[c] as f64;
            change = change.max((next - eta[c]).abs());
            eta[c] = next;
        }
        if change < FE_TOL {
            break;
        }
    }

    let alpha_bar = alpha.iter().sum::<f64>() / n as f64;
    let eta_bar = eta.iter().sum::<f64>() / t as f64;
    alpha.iter_mut().for_each(|a| *a -= alpha_bar);
    eta.iter_mut().for_each(|e| *e -= eta_bar);
    Ok(FixedEffects {
        unit_effects: alpha,
        time_effects: eta,
        grand_mean: mean + alpha_bar + eta_bar,
        sweeps,
    })
}

/// Subtracts the fitted fixed-effect surface from every cell.
pub fn residualize(panel: &Panel, fe: &FixedEffects) -> Result<Panel> {
    if fe.unit_effects.len() != panel.n_units() || fe.time_effects.len() != panel.n_periods() {
        return Err(Error::DimensionMismatch(format!(
            "fixed effects ({}, {}) vs panel {:?}",
            fe.unit_effects.len(),
            fe.time_effects.len(),
            panel.outcomes.shape()
        )));
    }
    let resid = DMatrix::from_fn(panel.n_units(), panel.n_periods(), |i, t| {
        panel.outcomes[(i, t)] - fe.fitted(i, t)
    });
    panel.with_outcomes(resid)
}
