use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::panel::Panel;

/// Whether an estimated cell is a real post-adoption effect or a placebo
/// estimate in an eventually-treated unit's pre-period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellKind {
    Treated,
    PlaceboPre,
}

impl CellKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CellKind::Treated => "treated",
            CellKind::PlaceboPre => "placebo-pre",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectEntry {
    pub unit: usize,
    pub period: usize,
    /// `period - adoption`; negative for placebo cells.
    pub event_time: i64,
    pub kind: CellKind,
    pub estimate: f64,
}

/// A cell the estimator could not produce, with the reason.
#[derive(Debug, Clone, PartialEq)]
pub struct Inestimable {
    pub unit: usize,
    pub period: usize,
    pub kind: CellKind,
    pub reason: String,
}

/// Sparse map from (unit, period) to an estimated individual effect.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectGrid {
    estimator_tag: String,
    lambda_used: Option<f64>,
    unit_ids: Vec<String>,
    period_labels: Vec<i64>,
    adoption: Vec<Option<usize>>,
    entries: BTreeMap<(usize, usize), EffectEntry>,
    inestimable: Vec<Inestimable>,
}

impl EffectGrid {
    pub fn new(panel: &Panel, estimator_tag: impl Into<String>, lambda_used: Option<f64>) -> Self {
        Self {
            estimator_tag: estimator_tag.into(),
            lambda_used,
            unit_ids: panel.unit_ids().to_vec(),
            period_labels: panel.period_labels().to_vec(),
            adoption: panel.adoption().to_vec(),
            entries: BTreeMap::new(),
            inestimable: Vec::new(),
        }
    }

    fn kind_of(&self, unit: usize, period: usize) -> Result<(CellKind, i64)> {
        let g = self
            .adoption
            .get(unit)
            .copied()
            .flatten()
            .ok_or_else(|| Error::InvalidConfig(format!("unit {unit} is never treated")))?;
        if period >= self.period_labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "period {period} out of range"
            )));
        }
        let kind = if period >= g {
            CellKind::Treated
        } else {
            CellKind::PlaceboPre
        };
        Ok((kind, period as i64 - g as i64))
    }

    /// Records `estimate` for a cell of an eventually-treated unit. The cell
    /// kind follows from the unit's adoption period.
    pub fn insert(&mut self, unit: usize, period: usize, estimate: f64) -> Result<()> {
        let (kind, event_time) = self.kind_of(unit, period)?;
        self.entries.insert(
            (unit, period),
            EffectEntry {
                unit,
                period,
                event_time,
                kind,
                estimate,
            },
        );
        Ok(())
    }

    pub fn mark_inestimable(
        &mut self,
        unit: usize,
        period: usize,
        reason: impl Into<String>,
    ) -> Result<()> {
        let (kind, _) = self.kind_of(unit, period)?;
        self.inestimable.push(Inestimable {
            unit,
            period,
            kind,
            reason: reason.into(),
        });
        Ok(())
    }

    pub fn estimator_tag(&self) -> &str {
        &self.estimator_tag
    }

    pub fn lambda_used(&self) -> Option<f64> {
        self.lambda_used
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }

    pub fn period_labels(&self) -> &[i64] {
        &self.period_labels
    }

    pub fn adoption(&self) -> &[Option<usize>] {
        &self.adoption
    }

    pub fn get(&self, unit: usize, period: usize) -> Option<&EffectEntry> {
        self.entries.get(&(unit, period))
    }

    /// Entries in (unit, period) order.
    pub fn entries(&self) -> impl Iterator<Item = &EffectEntry> {
        self.entries.values()
    }

    pub fn inestimable(&self) -> &[Inestimable] {
        &self.inestimable
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn treated(&self) -> impl Iterator<Item = &EffectEntry> {
        self.entries().filter(|e| e.kind == CellKind::Treated)
    }

    /// CSV rows `unit,period,event_time,cell_kind,estimate,estimator_tag`.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "unit",
            "period",
            "event_time",
            "cell_kind",
            "estimate",
            "estimator_tag",
        ])?;
        for e in self.entries() {
            w.write_record([
                self.unit_ids[e.unit].as_str(),
                &self.period_labels[e.period].to_string(),
                &e.event_time.to_string(),
                e.kind.as_str(),
                &fmt_f64(e.estimate),
                &self.estimator_tag,
            ])?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn kinds_follow_adoption() {
        let p = Panel::from_matrix(DMatrix::zeros(2, 4), vec![Some(2), None]).unwrap();
        let mut g = EffectGrid::new(&p, "x", None);
        g.insert(0, 1, 0.5).unwrap();
        g.insert(0, 3, 2.0).unwrap();
        assert_eq!(g.get(0, 1).unwrap().kind, CellKind::PlaceboPre);
        assert_eq!(g.get(0, 1).unwrap().event_time, -1);
        assert_eq!(g.get(0, 3).unwrap().event_time, 1);
        assert!(g.insert(1, 3, 1.0).is_err());
    }
}
