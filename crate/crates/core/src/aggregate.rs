//! Calendar-time and event-time averages of cell effects, and unit-level
//! bootstrap intervals for event studies.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{CellKind, EffectGrid, EstimatorSpec};
use crate::io::{fmt_f64, fmt_opt};
use crate::panel::Panel;

/// Average effect over units treated at one calendar period.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalendarAtt {
    pub period: usize,
    pub estimate: f64,
    pub n_treated: usize,
    /// Treated cells at this period the estimator could not produce.
    pub n_inestimable: usize,
}

/// Mean of the treated-cell estimates in column `t0`.
pub fn aggregate_calendar(grid: &EffectGrid, t0: usize) -> Result<CalendarAtt> {
    let values: Vec<f64> = grid
        .treated()
        .filter(|e| e.period == t0)
        .map(|e| e.estimate)
        .collect();
    let n_inestimable = grid
        .inestimable()
        .iter()
        .filter(|c| c.period == t0 && c.kind == CellKind::Treated)
        .count();
    if values.is_empty() {
        return Err(Error::EmptyAggregate(format!(
            "no treated estimates at column {t0}"
        )));
    }
    Ok(CalendarAtt {
        period: t0,
        estimate: values.iter().sum::<f64>() / values.len() as f64,
        n_treated: values.len(),
        n_inestimable,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventEntry {
    pub estimate: f64,
    /// Units contributing an estimate at this event time.
    pub n_units: usize,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    /// Bootstrap replicates that produced this event time.
    pub n_replicates: Option<usize>,
}

/// Effects averaged by time since adoption.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventStudy {
    pub estimator_tag: String,
    pub entries: BTreeMap<i64, EventEntry>,
    pub warnings: Vec<String>,
}

impl EventStudy {
    pub fn get(&self, k: i64) -> Option<&EventEntry> {
        self.entries.get(&k)
    }

    /// CSV rows `k,estimate,n_units,ci_low,ci_high,estimator_tag`.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "k",
            "estimate",
            "n_units",
            "ci_low",
            "ci_high",
            "estimator_tag",
        ])?;
        for (k, e) in &self.entries {
            w.write_record([
                k.to_string(),
                fmt_f64(e.estimate),
                e.n_units.to_string(),
                fmt_opt(e.ci_low),
                fmt_opt(e.ci_high),
                self.estimator_tag.clone(),
            ])?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

/// Mean over eventually-treated units of the estimate `k` periods after
/// adoption, for every `k` in `k_min..=k_max`. Negative `k` uses placebo
/// cells. Event times without contributors are omitted.
pub fn aggregate_event(grid: &EffectGrid, k_min: i64, k_max: i64) -> Result<EventStudy> {
    if k_min > k_max {
        return Err(Error::InvalidConfig(format!(
            "empty event range {k_min}..={k_max}"
        )));
    }
    let mut sums: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
    for e in grid.entries() {
        if e.event_time < k_min || e.event_time > k_max {
            continue;
        }
        let slot = sums.entry(e.event_time).or_insert((0.0, 0));
        slot.0 += e.estimate;
        slot.1 += 1;
    }
    Ok(EventStudy {
        estimator_tag: grid.estimator_tag().to_string(),
        entries: sums
            .into_iter()
            .map(|(k, (s, n))| {
                (
                    k,
                    EventEntry {
                        estimate: s / n as f64,
                        n_units: n,
                        ci_low: None,
                        ci_high: None,
                        n_replicates: None,
                    },
                )
            })
            .collect(),
        warnings: Vec::new(),
    })
}

/// How event times are weighted when summarizing the post-treatment path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PostWeighting {
    /// Every event time `k >= 0` counts once.
    #[default]
    PerEventTime,
    /// Event times weighted by their number of contributing units.
    PerUnit,
}

/// Average of the event-study estimates over `k >= 0`.
pub fn mean_post_effect(study: &EventStudy, weighting: PostWeighting) -> Result<f64> {
    let post: Vec<&EventEntry> = study.entries.range(0..).map(|(_, e)| e).collect();
    if post.is_empty() {
        return Err(Error::NoPostEntries);
    }
    Ok(match weighting {
        PostWeighting::PerEventTime => {
            post.iter().map(|e| e.estimate).sum::<f64>() / post.len() as f64
        }
        PostWeighting::PerUnit => {
            let n: usize = post.iter().map(|e| e.n_units).sum();
            post.iter()
                .map(|e| e.estimate * e.n_units as f64)
                .sum::<f64>()
                / n as f64
        }
    })
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Bootstrap settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapConfig {
    pub replicates: usize,
    /// Nominal coverage in (0, 1).
    pub level: f64,
    pub seed: u64,
    pub k_min: i64,
    pub k_max: i64,
}

/// Event study of `spec` on `panel` with percentile intervals from resampling
/// whole units with replacement.
///
/// Each replicate draws its indices from a ChaCha stream keyed by the
/// replicate number, so results do not depend on scheduling. Lambda is taken
/// from `spec` and never re-tuned. An event time needs at least
/// `max(20, B / 10)` valid replicates (capped at `B`) to receive an interval;
/// otherwise its interval is suppressed and a warning is recorded. Intervals
/// are widened, if needed, to contain the point estimate.
pub fn bootstrap_ci(
    panel: &Panel,
    spec: &EstimatorSpec,
    config: &BootstrapConfig,
) -> Result<EventStudy> {
    if config.replicates < 2 {
        return Err(Error::InvalidConfig(
            "bootstrap needs at least 2 replicates".into(),
        ));
    }
    if !(config.level > 0.0 && config.level < 1.0) {
        return Err(Error::InvalidConfig(
            "bootstrap level must lie in (0, 1)".into(),
        ));
    }
    let grid = spec.estimate(panel)?;
    let mut study = aggregate_event(&grid, config.k_min, config.k_max)?;

    let n = panel.n_units();
    let draws: Vec<Option<EventStudy>> = (0..config.replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(b as u64);
            let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let sample = panel.select_units(&rows).ok()?;
            let grid = spec.estimate(&sample).ok()?;
            aggregate_event(&grid, config.k_min, config.k_max).ok()
        })
        .collect();

    let failed = draws.iter().filter(|d| d.is_none()).count();
    if failed > 0 {
        study.warnings.push(format!(
            "{failed} of {} replicates failed to estimate",
            config.replicates
        ));
    }
    let mut by_k: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for d in draws.iter().flatten() {
        for (k, e) in &d.entries {
            by_k.entry(*k).or_default().push(e.estimate);
        }
    }

    let needed = 20usize
        .max(config.replicates.div_ceil(10))
        .min(config.replicates);
    let alpha = (1.0 - config.level) / 2.0;
    for (k, entry) in study.entries.iter_mut() {
        let mut values = by_k.remove(k).unwrap_or_default();
        entry.n_replicates = Some(values.len());
        if values.len() < needed {
            study.warnings.push(format!(
                "k = {k}: {} valid replicates, {needed} needed; interval suppressed",
                values.len()
            ));
            continue;
        }
        values.sort_by(f64::total_cmp);
        let lo = quantile(&values, alpha).min(entry.estimate);
        let hi = quantile(&values, 1.0 - alpha).max(entry.estimate);
        entry.ci_low = Some(lo);
        entry.ci_high = Some(hi);
    }
    Ok(study)
}
