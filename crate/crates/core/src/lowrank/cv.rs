use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::impute::{check_coverage, soft_impute, SoftImputeOptions};
use super::svt::singular_values;
use crate::error::{Error, Result};

const FOLD_ATTEMPTS: usize = 10;

/// How held-out cells are drawn from the observed set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CvScheme {
    /// Random partition of observed cells into `folds` groups.
    ObservedKfold,
    /// `folds` random draws, each holding out the overall missing fraction of
    /// the observed cells.
    MissingFraction,
    /// Hold out the last pre-treatment periods of eventually-treated rows.
    PrePeriodHoldout,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CvConfig {
    /// Candidate regularization levels. Empty means [`default_lambda_grid`].
    pub lambda_grid: Vec<f64>,
    pub folds: usize,
    pub scheme: CvScheme,
    pub seed: u64,
    /// Number of trailing pre-treatment periods held out per treated row
    /// under [`CvScheme::PrePeriodHoldout`].
    pub holdout_periods: usize,
    pub solver: SoftImputeOptions,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            lambda_grid: Vec::new(),
            folds: 5,
            scheme: CvScheme::ObservedKfold,
            seed: 0,
            holdout_periods: 3,
            solver: SoftImputeOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub lambda_grid: Vec<f64>,
    /// Mean held-out squared error per grid point.
    pub mean_errors: Vec<f64>,
    /// `fold_errors[l][f]`: held-out mean squared error of lambda `l` on fold `f`.
    pub fold_errors: Vec<Vec<f64>>,
    pub chosen_lambda: f64,
    pub chosen_index: usize,
    pub scheme: CvScheme,
    pub seed: u64,
}

impl CvReport {
    /// Long-format rows `lambda,fold,error`.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["lambda", "fold", "error"])?;
        for (l, lambda) in self.lambda_grid.iter().enumerate() {
            for (f, e) in self.fold_errors[l].iter().enumerate() {
                w.write_record([
                    crate::io::fmt_f64(*lambda),
                    f.to_string(),
                    crate::io::fmt_f64(*e),
                ])?;
            }
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }

    /// JSON summary: chosen lambda, scheme and seed.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "chosen_lambda": self.chosen_lambda,
            "scheme": self.scheme,
            "seed": self.seed,
        })
    }
}

/// Largest singular value of the observed matrix with unobserved cells set to
/// zero. Any larger lambda yields the zero completion.
pub fn lambda_max(data: &DMatrix<f64>, observed: &DMatrix<bool>) -> Result<f64> {
    let zero_filled = data.zip_map(observed, |v, o| if o { v } else { 0.0 });
    Ok(singular_values(&zero_filled)?
        .first()
        .copied()
        .unwrap_or(0.0))
}

/// `points` log-spaced values from `lambda_max` down to `lambda_max * ratio`.
pub fn default_lambda_grid(
    data: &DMatrix<f64>,
    observed: &DMatrix<bool>,
    points: usize,
    ratio: f64,
) -> Result<Vec<f64>> {
    let top = lambda_max(data, observed)?;
    if points == 1 {
        return Ok(vec![top]);
    }
    Ok((0..points)
        .map(|k| top * ratio.powf(k as f64 / (points - 1) as f64))
        .collect())
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

type Cell = (usize, usize);

fn observed_cells(observed: &DMatrix<bool>) -> Vec<Cell> {
    let (n, t) = observed.shape();
    (0..n)
        .flat_map(|i| (0..t).map(move |c| (i, c)))
        .filter(|&(i, c)| observed[(i, c)])
        .collect()
}

fn training_mask(observed: &DMatrix<bool>, held_out: &[Cell]) -> DMatrix<bool> {
    let mut m = observed.clone();
    for &(i, c) in held_out {
        m[(i, c)] = false;
    }
    m
}

fn kfold_sets(observed: &DMatrix<bool>, folds: usize, seed: u64) -> Result<Vec<Vec<Cell>>> {
    let cells = observed_cells(observed);
    for attempt in 0..FOLD_ATTEMPTS {
        let mut shuffled = cells.clone();
        shuffled.shuffle(&mut rng_for(seed, attempt as u64));
        let mut sets = vec![Vec::new(); folds];
        for (k, cell) in shuffled.into_iter().enumerate() {
            sets[k % folds].push(cell);
        }
        if sets
            .iter()
            .all(|s| check_coverage(&training_mask(observed, s)).is_ok())
        {
            return Ok(sets);
        }
    }
    Err(Error::FoldConstruction {
        attempts: FOLD_ATTEMPTS,
    })
}

fn missing_fraction_sets(
    observed: &DMatrix<bool>,
    repeats: usize,
    seed: u64,
) -> Result<Vec<Vec<Cell>>> {
    let cells = observed_cells(observed);
    let total = observed.len();
    let missing = total - cells.len();
    let fraction = if missing == 0 {
        1.0 / repeats as f64
    } else {
        missing as f64 / total as f64
    };
    let size = ((fraction * cells.len() as f64).round() as usize).clamp(1, cells.len());
    (0..repeats)
        .map(|r| {
            for attempt in 0..FOLD_ATTEMPTS {
                let stream = (r * FOLD_ATTEMPTS + attempt) as u64;
                let mut shuffled = cells.clone();
                shuffled.shuffle(&mut rng_for(seed, stream));
                shuffled.truncate(size);
                if check_coverage(&training_mask(observed, &shuffled)).is_ok() {
                    return Ok(shuffled);
                }
            }
            Err(Error::FoldConstruction {
                attempts: FOLD_ATTEMPTS,
            })
        })
        .collect()
}

fn pre_period_sets(observed: &DMatrix<bool>, periods: usize) -> Result<Vec<Vec<Cell>>> {
    if periods == 0 {
        return Err(Error::InvalidConfig("holdout_periods must be >= 1".into()));
    }
    let (n, t) = observed.shape();
    let mut held = Vec::new();
    for i in 0..n {
        let Some(first_missing) = (0..t).find(|&c| !observed[(i, c)]) else {
            continue;
        };
        // Keep at least one observed pre-period in the row.
        let start = first_missing.saturating_sub(periods).max(1);
        held.extend(
            (start..first_missing)
                .filter(|&c| observed[(i, c)])
                .map(|c| (i, c)),
        );
    }
    if held.is_empty() {
        return Err(Error::InvalidConfig(
            "pre-period holdout found no treated rows with at least two pre-periods".into(),
        ));
    }
    check_coverage(&training_mask(observed, &held))
        .map_err(|_| Error::FoldConstruction { attempts: 1 })?;
    Ok(vec![held])
}

/// Chooses the regularization level by held-out squared error on observed
/// cells. Folds run concurrently; each fold walks the lambda grid from the
/// largest value down, warm-starting from the previous solution. Results are
/// deterministic for a given seed.
pub fn cross_validate(
    data: &DMatrix<f64>,
    observed: &DMatrix<bool>,
    config: &CvConfig,
) -> Result<CvReport> {
    if data.shape() != observed.shape() {
        return Err(Error::DimensionMismatch(format!(
            "data {:?} vs observed {:?}",
            data.shape(),
            observed.shape()
        )));
    }
    let grid = if config.lambda_grid.is_empty() {
        default_lambda_grid(data, observed, 20, 1e-4)?
    } else {
        config.lambda_grid.clone()
    };
    if grid.iter().any(|&l| !l.is_finite() || l < 0.0) {
        return Err(Error::InvalidConfig(
            "lambda grid must be finite and >= 0".into(),
        ));
    }
    let held_out = match config.scheme {
        CvScheme::ObservedKfold => {
            if config.folds < 2 {
                return Err(Error::InvalidConfig(
                    "observed k-fold needs folds >= 2".into(),
                ));
            }
            kfold_sets(observed, config.folds, config.seed)?
        }
        CvScheme::MissingFraction => {
            if config.folds < 1 {
                return Err(Error::InvalidConfig(
                    "missing-fraction needs folds >= 1".into(),
                ));
            }
            missing_fraction_sets(observed, config.folds, config.seed)?
        }
        CvScheme::PrePeriodHoldout => pre_period_sets(observed, config.holdout_periods)?,
    };

    // Walk from the most regularized end for stable warm starts.
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| grid[b].total_cmp(&grid[a]));

    let per_fold: Vec<Vec<f64>> = held_out
        .par_iter()
        .map(|cells| -> Result<Vec<f64>> {
            let train = training_mask(observed, cells);
            let mut errors = vec![0.0; grid.len()];
            let mut warm: Option<DMatrix<f64>> = None;
            for &l in &order {
                let fit = soft_impute(data, &train, grid[l], &config.solver, warm.as_ref())?;
                errors[l] = cells
                    .iter()
                    .map(|&(i, c)| (fit.completed[(i, c)] - data[(i, c)]).powi(2))
                    .sum::<f64>()
                    / cells.len() as f64;
                warm = Some(fit.completed);
            }
            Ok(errors)
        })
        .collect::<Result<_>>()?;

    let fold_errors: Vec<Vec<f64>> = (0..grid.len())
        .map(|l| per_fold.iter().map(|f| f[l]).collect())
        .collect();
    let mean_errors: Vec<f64> = fold_errors
        .iter()
        .map(|f| f.iter().sum::<f64>() / f.len() as f64)
        .collect();

    let mut chosen = 0;
    for l in 1..grid.len() {
        let better = mean_errors[l] < mean_errors[chosen];
        let tie_larger = mean_errors[l] == mean_errors[chosen] && grid[l] > grid[chosen];
        if better || tie_larger {
            chosen = l;
        }
    }

    Ok(CvReport {
        chosen_lambda: grid[chosen],
        chosen_index: chosen,
        lambda_grid: grid,
        mean_errors,
        fold_errors,
        scheme: config.scheme,
        seed: config.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rank_one(n: usize, t: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, t, |i, c| (1.0 + i as f64 * 0.3) * (2.0 - c as f64 * 0.1))
    }

    #[test]
    fn single_point_grid_is_chosen() {
        let data = rank_one(6, 5);
        let obs = DMatrix::from_element(6, 5, true);
        let cfg = CvConfig {
            lambda_grid: vec![0.25],
            ..Default::default()
        };
        let r = cross_validate(&data, &obs, &cfg).unwrap();
        assert_eq!(r.chosen_lambda, 0.25);
        assert_eq!(r.fold_errors[0].len(), 5);
    }

    #[test]
    fn folds_partition_observed_cells() {
        let mut obs = DMatrix::from_element(6, 6, true);
        obs[(0, 5)] = false;
        obs[(1, 5)] = false;
        let sets = kfold_sets(&obs, 4, 9).unwrap();
        let mut all: Vec<Cell> = sets.concat();
        all.sort();
        assert_eq!(all, observed_cells(&obs));
    }

    #[test]
    fn missing_fraction_matches_overall_fraction() {
        let mut obs = DMatrix::from_element(10, 10, true);
        for c in 5..10 {
            obs[(0, c)] = false;
            obs[(1, c)] = false;
        }
        // 10 of 100 cells missing, so 9 of the 90 observed are held out.
        let sets = missing_fraction_sets(&obs, 3, 1).unwrap();
        assert!(sets.iter().all(|s| s.len() == 9));
    }

    #[test]
    fn pre_period_holdout_targets_treated_rows() {
        let mut obs = DMatrix::from_element(3, 6, true);
        for c in 4..6 {
            obs[(0, c)] = false;
        }
        let sets = pre_period_sets(&obs, 2).unwrap();
        assert_eq!(sets, vec![vec![(0, 2), (0, 3)]]);
    }

    #[test]
    fn too_few_folds_rejected() {
        let data = rank_one(3, 3);
        let obs = DMatrix::from_element(3, 3, true);
        let cfg = CvConfig {
            folds: 1,
            ..Default::default()
        };
        assert!(matches!(
            cross_validate(&data, &obs, &cfg),
            Err(Error::InvalidConfig(_))
        ));
    }
}
