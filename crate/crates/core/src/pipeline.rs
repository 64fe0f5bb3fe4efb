//! End-to-end estimation run: load, filter, tune, estimate, aggregate,
//! diagnose, and write result tables.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aggregate::{
    aggregate_event, bootstrap_ci, mean_post_effect, BootstrapConfig, EventStudy, PostWeighting,
};
use crate::diagnostics::{in_time_placebo, pretrend_summary, PlaceboReport, PretrendSummary};
use crate::error::{Error, Result};
use crate::estimators::{
    fit_twfe_pooled, full_mc_estimate, EffectGrid, EstimatorKind, EstimatorSpec,
};
use crate::io::write_atomic;
use crate::lowrank::{
    condition_report, cross_validate, CvConfig, CvReport, CvScheme, InitFill, SoftImputeOptions,
};
use crate::panel::{filter_min_pretreatment, load_panel, Panel, Schema};
use crate::plot::event_study_svg;

/// Everything a run needs. Loaded from JSON; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub input: PathBuf,
    pub schema: Schema,
    pub estimators: Vec<EstimatorKind>,
    /// Remove unit and period effects (fitted on untreated cells) first.
    pub residualize: bool,
    pub cv_scheme: CvScheme,
    pub cv_folds: usize,
    /// Explicit lambda grid; empty means `lambda_points` log-spaced values
    /// from lambda_max down to `lambda_max * lambda_ratio`.
    pub lambda_grid: Vec<f64>,
    pub lambda_points: usize,
    pub lambda_ratio: f64,
    pub cv_holdout_periods: usize,
    pub k_min: i64,
    pub k_max: i64,
    /// Bootstrap replicates; 0 disables intervals.
    pub bootstrap_replicates: usize,
    pub bootstrap_level: f64,
    pub placebo_shift: usize,
    /// Estimator used for the in-time placebo; defaults to the first
    /// grid-producing estimator requested.
    pub placebo_estimator: Option<EstimatorKind>,
    pub min_pre: Option<usize>,
    pub group_size: usize,
    /// Limit CY/combine-apply placebo cells to this many pre-periods.
    pub placebo_horizon: Option<usize>,
    pub solver_tol: f64,
    pub solver_max_iter: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: PathBuf::new(),
            schema: Schema::default(),
            estimators: vec![EstimatorKind::FullMc, EstimatorKind::Cy, EstimatorKind::Did],
            residualize: false,
            cv_scheme: CvScheme::ObservedKfold,
            cv_folds: 5,
            lambda_grid: Vec::new(),
            lambda_points: 20,
            lambda_ratio: 1e-4,
            cv_holdout_periods: 3,
            k_min: -20,
            k_max: 10,
            bootstrap_replicates: 0,
            bootstrap_level: 0.95,
            placebo_shift: 5,
            placebo_estimator: None,
            min_pre: None,
            group_size: 1,
            placebo_horizon: None,
            solver_tol: 1e-7,
            solver_max_iter: 2_000,
            seed: 0,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.estimators.is_empty() {
            return bad("no estimators requested".into());
        }
        if self.k_min > self.k_max {
            return bad(format!("k_min {} exceeds k_max {}", self.k_min, self.k_max));
        }
        if !(self.bootstrap_level > 0.0 && self.bootstrap_level < 1.0) {
            return bad("bootstrap_level must lie in (0, 1)".into());
        }
        if self.bootstrap_replicates == 1 {
            return bad("bootstrap_replicates must be 0 (off) or at least 2".into());
        }
        if self.group_size == 0 {
            return bad("group_size must be >= 1".into());
        }
        if self.lambda_grid.is_empty() && self.lambda_points == 0 {
            return bad("lambda_points must be >= 1".into());
        }
        if !(self.lambda_ratio > 0.0 && self.lambda_ratio <= 1.0) {
            return bad("lambda_ratio must lie in (0, 1]".into());
        }
        Ok(())
    }

    fn solver(&self) -> SoftImputeOptions {
        SoftImputeOptions {
            tol: self.solver_tol,
            max_iter: self.solver_max_iter,
            init: if self.residualize {
                InitFill::Zeros
            } else {
                InitFill::ColumnMeans
            },
        }
    }

    /// Estimator spec sharing this run's lambda and solver settings.
    pub fn spec(&self, kind: EstimatorKind, lambda: f64) -> EstimatorSpec {
        let mut spec =
            EstimatorSpec::new(kind, lambda, self.residualize).with_solver(self.solver());
        spec.cy.group_size = self.group_size;
        spec.cy.placebo_horizon = self.placebo_horizon.or_else(|| {
            // Placebo cells beyond the plotted range are never used.
            (self.k_min < 0).then(|| self.k_min.unsigned_abs() as usize)
        });
        spec
    }

    pub fn bootstrap_seed(&self) -> u64 {
        self.seed.wrapping_add(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorSummary {
    pub tag: String,
    pub mean_post_effect: Option<f64>,
    pub mean_post_effect_unit_weighted: Option<f64>,
    pub pretrend: Option<PretrendSummary>,
    pub n_cells: usize,
    pub inestimable_cells: usize,
    /// Pooled two-way fixed effects coefficient (twfe-pooled only).
    pub coefficient: Option<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlaceboSummary {
    pub estimator_tag: String,
    pub shift: usize,
    pub mean_abs: f64,
    pub max_abs: f64,
    pub excluded: Vec<String>,
    pub warning: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Seeds {
    pub run: u64,
    pub cv: u64,
    pub bootstrap: u64,
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub software_version: String,
    pub config: RunConfig,
    pub n_units: usize,
    pub n_periods: usize,
    pub excluded_units: Vec<String>,
    pub chosen_lambda: Option<f64>,
    pub cv_scheme: Option<CvScheme>,
    pub condition_number: Option<f64>,
    pub full_fit_converged: Option<bool>,
    pub seeds: Seeds,
    pub estimators: BTreeMap<String, EstimatorSummary>,
    pub placebo: Option<PlaceboSummary>,
}

/// In-memory results of a run, before anything is written.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub cv: Option<CvReport>,
    pub grids: Vec<EffectGrid>,
    pub studies: Vec<EventStudy>,
    pub placebo: Option<PlaceboReport>,
}

fn file_tag(tag: &str) -> String {
    tag.replace('+', "_")
}

/// Runs the pipeline on an already loaded panel.
pub fn run_on_panel(config: &RunConfig, panel: &Panel) -> Result<RunOutput> {
    config.validate()?;
    let (panel, excluded) = match config.min_pre {
        Some(m) => {
            let f = filter_min_pretreatment(panel, m)?;
            (f.panel, f.excluded)
        }
        None => (panel.clone(), Vec::new()),
    };

    let needs_lambda = config.estimators.iter().any(|k| k.uses_lambda());
    let prepared = config.spec(EstimatorKind::Did, 0.0).prepare(&panel)?;
    let observed = panel.mask().untreated();
    let solver = config.solver();

    let (cv, lambda) = if needs_lambda {
        let cv_config = CvConfig {
            lambda_grid: if config.lambda_grid.is_empty() {
                crate::lowrank::default_lambda_grid(
                    prepared.outcomes(),
                    &observed,
                    config.lambda_points,
                    config.lambda_ratio,
                )?
            } else {
                config.lambda_grid.clone()
            },
            folds: config.cv_folds,
            scheme: config.cv_scheme,
            seed: config.seed,
            holdout_periods: config.cv_holdout_periods,
            solver,
        };
        let report = cross_validate(prepared.outcomes(), &observed, &cv_config)?;
        let lambda = report.chosen_lambda;
        (Some(report), Some(lambda))
    } else {
        (None, None)
    };

    let (condition_number, full_fit_converged) = match lambda {
        Some(l) => match full_mc_estimate(&prepared, l, &solver, "full-mc")?.fit {
            Some(fit) => (condition_report(&fit, None).ok(), Some(fit.converged)),
            None => (None, None),
        },
        None => (None, None),
    };

    let mut grids = Vec::new();
    let mut studies = Vec::new();
    let mut estimators = BTreeMap::new();
    for &kind in &config.estimators {
        let spec = config.spec(kind, lambda.unwrap_or(0.0));
        let tag = spec.tag();
        if kind == EstimatorKind::TwfePooled {
            let coefficient = fit_twfe_pooled(&prepared)?;
            estimators.insert(
                tag.clone(),
                EstimatorSummary {
                    tag,
                    mean_post_effect: None,
                    mean_post_effect_unit_weighted: None,
                    pretrend: None,
                    n_cells: 0,
                    inestimable_cells: 0,
                    coefficient: Some(coefficient),
                    warnings: Vec::new(),
                },
            );
            continue;
        }
        let grid = spec.estimate(&panel)?;
        let study = if config.bootstrap_replicates >= 2 {
            bootstrap_ci(
                &panel,
                &spec,
                &BootstrapConfig {
                    replicates: config.bootstrap_replicates,
                    level: config.bootstrap_level,
                    seed: config.bootstrap_seed(),
                    k_min: config.k_min,
                    k_max: config.k_max,
                },
            )?
        } else {
            aggregate_event(&grid, config.k_min, config.k_max)?
        };
        estimators.insert(
            tag.clone(),
            EstimatorSummary {
                tag,
                mean_post_effect: mean_post_effect(&study, PostWeighting::PerEventTime).ok(),
                mean_post_effect_unit_weighted: mean_post_effect(&study, PostWeighting::PerUnit)
                    .ok(),
                pretrend: pretrend_summary(&study).ok(),
                n_cells: grid.len(),
                inestimable_cells: grid.inestimable().len(),
                coefficient: None,
                warnings: study.warnings.clone(),
            },
        );
        grids.push(grid);
        studies.push(study);
    }

    let placebo_kind = config.placebo_estimator.or_else(|| {
        config
            .estimators
            .iter()
            .copied()
            .find(|&k| k != EstimatorKind::TwfePooled)
    });
    let placebo = match placebo_kind {
        Some(kind) if config.placebo_shift > 0 => Some(in_time_placebo(
            &panel,
            &config.spec(kind, lambda.unwrap_or(0.0)),
            config.placebo_shift,
        )?),
        _ => None,
    };

    let summary = RunSummary {
        software_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        n_units: panel.n_units(),
        n_periods: panel.n_periods(),
        excluded_units: excluded,
        chosen_lambda: lambda,
        cv_scheme: cv.as_ref().map(|c| c.scheme),
        condition_number,
        full_fit_converged,
        seeds: Seeds {
            run: config.seed,
            cv: config.seed,
            bootstrap: config.bootstrap_seed(),
        },
        estimators,
        placebo: placebo.as_ref().map(|p| PlaceboSummary {
            estimator_tag: p.estimator_tag.clone(),
            shift: p.shift,
            mean_abs: p.mean_abs,
            max_abs: p.max_abs,
            excluded: p.excluded.clone(),
            warning: p.warning.clone(),
        }),
    };
    Ok(RunOutput {
        summary,
        cv,
        grids,
        studies,
        placebo,
    })
}

/// Writes every artifact of `output` into `dir`. Each file is replaced
/// atomically.
pub fn write_outputs(output: &RunOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<(PathBuf, Vec<u8>)> = Vec::new();
    for grid in &output.grids {
        files.push((
            dir.join(format!("effects_{}.csv", file_tag(grid.estimator_tag()))),
            grid.to_csv()?,
        ));
    }
    for study in &output.studies {
        files.push((
            dir.join(format!(
                "event_study_{}.csv",
                file_tag(&study.estimator_tag)
            )),
            study.to_csv()?,
        ));
    }
    if let Some(cv) = &output.cv {
        files.push((dir.join("cv_report.csv"), cv.to_csv()?));
        files.push((
            dir.join("cv_summary.json"),
            serde_json::to_vec_pretty(&cv.summary_json())?,
        ));
    }
    if let Some(p) = &output.placebo {
        files.push((dir.join("placebo_report.csv"), p.to_csv()?));
    }
    let refs: Vec<&EventStudy> = output.studies.iter().collect();
    files.push((
        dir.join("event_study.svg"),
        event_study_svg(&refs, "Event-time effects").into_bytes(),
    ));
    files.push((
        dir.join("summary.json"),
        serde_json::to_vec_pretty(&output.summary)?,
    ));
    for (path, bytes) in &files {
        write_atomic(path, bytes)?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}

/// Loads `config.input`, runs the pipeline and writes results to
/// `config.output_dir`.
pub fn run(config: &RunConfig) -> Result<RunOutput> {
    config.validate()?;
    let panel = load_panel(File::open(&config.input)?, &config.schema)?;
    let output = run_on_panel(config, &panel)?;
    write_outputs(&output, &config.output_dir)?;
    Ok(output)
}
