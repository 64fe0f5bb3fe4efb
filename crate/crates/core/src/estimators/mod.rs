//! Causal effect estimators producing per-cell effect grids.
//!
//! * [`full_mc_estimate`]: one completion of the whole panel.
//! * [`cy_estimate`]: split-apply-combine completion, one cohort and focal
//!   period at a time.
//! * [`combine_apply_grid`] / [`combine_apply_estimate`]: the same splits with
//!   the cohort averaged into one row before imputing.
//! * [`did_estimate`]: difference in differences with not-yet-treated
//!   comparisons; [`fit_twfe_pooled`] is the single-coefficient regression.
//!
//! [`EstimatorSpec`] bundles an estimator with every setting it needs, so the
//! same pipeline can be rerun on bootstrap or placebo panels.

mod cy;
mod did;
mod full_mc;
mod grid;

pub use cy::{
    combine_apply_estimate, combine_apply_grid, cy_estimate, cy_split, CyOptions, CySplit,
};
pub use did::{did_estimate, fit_twfe_pooled};
pub use full_mc::{full_mc_estimate, McEstimate};
pub use grid::{CellKind, EffectEntry, EffectGrid, Inestimable};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lowrank::{InitFill, SoftImputeOptions};
use crate::panel::{fit_fixed_effects, residualize, Panel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    FullMc,
    Cy,
    CombineApply,
    Did,
    TwfePooled,
}

impl EstimatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::FullMc => "full-mc",
            EstimatorKind::Cy => "cy",
            EstimatorKind::CombineApply => "combine-apply",
            EstimatorKind::Did => "did",
            EstimatorKind::TwfePooled => "twfe-pooled",
        }
    }

    pub fn uses_lambda(self) -> bool {
        matches!(
            self,
            EstimatorKind::FullMc | EstimatorKind::Cy | EstimatorKind::CombineApply
        )
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "full-mc" => EstimatorKind::FullMc,
            "cy" => EstimatorKind::Cy,
            "combine-apply" => EstimatorKind::CombineApply,
            "did" => EstimatorKind::Did,
            "twfe-pooled" => EstimatorKind::TwfePooled,
            other => return Err(Error::InvalidConfig(format!("unknown estimator `{other}`"))),
        })
    }
}

/// A fully specified estimation pipeline: optional fixed-effect
/// pre-processing followed by one grid-producing estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    /// Regularization level; ignored by DiD.
    pub lambda: f64,
    /// Remove unit and period effects fitted on untreated cells first.
    pub residualize: bool,
    pub cy: CyOptions,
}

impl EstimatorSpec {
    /// Spec with default solver settings; the soft-impute initial fill is
    /// zeros on residualized data and column means on levels.
    pub fn new(kind: EstimatorKind, lambda: f64, residualize: bool) -> Self {
        let mut cy = CyOptions::default();
        cy.solver.init = if residualize {
            InitFill::Zeros
        } else {
            InitFill::ColumnMeans
        };
        Self {
            kind,
            lambda,
            residualize,
            cy,
        }
    }

    pub fn with_solver(mut self, solver: SoftImputeOptions) -> Self {
        self.cy.solver = solver;
        self
    }

    /// Tag recorded on every grid this spec produces, e.g. `cy` or `cy+fe`.
    pub fn tag(&self) -> String {
        let base = self.kind.as_str();
        if self.residualize {
            format!("{base}+fe")
        } else {
            base.to_string()
        }
    }

    /// Applies the optional pre-processing step.
    pub fn prepare(&self, panel: &Panel) -> Result<Panel> {
        if self.residualize {
            let fe = fit_fixed_effects(panel, &panel.mask())?;
            residualize(panel, &fe)
        } else {
            Ok(panel.clone())
        }
    }

    pub fn estimate(&self, panel: &Panel) -> Result<EffectGrid> {
        let data = self.prepare(panel)?;
        let tag = self.tag();
        match self.kind {
            EstimatorKind::FullMc => {
                Ok(full_mc_estimate(&data, self.lambda, &self.cy.solver, &tag)?.grid)
            }
            EstimatorKind::Cy => cy_estimate(&data, self.lambda, &self.cy, &tag),
            EstimatorKind::CombineApply => combine_apply_grid(&data, self.lambda, &self.cy, &tag),
            EstimatorKind::Did => did_estimate(&data, &tag),
            EstimatorKind::TwfePooled => Err(Error::InvalidConfig(
                "twfe-pooled yields a single coefficient, not an effect grid".into(),
            )),
        }
    }
}
