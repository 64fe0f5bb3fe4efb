//! Synthetic low-rank panels with known treatment effects.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::Panel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdoptionMechanism {
    /// Treatment status and timing independent of the factors.
    RandomStaggered,
    /// Treatment probability rises with the unit's first factor loading.
    FactorSelected,
}

/// Effect added to treated cells as a function of event time `k >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EffectPath {
    Constant(f64),
    /// `start + slope * k`.
    Ramp {
        start: f64,
        slope: f64,
    },
}

impl EffectPath {
    pub fn at(&self, k: usize) -> f64 {
        match *self {
            EffectPath::Constant(c) => c,
            EffectPath::Ramp { start, slope } => start + slope * k as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n_units: usize,
    pub n_periods: usize,
    pub rank: usize,
    /// Multiplies the factor product `U V^T` (both factors standard normal).
    pub factor_scale: f64,
    pub noise_scale: f64,
    pub adoption_mechanism: AdoptionMechanism,
    pub treatment_effect: EffectPath,
    /// Expected share of units that are ever treated.
    pub treated_fraction: f64,
    /// Earliest adoption column, i.e. minimum number of pre-periods.
    pub min_pre: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_units: 30,
            n_periods: 20,
            rank: 2,
            factor_scale: 1.0,
            noise_scale: 0.0,
            adoption_mechanism: AdoptionMechanism::RandomStaggered,
            treatment_effect: EffectPath::Constant(0.0),
            treated_fraction: 0.5,
            min_pre: 5,
            seed: 0,
        }
    }
}

impl SimConfig {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.n_units == 0 || self.n_periods == 0 {
            return bad("n_units and n_periods must be positive");
        }
        if self.rank == 0 || self.rank > self.n_units.min(self.n_periods) {
            return bad("rank must be in 1..=min(n_units, n_periods)");
        }
        if !(self.factor_scale >= 0.0 && self.noise_scale >= 0.0)
            || !self.factor_scale.is_finite()
            || !self.noise_scale.is_finite()
        {
            return bad("scales must be finite and nonnegative");
        }
        if !(0.0..=1.0).contains(&self.treated_fraction) {
            return bad("treated_fraction must lie in [0, 1]");
        }
        if self.treated_fraction > 0.0 && self.min_pre >= self.n_periods {
            return bad("min_pre must leave at least one post period");
        }
        Ok(())
    }
}

/// Simulated panel plus its ground truth.
#[derive(Debug, Clone)]
pub struct Simulated {
    pub panel: Panel,
    /// Effect added to each cell (zero on untreated cells).
    pub true_effects: DMatrix<f64>,
    /// Untreated potential outcomes for every cell, noise included.
    pub untreated: DMatrix<f64>,
    /// Noiseless low-rank component.
    pub low_rank: DMatrix<f64>,
}

/// Draws `factor_scale * U V^T + noise` and adds the effect path on treated
/// cells. The same config always yields bit-identical output.
pub fn simulate_panel(config: &SimConfig) -> Result<Simulated> {
    config.validate()?;
    let (n, t, r) = (config.n_units, config.n_periods, config.rank);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut normal = || -> f64 { rng.sample(StandardNormal) };
    let u = DMatrix::from_fn(n, r, |_, _| normal());
    let v = DMatrix::from_fn(t, r, |_, _| normal());
    let noise = DMatrix::from_fn(n, t, |_, _| normal());
    let low_rank = (&u * v.transpose()) * config.factor_scale;
    let untreated = &low_rank + noise * config.noise_scale;

    let logit = |p: f64| (p / (1.0 - p)).ln();
    let adoption: Vec<Option<usize>> = (0..n)
        .map(|i| {
            let p = match config.adoption_mechanism {
                AdoptionMechanism::RandomStaggered => config.treated_fraction,
                AdoptionMechanism::FactorSelected => {
                    if config.treated_fraction <= 0.0 || config.treated_fraction >= 1.0 {
                        config.treated_fraction
                    } else {
                        let z = 2.0 * u[(i, 0)] + logit(config.treated_fraction);
                        1.0 / (1.0 + (-z).exp())
                    }
                }
            };
            let draw: f64 = rng.random();
            let when = rng.random_range(config.min_pre.min(t - 1)..t);
            (draw < p).then_some(when)
        })
        .collect();

    let true_effects = DMatrix::from_fn(n, t, |i, c| match adoption[i] {
        Some(g) if c >= g => config.treatment_effect.at(c - g),
        _ => 0.0,
    });
    let panel = Panel::from_matrix(&untreated + &true_effects, adoption)?;
    Ok(Simulated {
        panel,
        true_effects,
        untreated,
        low_rank,
    })
}
