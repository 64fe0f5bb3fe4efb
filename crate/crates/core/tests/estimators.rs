use std::collections::BTreeSet;

use mcpanel::estimators::{
    combine_apply_estimate, combine_apply_grid, cy_estimate, cy_split, did_estimate,
    fit_twfe_pooled, full_mc_estimate, CellKind, CyOptions, EstimatorKind, EstimatorSpec,
};
use mcpanel::lowrank::{lambda_max, InitFill, SoftImputeOptions};
use mcpanel::simulate::{simulate_panel, AdoptionMechanism, EffectPath, SimConfig, Simulated};
use mcpanel::Panel;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Noiseless panels with a majority of never-treated controls and at least
/// ten pre-periods; small lambda so that shrinkage bias stays well under the
/// 1e-3 tolerance.
fn noiseless(seed: u64, rank: usize, effect: EffectPath) -> Simulated {
    simulate_panel(&SimConfig {
        n_units: 40,
        n_periods: 20,
        rank,
        treated_fraction: 0.3,
        min_pre: 10,
        treatment_effect: effect,
        seed,
        ..Default::default()
    })
    .unwrap()
}

fn tight_solver() -> SoftImputeOptions {
    SoftImputeOptions {
        tol: 1e-12,
        max_iter: 200_000,
        init: InitFill::ColumnMeans,
    }
}

fn scale(s: &Simulated) -> f64 {
    s.low_rank.norm() / (s.low_rank.len() as f64).sqrt()
}

fn small_lambda(p: &Panel) -> f64 {
    2e-5 * lambda_max(p.outcomes(), &p.mask().untreated()).unwrap()
}

#[test]
fn full_mc_recovers_zero_and_constant_effects() {
    for (effect, truth) in [
        (EffectPath::Constant(0.0), 0.0),
        (EffectPath::Constant(5.0), 5.0),
    ] {
        let s = noiseless(1, 2, effect);
        let grid = full_mc_estimate(&s.panel, small_lambda(&s.panel), &tight_solver(), "full-mc")
            .unwrap()
            .grid;
        let worst = grid
            .treated()
            .map(|e| (e.estimate - truth).abs())
            .fold(0.0, f64::max);
        assert!(
            worst < 1e-3 * scale(&s),
            "worst {worst} scale {}",
            scale(&s)
        );
    }
}

#[test]
fn empty_treatment_gives_empty_grid() {
    let p = Panel::from_matrix(DMatrix::from_element(3, 4, 1.0), vec![None; 3]).unwrap();
    let est = full_mc_estimate(&p, 0.1, &SoftImputeOptions::default(), "full-mc").unwrap();
    assert!(est.grid.is_empty());
    assert!(est.fit.is_none());
}

#[test]
fn cy_recovers_zero_effects() {
    let s = noiseless(2, 2, EffectPath::Constant(0.0));
    let opts = CyOptions {
        placebo_horizon: Some(2),
        solver: tight_solver(),
        ..Default::default()
    };
    let grid = cy_estimate(&s.panel, small_lambda(&s.panel), &opts, "cy").unwrap();
    assert!(grid.inestimable().is_empty());
    assert_eq!(grid.treated().count(), s.panel.mask().n_treated());
    let worst = grid.entries().map(|e| e.estimate.abs()).fold(0.0, f64::max);
    assert!(
        worst < 1e-3 * scale(&s),
        "worst {worst} scale {}",
        scale(&s)
    );
}

#[test]
fn combine_apply_recovers_cohort_truth() {
    let s = noiseless(3, 1, EffectPath::Constant(0.0));
    let lambda = small_lambda(&s.panel);
    let t = s.panel.n_periods();
    for g in s.panel.cohorts() {
        for t0 in [g, t - 1] {
            let att = combine_apply_estimate(&s.panel, lambda, t0, g, &tight_solver()).unwrap();
            assert!(att.abs() < 1e-3 * scale(&s), "g {g} t0 {t0}: {att}");
        }
    }
}

#[test]
fn single_unit_split_matches_full_completion() {
    // One treated unit adopting in the last period and never-treated
    // controls: the only split is the whole panel.
    let s = noiseless(4, 2, EffectPath::Constant(0.0));
    let t = s.panel.n_periods();
    let mut adoption = vec![None; s.panel.n_units()];
    adoption[0] = Some(t - 1);
    let p = s.panel.with_adoption(adoption).unwrap();
    let opts = CyOptions {
        placebos: false,
        solver: SoftImputeOptions::default(),
        ..Default::default()
    };
    let cy = cy_estimate(&p, 0.5, &opts, "cy").unwrap();
    let mc = full_mc_estimate(&p, 0.5, &opts.solver, "full-mc")
        .unwrap()
        .grid;
    let a = cy.get(0, t - 1).unwrap().estimate;
    let b = mc.get(0, t - 1).unwrap().estimate;
    assert!((a - b).abs() < 1e-9, "{a} vs {b}");

    let ca = combine_apply_estimate(&p, 0.5, t - 1, t - 1, &opts.solver).unwrap();
    assert!((ca - a).abs() < 1e-12);
}

#[test]
fn combine_apply_of_identical_rows_matches_per_unit_average() {
    let s = noiseless(5, 2, EffectPath::Constant(0.0));
    let g = 12;
    let mut y = s.panel.outcomes().clone();
    let twin = y.row(0).into_owned();
    y.set_row(1, &twin);
    let mut adoption = vec![None; s.panel.n_units()];
    adoption[0] = Some(g);
    adoption[1] = Some(g);
    let p = Panel::from_matrix(y, adoption).unwrap();
    let lambda = small_lambda(&p);
    let opts = CyOptions {
        placebos: false,
        solver: tight_solver(),
        ..Default::default()
    };
    let per_unit = cy_estimate(&p, lambda, &opts, "cy").unwrap();
    for t0 in [g, g + 3] {
        let mean =
            (per_unit.get(0, t0).unwrap().estimate + per_unit.get(1, t0).unwrap().estimate) / 2.0;
        let ca = combine_apply_estimate(&p, lambda, t0, g, &tight_solver()).unwrap();
        assert!((ca - mean).abs() < 1e-3 * scale(&s), "{ca} vs {mean}");
    }
    let grid = combine_apply_grid(&p, lambda, &opts, "combine-apply").unwrap();
    let ca = combine_apply_estimate(&p, lambda, g, g, &tight_solver()).unwrap();
    assert!((grid.get(0, g).unwrap().estimate - ca).abs() < 1e-12);
}

#[test]
fn split_partition_covers_estimable_cells_once() {
    for seed in 0..4 {
        let s = simulate_panel(&SimConfig {
            n_units: 15,
            n_periods: 10,
            treated_fraction: 0.8,
            min_pre: 2,
            noise_scale: 0.3,
            seed,
            ..Default::default()
        })
        .unwrap();
        let p = &s.panel;
        let mut covered = BTreeSet::new();
        let mut inestimable = BTreeSet::new();
        for g in p.cohorts() {
            for t0 in g..p.n_periods() {
                match cy_split(p, t0, g) {
                    Ok(split) => {
                        assert_eq!(split.columns.last(), Some(&t0));
                        assert!(split.columns[..split.columns.len() - 1]
                            .iter()
                            .all(|&c| c < g));
                        let obs = split.observed();
                        let k = split.treated_rows.len();
                        for r in 0..obs.nrows() {
                            for c in 0..obs.ncols() {
                                let missing = r < k && c == obs.ncols() - 1;
                                assert_eq!(obs[(r, c)], !missing);
                            }
                        }
                        for &i in &split.treated_rows {
                            assert!(covered.insert((i, t0)), "cell ({i},{t0}) in two splits");
                        }
                    }
                    Err(_) => {
                        for i in (0..p.n_units()).filter(|&i| p.adoption()[i] == Some(g)) {
                            inestimable.insert((i, t0));
                        }
                    }
                }
            }
        }
        let mask = p.mask();
        let all: BTreeSet<(usize, usize)> = (0..p.n_units())
            .flat_map(|i| (0..p.n_periods()).map(move |t| (i, t)))
            .filter(|&(i, t)| mask.is_treated(i, t))
            .collect();
        assert!(covered.is_disjoint(&inestimable));
        assert_eq!(&covered | &inestimable, all);

        let opts = CyOptions {
            placebos: false,
            ..Default::default()
        };
        let grid = cy_estimate(p, 0.1, &opts, "cy").unwrap();
        let got: BTreeSet<(usize, usize)> = grid.treated().map(|e| (e.unit, e.period)).collect();
        assert_eq!(got, covered);
        let reported: BTreeSet<(usize, usize)> = grid
            .inestimable()
            .iter()
            .map(|c| (c.unit, c.period))
            .collect();
        assert_eq!(reported, inestimable);
    }
}

#[test]
fn did_two_by_two() {
    let p = Panel::from_matrix(
        DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 5.0]),
        vec![None, Some(1)],
    )
    .unwrap();
    let grid = did_estimate(&p, "did").unwrap();
    assert_eq!(grid.get(1, 1).unwrap().estimate, 1.0);
    assert_eq!(fit_twfe_pooled(&p).unwrap(), 1.0);
}

#[test]
fn did_is_zero_under_parallel_trends() {
    let a = [3.0, -1.0, 0.5, 7.0, 2.0];
    let b = [0.0, 1.5, -2.0, 4.0, 4.5, 9.0];
    let p = Panel::from_matrix(
        DMatrix::from_fn(5, 6, |i, t| a[i] + b[t]),
        vec![Some(2), Some(4), None, Some(3), None],
    )
    .unwrap();
    let grid = did_estimate(&p, "did").unwrap();
    assert!(grid.entries().all(|e| e.estimate.abs() < 1e-12));
    assert!(fit_twfe_pooled(&p).unwrap().abs() < 1e-12);
}

/// Pooled regression of y on unit dummies, period dummies and the treatment
/// indicator, solved through the normal equations.
fn twfe_oracle(p: &Panel) -> f64 {
    let (n, t) = (p.n_units(), p.n_periods());
    let k = 1 + (n - 1) + (t - 1) + 1;
    let mask = p.mask();
    let mut xtx = DMatrix::zeros(k, k);
    let mut xty = DVector::zeros(k);
    for i in 0..n {
        for c in 0..t {
            let mut x = DVector::zeros(k);
            x[0] = 1.0;
            if i > 0 {
                x[i] = 1.0;
            }
            if c > 0 {
                x[n - 1 + c] = 1.0;
            }
            x[k - 1] = if mask.is_treated(i, c) { 1.0 } else { 0.0 };
            xtx += &x * x.transpose();
            xty += &x * p.outcomes()[(i, c)];
        }
    }
    xtx.lu().solve(&xty).unwrap()[k - 1]
}

#[test]
fn pooled_twfe_matches_regression_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..20 {
        let y = DMatrix::from_fn(5, 5, |_, _| rng.random_range(-5.0..5.0));
        let adoption: Vec<Option<usize>> = (0..5)
            .map(|_| {
                let g = rng.random_range(1..7usize);
                (g < 5).then_some(g)
            })
            .collect();
        let p = Panel::from_matrix(y, adoption).unwrap();
        let Ok(tau) = fit_twfe_pooled(&p) else {
            continue;
        };
        let oracle = twfe_oracle(&p);
        assert!((tau - oracle).abs() < 1e-8, "{tau} vs {oracle}");
    }
    let all_treated = Panel::from_matrix(DMatrix::zeros(2, 3), vec![Some(0), Some(0)]).unwrap();
    assert!(fit_twfe_pooled(&all_treated).is_err());
}

#[test]
fn did_ignores_fixed_effect_preprocessing() {
    let s = simulate_panel(&SimConfig {
        noise_scale: 0.7,
        treatment_effect: EffectPath::Ramp {
            start: 1.0,
            slope: 0.5,
        },
        seed: 12,
        ..Default::default()
    })
    .unwrap();
    let levels = EstimatorSpec::new(EstimatorKind::Did, 0.0, false)
        .estimate(&s.panel)
        .unwrap();
    let resid = EstimatorSpec::new(EstimatorKind::Did, 0.0, true)
        .estimate(&s.panel)
        .unwrap();
    assert_eq!(resid.estimator_tag(), "did+fe");
    let a: Vec<_> = levels.entries().collect();
    let b: Vec<_> = resid.entries().collect();
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!((x.unit, x.period), (y.unit, y.period));
        assert!((x.estimate - y.estimate).abs() < 1e-9);
    }
}

#[test]
fn residualized_estimates_ignore_level_shifts() {
    let s = simulate_panel(&SimConfig {
        n_units: 12,
        n_periods: 10,
        noise_scale: 0.5,
        min_pre: 4,
        seed: 13,
        ..Default::default()
    })
    .unwrap();
    let shifted = s
        .panel
        .with_outcomes(s.panel.outcomes().add_scalar(250.0))
        .unwrap();
    for kind in [
        EstimatorKind::FullMc,
        EstimatorKind::Cy,
        EstimatorKind::CombineApply,
        EstimatorKind::Did,
    ] {
        let spec = EstimatorSpec::new(kind, 0.3, true).with_solver(SoftImputeOptions {
            tol: 1e-12,
            max_iter: 20_000,
            init: InitFill::Zeros,
        });
        let a = spec.estimate(&s.panel).unwrap();
        let b = spec.estimate(&shifted).unwrap();
        for (x, y) in a.entries().zip(b.entries()) {
            assert!(
                (x.estimate - y.estimate).abs() < 1e-9,
                "{kind:?}: {} vs {}",
                x.estimate,
                y.estimate
            );
        }
    }
}

#[test]
fn factor_selection_breaks_did_pretrends_but_not_completion() {
    let s = simulate_panel(&SimConfig {
        n_units: 40,
        n_periods: 20,
        treated_fraction: 0.3,
        min_pre: 10,
        adoption_mechanism: AdoptionMechanism::FactorSelected,
        seed: 6,
        ..Default::default()
    })
    .unwrap();
    let placebo_mean = |grid: &mcpanel::estimators::EffectGrid| {
        let v: Vec<f64> = grid
            .entries()
            .filter(|e| e.kind == CellKind::PlaceboPre)
            .map(|e| e.estimate.abs())
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let did = did_estimate(&s.panel, "did").unwrap();
    let mc = full_mc_estimate(&s.panel, small_lambda(&s.panel), &tight_solver(), "full-mc")
        .unwrap()
        .grid;
    let (d, m) = (placebo_mean(&did), placebo_mean(&mc));
    assert!(d > 0.1 * scale(&s), "did placebo {d}");
    assert!(m < 1e-3 * scale(&s), "mc placebo {m}");
}

#[test]
fn grids_carry_tags_and_lambda() {
    let s = simulate_panel(&SimConfig::default()).unwrap();
    let spec = EstimatorSpec::new(EstimatorKind::FullMc, 0.25, false);
    let g = spec.estimate(&s.panel).unwrap();
    assert_eq!(g.estimator_tag(), "full-mc");
    assert_eq!(g.lambda_used(), Some(0.25));
    let csv = String::from_utf8(g.to_csv().unwrap()).unwrap();
    assert!(csv.starts_with("unit,period,event_time,cell_kind,estimate,estimator_tag"));
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",full-mc")));
    assert!(EstimatorSpec::new(EstimatorKind::Did, 0.0, false)
        .estimate(&s.panel)
        .unwrap()
        .lambda_used()
        .is_none());
}
