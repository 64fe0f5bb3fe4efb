use mcpanel::aggregate::aggregate_event;
use mcpanel::diagnostics::{gap_series, in_time_placebo, pretrend_summary};
use mcpanel::estimators::{did_estimate, CellKind, EstimatorKind, EstimatorSpec};
use mcpanel::lowrank::{lambda_max, InitFill, SoftImputeOptions};
use mcpanel::simulate::{simulate_panel, SimConfig, Simulated};
use mcpanel::{Error, Panel};
use nalgebra::DMatrix;

fn noiseless(seed: u64) -> Simulated {
    simulate_panel(&SimConfig {
        n_units: 40,
        n_periods: 20,
        treated_fraction: 0.3,
        min_pre: 10,
        seed,
        ..Default::default()
    })
    .unwrap()
}

fn scale(s: &Simulated) -> f64 {
    s.low_rank.norm() / (s.low_rank.len() as f64).sqrt()
}

fn tight_full_mc(p: &Panel) -> EstimatorSpec {
    let lambda = 2e-5 * lambda_max(p.outcomes(), &p.mask().untreated()).unwrap();
    EstimatorSpec::new(EstimatorKind::FullMc, lambda, false).with_solver(SoftImputeOptions {
        tol: 1e-12,
        max_iter: 200_000,
        init: InitFill::ColumnMeans,
    })
}

#[test]
fn noiseless_gap_series_are_flat_before_adoption() {
    let s = noiseless(10);
    let grid = tight_full_mc(&s.panel).estimate(&s.panel).unwrap();
    for i in s.panel.treated_units() {
        let series = gap_series(&grid, i).unwrap();
        assert_eq!(series.len(), s.panel.n_periods());
        assert!(series.windows(2).all(|w| w[0].0 < w[1].0));
        for (k, v) in series.into_iter().filter(|(k, _)| *k < 0) {
            assert!(v.abs() < 1e-3 * scale(&s), "unit {i} k {k}: {v}");
        }
    }
    let never = (0..s.panel.n_units())
        .find(|&i| s.panel.adoption()[i].is_none())
        .unwrap();
    assert!(matches!(gap_series(&grid, never), Err(Error::NoGap(_))));
}

#[test]
fn full_completion_placebo_is_near_zero_on_noiseless_data() {
    let s = noiseless(11);
    let report = in_time_placebo(&s.panel, &tight_full_mc(&s.panel), 3).unwrap();
    assert!(
        report.mean_abs < 1e-3 * scale(&s),
        "{} vs {}",
        report.mean_abs,
        scale(&s)
    );
    assert!(report
        .cells
        .iter()
        .all(|c| c.period < c.true_adoption_column));
    assert!(report.cells.iter().all(|c| (0..3).contains(&c.k)));
    assert!(report.warning.contains("over-fitting"));
}

#[test]
fn additive_panel_placebos_vanish_for_did() {
    let a = [1.0, 4.0, -2.0, 0.5, 3.0, 8.0];
    let b = [0.0, 2.0, 1.0, 5.0, 3.0, 4.0, 9.0, 7.0];
    let p = Panel::from_matrix(
        DMatrix::from_fn(6, 8, |i, t| a[i] + b[t]),
        vec![Some(5), Some(6), None, Some(4), None, Some(2)],
    )
    .unwrap();
    let spec = EstimatorSpec::new(EstimatorKind::Did, 0.0, false);
    for shift in 1..4 {
        let r = in_time_placebo(&p, &spec, shift).unwrap();
        assert!(r.max_abs < 1e-12);
        assert!(r.cells.iter().all(|c| c.period < c.true_adoption_column));
    }
    let r = in_time_placebo(&p, &spec, 2).unwrap();
    assert_eq!(r.excluded, vec!["u5".to_string()]);
    let csv = String::from_utf8(r.to_csv().unwrap()).unwrap();
    assert!(csv.starts_with("unit,k,estimate,true_adoption,placebo_adoption\n"));
}

#[test]
fn duplicated_last_pre_period_gives_null_shift_one_placebo() {
    // Repeating a unit's last pre-period column means the shift-1 placebo
    // compares that column with its copy: DiD must return exactly its own
    // k = -1 normalization, zero.
    let s = simulate_panel(&SimConfig {
        n_units: 10,
        n_periods: 8,
        noise_scale: 1.0,
        min_pre: 3,
        seed: 4,
        ..Default::default()
    })
    .unwrap();
    let g = 5;
    let y = s.panel.outcomes();
    let dup = DMatrix::from_fn(10, 9, |i, t| {
        let src = if t < g { t } else { t - 1 };
        y[(i, src)]
    });
    let adoption: Vec<Option<usize>> = (0..10).map(|i| (i < 3).then_some(g + 1)).collect();
    let p = Panel::from_matrix(dup, adoption).unwrap();
    let spec = EstimatorSpec::new(EstimatorKind::Did, 0.0, false);
    let r = in_time_placebo(&p, &spec, 1).unwrap();
    assert_eq!(r.cells.len(), 3);
    assert!(r.cells.iter().all(|c| c.k == 0 && c.estimate.abs() < 1e-12));
}

#[test]
fn factor_confounding_shows_in_did_pretrends() {
    let s = simulate_panel(&SimConfig {
        n_units: 40,
        n_periods: 20,
        treated_fraction: 0.3,
        min_pre: 10,
        adoption_mechanism: mcpanel::simulate::AdoptionMechanism::FactorSelected,
        seed: 6,
        ..Default::default()
    })
    .unwrap();
    let did = aggregate_event(&did_estimate(&s.panel, "did").unwrap(), -8, 5).unwrap();
    let mc_grid = tight_full_mc(&s.panel).estimate(&s.panel).unwrap();
    assert!(mc_grid.entries().any(|e| e.kind == CellKind::PlaceboPre));
    let mc = aggregate_event(&mc_grid, -8, 5).unwrap();
    let (d, m) = (
        pretrend_summary(&did).unwrap(),
        pretrend_summary(&mc).unwrap(),
    );
    assert!(d.max_abs > 3.0 * m.max_abs, "did {d:?} mc {m:?}");
}
