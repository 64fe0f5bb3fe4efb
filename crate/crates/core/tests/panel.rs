use mcpanel::panel::{
    build_mask, filter_min_pretreatment, fit_fixed_effects, load_panel, residualize, write_panel,
    Schema,
};
use mcpanel::simulate::{simulate_panel, AdoptionMechanism, SimConfig};
use mcpanel::{Error, Panel};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

/// Least squares for `y = mu + a_i + b_t` over the observed cells, with the
/// first unit and first period as reference levels. Returns the fitted
/// surface on the full grid.
fn normal_equations_fit(y: &DMatrix<f64>, observed: &DMatrix<bool>) -> DMatrix<f64> {
    let (n, t) = y.shape();
    let p = 1 + (n - 1) + (t - 1);
    let design_row = |i: usize, c: usize| {
        let mut x = DVector::zeros(p);
        x[0] = 1.0;
        if i > 0 {
            x[i] = 1.0;
        }
        if c > 0 {
            x[n - 1 + c] = 1.0;
        }
        x
    };
    let mut xtx = DMatrix::zeros(p, p);
    let mut xty = DVector::zeros(p);
    for i in 0..n {
        for c in 0..t {
            if observed[(i, c)] {
                let x = design_row(i, c);
                xtx += &x * x.transpose();
                xty += &x * y[(i, c)];
            }
        }
    }
    let beta = xtx.cholesky().expect("full rank design").solve(&xty);
    DMatrix::from_fn(n, t, |i, c| design_row(i, c).dot(&beta))
}

fn three_by_three() -> Panel {
    let y = DMatrix::from_row_slice(3, 3, &[4.0, 7.5, 6.0, 2.0, 3.0, 9.0, -1.0, 2.5, 0.5]);
    Panel::from_matrix(y, vec![Some(2), None, None]).unwrap()
}

#[test]
fn fixed_effects_match_normal_equations() {
    let p = three_by_three();
    let mask = build_mask(&p);
    let fe = fit_fixed_effects(&p, &mask).unwrap();
    let oracle = normal_equations_fit(p.outcomes(), &mask.untreated());
    for i in 0..3 {
        for c in 0..3 {
            assert!(
                (fe.fitted(i, c) - oracle[(i, c)]).abs() < 1e-8,
                "cell ({i},{c})"
            );
        }
    }
    assert!(fe.unit_effects.iter().sum::<f64>().abs() < 1e-12);
    assert!(fe.time_effects.iter().sum::<f64>().abs() < 1e-12);
}

#[test]
fn three_by_three_residuals_frozen() {
    // Fitted surface from `normal_equations_fit` on the untreated cells,
    // subtracted from every cell.
    let p = three_by_three();
    let fe = fit_fixed_effects(&p, &build_mask(&p)).unwrap();
    let r = residualize(&p, &fe).unwrap();
    let oracle = normal_equations_fit(p.outcomes(), &build_mask(&p).untreated());
    let expected = p.outcomes() - oracle;
    assert!((r.outcomes() - &expected).abs().max() < 1e-8);
    // Hand solution (numpy lstsq, in 24ths where exact).
    let frozen = [
        -10.0 / 24.0,
        10.0 / 24.0,
        -2.875,
        -7.0 / 24.0,
        -47.0 / 24.0,
        2.25,
        17.0 / 24.0,
        37.0 / 24.0,
        -2.25,
    ];
    for (k, want) in frozen.iter().enumerate() {
        assert!(
            (r.outcomes()[(k / 3, k % 3)] - want).abs() < 1e-8,
            "cell {k}"
        );
    }
}

#[test]
fn fixed_effects_match_oracle_on_staggered_panels() {
    for seed in 0..5 {
        let s = simulate_panel(&SimConfig {
            n_units: 12,
            n_periods: 9,
            noise_scale: 1.0,
            min_pre: 3,
            seed,
            ..Default::default()
        })
        .unwrap();
        let mask = build_mask(&s.panel);
        let fe = fit_fixed_effects(&s.panel, &mask).unwrap();
        let oracle = normal_equations_fit(s.panel.outcomes(), &mask.untreated());
        for i in 0..12 {
            for c in 0..9 {
                assert!((fe.fitted(i, c) - oracle[(i, c)]).abs() < 1e-8);
            }
        }
    }
}

#[test]
fn residualizing_twice_is_idempotent() {
    let s = simulate_panel(&SimConfig {
        noise_scale: 0.5,
        seed: 9,
        ..Default::default()
    })
    .unwrap();
    let mask = build_mask(&s.panel);
    let fe = fit_fixed_effects(&s.panel, &mask).unwrap();
    let r = residualize(&s.panel, &fe).unwrap();
    let again = fit_fixed_effects(&r, &mask).unwrap();
    let worst = again
        .unit_effects
        .iter()
        .chain(&again.time_effects)
        .chain(std::iter::once(&again.grand_mean))
        .fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(worst < 1e-6, "{worst}");
    assert_eq!(r.adoption(), s.panel.adoption());
}

#[test]
fn period_without_controls_is_inestimable() {
    let p = Panel::from_matrix(DMatrix::zeros(2, 3), vec![Some(1), Some(2)]).unwrap();
    match fit_fixed_effects(&p, &build_mask(&p)) {
        Err(Error::InestimableEffect { what }) => assert!(what.contains("period"), "{what}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn minimum_pretreatment_filter() {
    let y = DMatrix::from_fn(3, 12, |i, t| (i * 12 + t) as f64);
    let p = Panel::from_matrix(y, vec![Some(1), Some(9), None]).unwrap();
    let f = filter_min_pretreatment(&p, 5).unwrap();
    assert_eq!(f.excluded, vec!["u0".to_string()]);
    assert_eq!(f.panel.n_units(), 2);
    assert_eq!(f.panel.outcomes().row(0), p.outcomes().row(1));
    assert_eq!(f.panel.outcomes().row(1), p.outcomes().row(2));

    let never = Panel::from_matrix(DMatrix::zeros(2, 4), vec![None, None]).unwrap();
    let f = filter_min_pretreatment(&never, 3).unwrap();
    assert!(f.excluded.is_empty());
    assert_eq!(f.panel, never);

    let all_early = Panel::from_matrix(DMatrix::zeros(1, 4), vec![Some(1)]).unwrap();
    assert!(matches!(
        filter_min_pretreatment(&all_early, 3),
        Err(Error::EmptyPanel)
    ));
}

#[test]
fn csv_rejects_bad_inputs() {
    let schema = Schema::default();
    let missing = "unit,period,outcome,adoption\na,2000,1.0,\na,2001,2.0,\nb,2000,3.0,2001\n";
    assert!(matches!(
        load_panel(missing.as_bytes(), &schema),
        Err(Error::UnbalancedPanel { .. })
    ));
    let bad_number = "unit,period,outcome,adoption\na,2000,x,\n";
    assert!(matches!(
        load_panel(bad_number.as_bytes(), &schema),
        Err(Error::Parse { row: 2, .. })
    ));
    let bad_adoption = "unit,period,outcome,adoption\na,2000,1.0,1990\n";
    assert!(matches!(
        load_panel(bad_adoption.as_bytes(), &schema),
        Err(Error::InvalidAdoption { .. })
    ));
    let minimal = "unit,period,outcome,adoption\nz,1999,4.0,Inf\n";
    let p = load_panel(minimal.as_bytes(), &schema).unwrap();
    assert_eq!((p.n_units(), p.n_periods()), (1, 1));
    assert_eq!(build_mask(&p).n_treated(), 0);
}

fn arbitrary_panel() -> impl Strategy<Value = Panel> {
    (1usize..7, 1usize..8).prop_flat_map(|(n, t)| {
        (
            proptest::collection::vec(-1e6f64..1e6, n * t),
            proptest::collection::vec(proptest::option::of(0..t), n),
        )
            .prop_map(move |(v, a)| Panel::from_matrix(DMatrix::from_vec(n, t, v), a).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn mask_rows_are_monotone(p in arbitrary_panel()) {
        let m = build_mask(&p);
        for i in 0..p.n_units() {
            for t in 1..p.n_periods() {
                prop_assert!(m.is_treated(i, t - 1) <= m.is_treated(i, t));
            }
            if p.adoption()[i].is_none() {
                prop_assert!((0..p.n_periods()).all(|t| !m.is_treated(i, t)));
            }
        }
    }

    #[test]
    fn csv_round_trip(p in arbitrary_panel()) {
        let mut buf = Vec::new();
        write_panel(&p, &mut buf).unwrap();
        let back = load_panel(buf.as_slice(), &Schema::default()).unwrap();
        prop_assert_eq!(back, p);
    }

    #[test]
    fn filter_keeps_rows(p in arbitrary_panel(), min_pre in 1usize..5) {
        if let Ok(f) = filter_min_pretreatment(&p, min_pre) {
            for (r, id) in f.panel.unit_ids().iter().enumerate() {
                let src = p.unit_ids().iter().position(|u| u == id).unwrap();
                prop_assert_eq!(f.panel.outcomes().row(r), p.outcomes().row(src));
                prop_assert_eq!(f.panel.adoption()[r], p.adoption()[src]);
            }
        }
    }
}

#[test]
fn simulation_is_deterministic_and_low_rank() {
    for mechanism in [
        AdoptionMechanism::RandomStaggered,
        AdoptionMechanism::FactorSelected,
    ] {
        let cfg = SimConfig {
            adoption_mechanism: mechanism,
            seed: 42,
            ..Default::default()
        };
        let a = simulate_panel(&cfg).unwrap();
        let b = simulate_panel(&cfg).unwrap();
        assert_eq!(a.panel, b.panel);
        let sv = mcpanel::lowrank::singular_values(a.panel.outcomes()).unwrap();
        assert!(sv[cfg.rank] < 1e-8 * sv[0]);
    }
}
