//! The full analysis on the right-to-carry state panel: data summary, then
//! the levels and residualized pipelines with full-matrix completion, the
//! split estimator and DiD.
//!
//! ```text
//! cargo run --release --example rtc_pipeline -- path/to/rtc_panel.csv [out_dir]
//! ```
//!
//! The CSV needs `unit,period,outcome,adoption` columns (rename with the
//! `RTC_*_COL` variables, see the README).

use std::fs::File;
use std::path::PathBuf;

use mcpanel::estimators::EstimatorKind;
use mcpanel::panel::{load_panel, AdoptionColumn, Schema};
use mcpanel::pipeline::{run_on_panel, write_outputs, RunConfig};
use mcpanel::report::summarize_data;

fn schema() -> Schema {
    let var = |k: &str, d: &str| std::env::var(k).unwrap_or_else(|_| d.to_string());
    let adoption = var("RTC_ADOPTION_COL", "adoption");
    Schema {
        unit: var("RTC_UNIT_COL", "unit"),
        period: var("RTC_PERIOD_COL", "period"),
        outcome: var("RTC_OUTCOME_COL", "outcome"),
        adoption: if var("RTC_ADOPTION_KIND", "period") == "indicator" {
            AdoptionColumn::Indicator(adoption)
        } else {
            AdoptionColumn::Period(adoption)
        },
    }
}

fn main() -> mcpanel::Result<()> {
    let mut args = std::env::args().skip(1);
    let Some(input) = args.next() else {
        eprintln!("usage: rtc_pipeline <rtc_panel.csv> [out_dir]");
        std::process::exit(2);
    };
    let out = PathBuf::from(args.next().unwrap_or_else(|| "rtc_out".into()));
    let panel = load_panel(File::open(&input)?, &schema())?;

    let report = summarize_data(&panel, Some(8))?;
    println!(
        "{} states x {} years ({}-{}); retained {} at 8 pre-periods, excluded {:?}",
        report.n_units,
        report.n_periods,
        report.first_period,
        report.last_period,
        report.retained.len(),
        report.excluded
    );
    println!(
        "mean within-state range {:.1} (retained {:.1}); adoption span {:?} years",
        report.mean_range, report.mean_range_retained, report.adoption_span
    );

    for residualize in [false, true] {
        let config = RunConfig {
            estimators: vec![EstimatorKind::FullMc, EstimatorKind::Cy, EstimatorKind::Did],
            residualize,
            min_pre: Some(8),
            k_min: -20,
            k_max: 10,
            output_dir: out.join(if residualize {
                "residualized"
            } else {
                "levels"
            }),
            ..Default::default()
        };
        let output = run_on_panel(&config, &panel)?;
        write_outputs(&output, &config.output_dir)?;
        let s = &output.summary;
        println!(
            "\n{}: lambda {:.3?}, condition number {:.1?}",
            if residualize {
                "residualized"
            } else {
                "levels"
            },
            s.chosen_lambda,
            s.condition_number
        );
        for (tag, e) in &s.estimators {
            println!(
                "  {tag:<12} mean post effect {:>8.2?}   pre-trend max {:>8.2?}",
                e.mean_post_effect,
                e.pretrend.map(|p| p.max_abs)
            );
        }
    }
    println!("\nresults in {}", out.display());
    Ok(())
}
