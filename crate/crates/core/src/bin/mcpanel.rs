use std::fs::File;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mcpanel::estimators::EstimatorKind;
use mcpanel::io::write_atomic;
use mcpanel::lowrank::{cross_validate, default_lambda_grid, CvConfig};
use mcpanel::panel::{load_panel, write_panel};
use mcpanel::pipeline::{run, RunConfig};
use mcpanel::report::summarize_data;
use mcpanel::simulate::{simulate_panel, SimConfig};
use mcpanel::Error;

#[derive(Parser)]
#[command(
    name = "mcpanel",
    version,
    about = "Matrix completion estimators for staggered-adoption panels"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated estimators: full-mc, cy, combine-apply, did, twfe-pooled.
    #[arg(long)]
    estimators: Option<String>,
    /// Residualize unit and period effects before estimation.
    #[arg(long)]
    residualize: bool,
    /// Skip bootstrap intervals.
    #[arg(long)]
    no_bootstrap: bool,
    /// Input CSV; overrides the configured input.
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Full estimation pipeline.
    Run(Common),
    /// Descriptive report of the input panel.
    Summarize(Common),
    /// Write a simulated panel (long CSV) from a JSON SimConfig.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validate the regularization level only.
    Cv(Common),
}

fn resolve(common: &Common) -> Result<RunConfig, Error> {
    let mut config = match &common.config {
        Some(path) => RunConfig::from_json_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.output_dir = out.clone();
    }
    if let Some(input) = &common.input {
        config.input = input.clone();
    }
    if let Some(list) = &common.estimators {
        config.estimators = list
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(str::parse::<EstimatorKind>)
            .collect::<Result<_, _>>()?;
    }
    if common.residualize {
        config.residualize = true;
    }
    if common.no_bootstrap {
        config.bootstrap_replicates = 0;
    }
    config.validate()?;
    if config.input.as_os_str().is_empty() {
        return Err(Error::InvalidConfig("no input file given".into()));
    }
    Ok(config)
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run(common) => {
            let config = resolve(&common)?;
            let output = run(&config)?;
            println!("{}", serde_json::to_string_pretty(&output.summary)?);
        }
        Command::Summarize(common) => {
            let config = resolve(&common)?;
            let panel = load_panel(File::open(&config.input)?, &config.schema)?;
            let report = summarize_data(&panel, config.min_pre)?;
            let json = serde_json::to_vec_pretty(&report)?;
            if common.out.is_some() {
                write_atomic(&config.output_dir.join("data_summary.json"), &json)?;
            }
            println!("{}", String::from_utf8_lossy(&json));
        }
        Command::Simulate { config, seed, out } => {
            let mut sim: SimConfig = match config {
                Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
                None => SimConfig::default(),
            };
            if let Some(seed) = seed {
                sim.seed = seed;
            }
            let simulated = simulate_panel(&sim)?;
            let mut bytes = Vec::new();
            write_panel(&simulated.panel, &mut bytes)?;
            write_atomic(&out, &bytes)?;
        }
        Command::Cv(common) => {
            let config = resolve(&common)?;
            let panel = load_panel(File::open(&config.input)?, &config.schema)?;
            let panel = match config.min_pre {
                Some(m) => mcpanel::panel::filter_min_pretreatment(&panel, m)?.panel,
                None => panel,
            };
            let prepared = config.spec(EstimatorKind::Did, 0.0).prepare(&panel)?;
            let observed = panel.mask().untreated();
            let spec = config.spec(EstimatorKind::FullMc, 0.0);
            let grid = if config.lambda_grid.is_empty() {
                default_lambda_grid(
                    prepared.outcomes(),
                    &observed,
                    config.lambda_points,
                    config.lambda_ratio,
                )?
            } else {
                config.lambda_grid.clone()
            };
            let report = cross_validate(
                prepared.outcomes(),
                &observed,
                &CvConfig {
                    lambda_grid: grid,
                    folds: config.cv_folds,
                    scheme: config.cv_scheme,
                    seed: config.seed,
                    holdout_periods: config.cv_holdout_periods,
                    solver: spec.cy.solver,
                },
            )?;
            write_atomic(&config.output_dir.join("cv_report.csv"), &report.to_csv()?)?;
            let summary = serde_json::to_vec_pretty(&report.summary_json())?;
            write_atomic(&config.output_dir.join("cv_summary.json"), &summary)?;
            println!("{}", String::from_utf8_lossy(&summary));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.exit_code();
            let message = serde_json::json!({
                "error": e.to_string(),
                "class": format!("{:?}", e.class()).to_lowercase(),
                "exit_code": code,
            });
            eprintln!("{message}");
            ExitCode::from(code as u8)
        }
    }
}
