//! Command-line workflow for counterfactual metric attribution: simulate
//! benchmark panels, fit structural equations, detect outlier days,
//! attribute changes, and reproduce the accuracy experiment.

mod commands;
mod manifest;

use anyhow::{bail, Result};
use cfattrib_core::simulation::InterventionKind;
use clap::{Args, Parser, Subcommand};
use commands::*;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "cfattrib",
    version,
    about = "Attribute changes in an aggregate metric to its inputs via counterfactuals on a fitted structural model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic benchmark panel (optionally intervened).
    Simulate(SimulateCmd),
    /// Fit structural equations for a panel and write the model summary.
    Fit(FitCmd),
    /// Flag days outside the prediction interval of a daily model.
    Detect(DetectCmd),
    /// Run the attribution pipeline for one day against a reference day.
    Attribute(AttributeCmd),
    /// Reproduce the attribution-accuracy experiment on synthetic data.
    Bench(BenchCmd),
    /// Convert a stored attribution report to CSV.
    Report(ReportCmd),
}

#[derive(Args)]
struct SimulateCmd {
    /// Density noise standard deviation.
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    categories: usize,
    #[arg(long, default_value_t = 1000)]
    days: usize,
    /// Apply a ground-truth intervention: config1 (ad demand) or config2
    /// (query volume).
    #[arg(long)]
    intervene: Option<String>,
    /// Scale factors for the first and second chosen categories.
    #[arg(long, default_value = "2.0,2.1")]
    factors: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitCmd {
    /// Graph JSON; defaults to the standard panel graph.
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    /// ols, mlp or pooled.
    #[arg(long, default_value = "ols")]
    regressor: String,
    /// Train on days up to (excluding) this day; defaults to the whole panel.
    #[arg(long)]
    train_end: Option<usize>,
    /// Add the demand/volume ratio as an engineered feature.
    #[arg(long)]
    ratio_feature: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DetectCmd {
    #[arg(long)]
    data: PathBuf,
    /// Prediction-interval coverage level.
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// mlp (default, the daily-model comparison winner) or ols.
    #[arg(long, default_value = "mlp")]
    regressor: String,
    /// Evaluation starts here; defaults to 70% of the panel.
    #[arg(long)]
    train_end: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the daily-model comparison table.
    #[arg(long)]
    compare: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AttributeCmd {
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Day to attribute.
    #[arg(long)]
    day: Option<usize>,
    /// lag7, lag14 or day:N.
    #[arg(long, default_value = "lag7")]
    reference: String,
    /// Comma list: cf_shapley_mc, cf_shapley_exact, shapley_direct,
    /// do_shapley, deltas.
    #[arg(long, default_value = "cf_shapley_mc")]
    method: String,
    /// Monte Carlo permutations.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    /// Marginal resamples for do_shapley.
    #[arg(long, default_value_t = 32)]
    resamples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// ols, mlp or pooled.
    #[arg(long, default_value = "pooled")]
    regressor: String,
    #[arg(long)]
    ratio_feature: bool,
    /// Rerun a previous attribution from its manifest.
    #[arg(long)]
    from_manifest: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchCmd {
    /// Comma list of methods to score.
    #[arg(long, default_value = "cf_shapley_mc")]
    methods: String,
    /// Comma list: config1, config2.
    #[arg(long, default_value = "config1,config2")]
    configs: String,
    #[arg(long, default_value = "0.1,1,10")]
    sigmas: String,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 32)]
    resamples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportCmd {
    /// Stored attribution JSON.
    #[arg(long)]
    input: PathBuf,
    /// scores or rollup.
    #[arg(long, default_value = "scores")]
    kind: String,
    #[arg(long)]
    out: PathBuf,
}

fn parse_intervention(text: &str) -> Result<InterventionKind> {
    match text {
        "config1" | "ad_demand" => Ok(InterventionKind::AdDemand),
        "config2" | "query_volume" => Ok(InterventionKind::QueryVolume),
        other => bail!("intervention must be config1 or config2, got '{other}'"),
    }
}

fn parse_factors(text: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 2 {
        bail!("factors must be two comma-separated numbers");
    }
    Ok((parts[0].trim().parse()?, parts[1].trim().parse()?))
}

fn comma_list(text: &str) -> Vec<String> {
    text.split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

fn configure_threads() {
    if let Ok(value) = std::env::var("CFATTRIB_THREADS") {
        if let Ok(n) = value.trim().parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    configure_threads();
    if let Err(err) = run() {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate(cmd) => run_simulate(&SimulateArgs {
            sigma: cmd.sigma,
            seed: cmd.seed,
            categories: cmd.categories,
            days: cmd.days,
            intervene: cmd
                .intervene
                .as_deref()
                .map(parse_intervention)
                .transpose()?,
            factors: parse_factors(&cmd.factors)?,
            out: cmd.out,
        }),
        Command::Fit(cmd) => run_fit(&FitArgs {
            graph: cmd.graph,
            data: cmd.data,
            regressor: FitKind::parse(&cmd.regressor)?,
            train_end: cmd.train_end,
            ratio_feature: cmd.ratio_feature,
            seed: cmd.seed,
            out: cmd.out,
        }),
        Command::Detect(cmd) => run_detect(&DetectArgs {
            data: cmd.data,
            level: cmd.level,
            regressor: FitKind::parse(&cmd.regressor)?,
            train_end: cmd.train_end,
            seed: cmd.seed,
            compare: cmd.compare,
            out: cmd.out,
        }),
        Command::Attribute(cmd) => {
            let args = match &cmd.from_manifest {
                Some(path) => attribute_args_from_manifest(path, cmd.out.clone())?,
                None => {
                    let (Some(data), Some(day)) = (cmd.data.clone(), cmd.day) else {
                        bail!("attribute needs --data and --day (or --from-manifest)");
                    };
                    AttributeArgs {
                        graph: cmd.graph.clone(),
                        data,
                        day,
                        reference: ReferenceRule::parse(&cmd.reference)?,
                        methods: comma_list(&cmd.method),
                        samples: cmd.samples,
                        resamples: cmd.resamples,
                        seed: cmd.seed,
                        regressor: FitKind::parse(&cmd.regressor)?,
                        ratio_feature: cmd.ratio_feature,
                        out: cmd.out.clone(),
                    }
                }
            };
            run_attribute(&args)
        }
        Command::Bench(cmd) => run_bench(&BenchArgs {
            methods: comma_list(&cmd.methods),
            configs: comma_list(&cmd.configs)
                .iter()
                .map(|c| parse_intervention(c))
                .collect::<Result<_>>()?,
            sigmas: comma_list(&cmd.sigmas)
                .iter()
                .map(|s| s.parse::<f64>().map_err(Into::into))
                .collect::<Result<_>>()?,
            trials: cmd.trials,
            samples: cmd.samples,
            resamples: cmd.resamples,
            seed: cmd.seed,
            out: cmd.out,
        }),
        Command::Report(cmd) => run_report(&ReportArgs {
            input: cmd.input,
            kind: cmd.kind,
            out: cmd.out,
        }),
    }
}
