//! Subcommand implementations. Each stage writes its artifacts plus a run
//! manifest; identical inputs, parameters and seed reproduce identical bytes.

use crate::manifest::Manifest;
use anyhow::{bail, Context, Result};
use cfattrib_core::attribution::{
    cf_shapley_exact, cf_shapley_mc, delta_baselines, do_shapley, rollup_by_category,
    shapley_direct, AttributionResult, DeltaMode,
};
use cfattrib_core::counterfactual::CounterfactualSession;
use cfattrib_core::features::{FeaturePlan, FeatureTerm};
use cfattrib_core::outlier::{default_daily_lags, detect_outliers, fit_daily_model};
use cfattrib_core::regressor::{MlpConfig, RegressorKind};
use cfattrib_core::report::{
    accuracy_csv, outlier_csv, outlier_json, round_sig, write_text, AttributionReport,
};
use cfattrib_core::scm::{fit_scm, AnalyticRegistry, FitConfig, FittedScm};
use cfattrib_core::simulation::{
    apply_intervention, fit_benchmark_scm, generate_dataset, run_accuracy_experiment, BenchMethod,
    ExperimentConfig, InterventionKind, InterventionSpec, SimulationConfig, BURN_IN_DAYS,
};
use cfattrib_core::{CausalGraph, PanelDataset};
use serde_json::json;
use std::path::{Path, PathBuf};

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// How the reference day is chosen for attribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceRule {
    Lag7,
    Lag14,
    Explicit(usize),
}

impl ReferenceRule {
    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "lag7" => Ok(ReferenceRule::Lag7),
            "lag14" => Ok(ReferenceRule::Lag14),
            other => {
                let day = other
                    .strip_prefix("day:")
                    .and_then(|d| d.parse::<usize>().ok())
                    .with_context(|| {
                        format!("reference must be lag7, lag14 or day:N, got '{other}'")
                    })?;
                Ok(ReferenceRule::Explicit(day))
            }
        }
    }

    pub fn resolve(&self, day: usize) -> Result<usize> {
        let t_ref = match self {
            ReferenceRule::Lag7 => {
                if day < 7 {
                    bail!("day {day} has no day seven days earlier");
                }
                day - 7
            }
            ReferenceRule::Lag14 => {
                if day < 14 {
                    bail!("day {day} has no day fourteen days earlier");
                }
                day - 14
            }
            ReferenceRule::Explicit(r) => *r,
        };
        if t_ref >= day {
            bail!("reference day {t_ref} must precede the attributed day {day}");
        }
        Ok(t_ref)
    }

    pub fn describe(&self) -> String {
        match self {
            ReferenceRule::Lag7 => "lag7".to_string(),
            ReferenceRule::Lag14 => "lag14".to_string(),
            ReferenceRule::Explicit(d) => format!("day:{d}"),
        }
    }
}

/// Structural-equation fitting choices exposed on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitKind {
    /// Per-node least squares over parents and lags.
    Ols,
    /// Per-node feed-forward network over parents and lags.
    Mlp,
    /// Pooled structural estimator (ratio form shared across categories);
    /// panel-shaped graphs only.
    Pooled,
}

impl FitKind {
    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "ols" => Ok(FitKind::Ols),
            "mlp" => Ok(FitKind::Mlp),
            "pooled" => Ok(FitKind::Pooled),
            other => bail!("regressor must be ols, mlp or pooled, got '{other}'"),
        }
    }

    pub fn describe(&self) -> &'static str {
        match self {
            FitKind::Ols => "ols",
            FitKind::Mlp => "mlp",
            FitKind::Pooled => "pooled",
        }
    }
}

fn fit_model(
    kind: FitKind,
    panel: &PanelDataset,
    graph: &CausalGraph,
    train_end: usize,
    seed: u64,
    ratio_feature: bool,
) -> Result<FittedScm> {
    if kind == FitKind::Pooled {
        return Ok(fit_benchmark_scm(
            panel,
            BURN_IN_DAYS.min(train_end)..train_end,
        )?);
    }
    let frame = panel.to_frame();
    let regressor = match kind {
        FitKind::Ols => RegressorKind::default(),
        FitKind::Mlp => RegressorKind::Mlp(MlpConfig {
            seed,
            ..MlpConfig::default()
        }),
        FitKind::Pooled => unreachable!(),
    };
    let start = if panel.days() > 2 * BURN_IN_DAYS {
        BURN_IN_DAYS
    } else {
        0
    };
    let mut cfg = FitConfig::new(regressor, start..train_end);
    if ratio_feature {
        for spec in graph.nodes() {
            if spec.kind == cfattrib_core::NodeKind::Learned && spec.parents.len() == 2 {
                let mut terms: Vec<FeatureTerm> =
                    (0..spec.parents.len()).map(FeatureTerm::Parent).collect();
                terms.push(FeatureTerm::Ratio(0, 1));
                terms.extend(spec.lags.iter().map(|&k| FeatureTerm::Lag(k)));
                cfg = cfg.with_plan(spec.name.clone(), FeaturePlan::new(terms));
            }
        }
    }
    Ok(fit_scm(graph, &frame, &cfg, &AnalyticRegistry::default())?)
}

fn model_summary_json(scm: &FittedScm) -> serde_json::Value {
    let mut nodes = serde_json::Map::new();
    for model in scm.models() {
        nodes.insert(
            model.node.clone(),
            json!({
                "features": model.feature_names,
                "residual_scale": round_sig(model.residual_scale),
                "train_rows": model.train_rows,
            }),
        );
    }
    json!({ "nodes": nodes })
}

pub struct SimulateArgs {
    pub sigma: f64,
    pub seed: u64,
    pub categories: usize,
    pub days: usize,
    pub intervene: Option<InterventionKind>,
    pub factors: (f64, f64),
    pub out: PathBuf,
}

pub fn run_simulate(args: &SimulateArgs) -> Result<()> {
    ensure_dir(&args.out)?;
    let config = SimulationConfig {
        categories: args.categories,
        days: args.days,
        noise_std: args.sigma,
        ..SimulationConfig::default()
    };
    let sim = generate_dataset(&config, args.seed)?;
    let (dataset, outcome) = match args.intervene {
        Some(kind) => {
            let mut spec = InterventionSpec::new(kind);
            spec.factors = args.factors;
            let (intervened, outcome) = apply_intervention(&sim, &spec)?;
            (intervened, Some(outcome))
        }
        None => (sim, None),
    };

    let mut manifest = Manifest::new(
        "simulate",
        json!({
            "sigma": args.sigma,
            "seed": args.seed,
            "categories": args.categories,
            "days": args.days,
            "intervene": args.intervene.map(|k| k.name()),
            "factors": [args.factors.0, args.factors.1],
            "truncated_inputs": dataset.truncated_inputs,
            "clamped_densities": dataset.clamped_densities,
        }),
    );

    let panel_path = args.out.join("panel.csv");
    dataset.panel.save_csv(&panel_path)?;
    manifest.record_output(&panel_path)?;

    let graph_path = args.out.join("graph.json");
    dataset.panel.graph(&[1, 7, 14]).save(&graph_path)?;
    manifest.record_output(&graph_path)?;

    if let Some(outcome) = outcome {
        let path = args.out.join("intervention.json");
        let mut text = serde_json::to_string_pretty(&outcome)?;
        text.push('\n');
        std::fs::write(&path, text)?;
        manifest.record_output(&path)?;
        println!(
            "intervened day {}: scaled {} (x{}) and {} (x{}), ground truth {}",
            outcome.target_day,
            outcome.first,
            args.factors.0,
            outcome.second,
            args.factors.1,
            outcome.ground_truth
        );
    }
    manifest.write(&args.out)?;
    println!(
        "wrote {} ({} categories x {} days)",
        panel_path.display(),
        args.categories,
        args.days
    );
    Ok(())
}

pub struct FitArgs {
    pub graph: Option<PathBuf>,
    pub data: PathBuf,
    pub regressor: FitKind,
    pub train_end: Option<usize>,
    pub ratio_feature: bool,
    pub seed: u64,
    pub out: PathBuf,
}

pub fn run_fit(args: &FitArgs) -> Result<()> {
    ensure_dir(&args.out)?;
    let panel = PanelDataset::load_csv(&args.data)?;
    let graph = match &args.graph {
        Some(path) => CausalGraph::load(path)?,
        None => panel.graph(&[1, 7, 14]),
    };
    let train_end = args.train_end.unwrap_or(panel.days());
    let scm = fit_model(
        args.regressor,
        &panel,
        &graph,
        train_end,
        args.seed,
        args.ratio_feature,
    )?;

    let mut manifest = Manifest::new(
        "fit",
        json!({
            "regressor": args.regressor.describe(),
            "train_end": train_end,
            "ratio_feature": args.ratio_feature,
            "seed": args.seed,
        }),
    );
    manifest.record_input(&args.data)?;
    if let Some(g) = &args.graph {
        manifest.record_input(g)?;
    }
    let summary_path = args.out.join("model_summary.json");
    let mut text = serde_json::to_string_pretty(&model_summary_json(&scm))?;
    text.push('\n');
    std::fs::write(&summary_path, text)?;
    manifest.record_output(&summary_path)?;
    manifest.write(&args.out)?;
    println!(
        "fitted {} structural equations -> {}",
        scm.models().count(),
        summary_path.display()
    );
    Ok(())
}

pub struct DetectArgs {
    pub data: PathBuf,
    pub level: f64,
    pub regressor: FitKind,
    pub train_end: Option<usize>,
    pub seed: u64,
    pub compare: bool,
    pub out: PathBuf,
}

pub fn run_detect(args: &DetectArgs) -> Result<()> {
    ensure_dir(&args.out)?;
    let panel = PanelDataset::load_csv(&args.data)?;
    let series = panel.daily_density();
    let train_end = args.train_end.unwrap_or(panel.days() * 7 / 10);
    let regressor = match args.regressor {
        FitKind::Ols => RegressorKind::default(),
        _ => RegressorKind::Mlp(MlpConfig {
            seed: args.seed,
            ..MlpConfig::default()
        }),
    };
    let start = if panel.days() > 2 * BURN_IN_DAYS {
        BURN_IN_DAYS
    } else {
        0
    };
    let model = fit_daily_model(series, &regressor, &default_daily_lags(), start..train_end)?;
    let report = detect_outliers(&model, series, train_end..panel.days(), args.level)?;

    let mut manifest = Manifest::new(
        "detect",
        json!({
            "level": args.level,
            "regressor": args.regressor.describe(),
            "train_end": train_end,
            "seed": args.seed,
        }),
    );
    manifest.record_input(&args.data)?;
    let csv_path = args.out.join("outliers.csv");
    write_text(&csv_path, &outlier_csv(&report)?)?;
    manifest.record_output(&csv_path)?;
    let json_path = args.out.join("outliers.json");
    write_text(&json_path, &outlier_json(&report)?)?;
    manifest.record_output(&json_path)?;

    if args.compare {
        let table = cfattrib_core::outlier::daily_model_comparison(
            series,
            start..train_end,
            train_end..panel.days(),
            args.seed,
        )?;
        let mut text = String::from("model,mean_ape,median_ape,smape,excluded_zero_actuals\n");
        for (name, m) in table {
            text.push_str(&format!(
                "{name},{},{},{},{}\n",
                round_sig(m.mean_ape),
                round_sig(m.median_ape),
                round_sig(m.smape),
                m.excluded_zero_actuals
            ));
        }
        let path = args.out.join("daily_models.csv");
        write_text(&path, &text)?;
        manifest.record_output(&path)?;
    }
    manifest.write(&args.out)?;
    let flagged = report.flagged_days();
    println!(
        "{} of {} evaluated days outside the {:.0}% interval{}",
        flagged.len(),
        report.rows.len(),
        args.level * 100.0,
        if flagged.is_empty() {
            String::new()
        } else {
            format!(": {flagged:?}")
        }
    );
    Ok(())
}

#[derive(Debug, Clone)]
pub struct AttributeArgs {
    pub graph: Option<PathBuf>,
    pub data: PathBuf,
    pub day: usize,
    pub reference: ReferenceRule,
    pub methods: Vec<String>,
    pub samples: usize,
    pub resamples: usize,
    pub seed: u64,
    pub regressor: FitKind,
    pub ratio_feature: bool,
    pub out: PathBuf,
}

/// The full attribution pipeline: validate the query, fit the structural
/// equations, evaluate the requested attributors and write every artifact.
pub fn run_attribute(args: &AttributeArgs) -> Result<()> {
    // the reference must resolve before any fitting happens
    let t_ref = args.reference.resolve(args.day)?;
    ensure_dir(&args.out)?;
    let panel = PanelDataset::load_csv(&args.data)?;
    if args.day >= panel.days() {
        bail!("day {} outside the panel (0..{})", args.day, panel.days());
    }
    let graph = match &args.graph {
        Some(path) => CausalGraph::load(path)?,
        None => panel.graph(&[1, 7, 14]),
    };
    let scm = fit_model(
        args.regressor,
        &panel,
        &graph,
        args.day,
        args.seed,
        args.ratio_feature,
    )?;
    let frame = panel.to_frame();
    let mut session = CounterfactualSession::new(&scm, &frame, args.day, t_ref)?;
    let category_map = panel.category_map();

    let mut manifest = Manifest::new(
        "attribute",
        json!({
            "day": args.day,
            "reference": args.reference.describe(),
            "methods": args.methods,
            "samples": args.samples,
            "resamples": args.resamples,
            "seed": args.seed,
            "regressor": args.regressor.describe(),
            "ratio_feature": args.ratio_feature,
        }),
    );
    manifest.record_input(&args.data)?;
    if let Some(g) = &args.graph {
        manifest.record_input(g)?;
    }

    let summary_path = args.out.join("model_summary.json");
    let mut text = serde_json::to_string_pretty(&model_summary_json(&scm))?;
    text.push('\n');
    std::fs::write(&summary_path, text)?;
    manifest.record_output(&summary_path)?;

    type DirectModel = (
        Vec<String>,
        Vec<Vec<f64>>,
        std::sync::Arc<dyn cfattrib_core::regressor::FittedRegressor>,
    );
    let mut direct: Option<DirectModel> = None;
    let observed_output = frame.value(graph.output(), args.day)?;

    for method in &args.methods {
        let result: AttributionResult = match method.as_str() {
            "cf_shapley_mc" => cf_shapley_mc(&mut session, args.samples, args.seed)?,
            "cf_shapley_exact" => cf_shapley_exact(&mut session)?,
            "shapley_direct" | "do_shapley" => {
                if direct.is_none() {
                    let start = if panel.days() > 2 * BURN_IN_DAYS {
                        BURN_IN_DAYS
                    } else {
                        0
                    };
                    let (names, rows, targets) = direct_design(&panel, start..args.day);
                    let model = RegressorKind::Mlp(MlpConfig {
                        seed: args.seed,
                        ..MlpConfig::default()
                    })
                    .fit(&rows, &targets)?;
                    direct = Some((names, rows, model));
                }
                let (names, rows, model) = direct.as_ref().unwrap();
                let observed = input_values(&panel, names, args.day);
                if method == "shapley_direct" {
                    let reference = input_values(&panel, names, t_ref);
                    shapley_direct(
                        model.as_ref(),
                        names,
                        &observed,
                        &reference,
                        args.samples,
                        args.seed,
                    )?
                } else {
                    do_shapley(
                        model.as_ref(),
                        names,
                        &observed,
                        rows,
                        args.samples,
                        args.seed,
                        args.resamples,
                    )?
                }
            }
            "deltas" => {
                let [ad, qv, product] =
                    delta_baselines(&panel, args.day, t_ref, DeltaMode::Absolute)?;
                for result in [ad, qv, product] {
                    write_attribution(
                        &result,
                        args,
                        t_ref,
                        observed_output,
                        None,
                        0,
                        &mut manifest,
                    )?;
                }
                continue;
            }
            other => bail!("unknown method '{other}'"),
        };
        let rollup = rollup_by_category(&result, &category_map).ok();
        write_attribution(
            &result,
            args,
            t_ref,
            observed_output,
            rollup,
            session.clamp_events(),
            &mut manifest,
        )?;
    }
    manifest.write(&args.out)?;
    println!(
        "attributed day {} against reference {} with {} method(s) -> {}",
        args.day,
        t_ref,
        args.methods.len(),
        args.out.display()
    );
    Ok(())
}

fn write_attribution(
    result: &AttributionResult,
    args: &AttributeArgs,
    t_ref: usize,
    observed_output: f64,
    rollup: Option<cfattrib_core::attribution::CategoryRollup>,
    clamp_events: u64,
    manifest: &mut Manifest,
) -> Result<()> {
    let report = AttributionReport::new(
        result,
        args.day,
        t_ref,
        observed_output,
        rollup,
        clamp_events,
    );
    let stem = result.method.name();
    let json_path = args.out.join(format!("attribution_{stem}.json"));
    write_text(&json_path, &report.to_json()?)?;
    manifest.record_output(&json_path)?;
    let scores_path = args.out.join(format!("scores_{stem}.csv"));
    write_text(&scores_path, &report.scores_csv()?)?;
    manifest.record_output(&scores_path)?;
    if let Some(rollup_text) = report.rollup_csv()? {
        let rollup_path = args.out.join(format!("rollup_{stem}.csv"));
        write_text(&rollup_path, &rollup_text)?;
        manifest.record_output(&rollup_path)?;
    }
    Ok(())
}

fn direct_design(
    panel: &PanelDataset,
    range: std::ops::Range<usize>,
) -> (Vec<String>, Vec<Vec<f64>>, Vec<f64>) {
    let mut names: Vec<String> = Vec::new();
    for cat in panel.categories() {
        names.push(cfattrib_core::panel::ad_node(cat));
        names.push(cfattrib_core::panel::qv_node(cat));
    }
    names.sort();
    let rows: Vec<Vec<f64>> = range
        .clone()
        .map(|t| input_values(panel, &names, t))
        .collect();
    let targets: Vec<f64> = range.map(|t| panel.daily_density()[t]).collect();
    (names, rows, targets)
}

fn input_values(panel: &PanelDataset, names: &[String], t: usize) -> Vec<f64> {
    names
        .iter()
        .map(|n| {
            let (kind, cat) = n.split_once("::").expect("input node name");
            let c = panel.categories().iter().position(|x| x == cat).unwrap();
            if kind == "ad" {
                panel.ad(c)[t]
            } else {
                panel.qv(c)[t]
            }
        })
        .collect()
}

/// Rebuild the attribute arguments recorded in a manifest.
pub fn attribute_args_from_manifest(path: &Path, out: PathBuf) -> Result<AttributeArgs> {
    let manifest = Manifest::load(path)?;
    if manifest.command != "attribute" {
        bail!(
            "manifest records a '{}' run, not attribute",
            manifest.command
        );
    }
    let cfg = &manifest.config;
    let data = manifest
        .inputs
        .keys()
        .find(|p| p.ends_with(".csv"))
        .context("manifest lists no csv input")?;
    let graph = manifest.inputs.keys().find(|p| p.ends_with(".json"));
    Ok(AttributeArgs {
        graph: graph.map(PathBuf::from),
        data: PathBuf::from(data),
        day: cfg["day"].as_u64().context("day")? as usize,
        reference: ReferenceRule::parse(cfg["reference"].as_str().context("reference")?)?,
        methods: cfg["methods"]
            .as_array()
            .context("methods")?
            .iter()
            .map(|m| m.as_str().unwrap_or_default().to_string())
            .collect(),
        samples: cfg["samples"].as_u64().context("samples")? as usize,
        resamples: cfg["resamples"].as_u64().context("resamples")? as usize,
        seed: cfg["seed"].as_u64().context("seed")?,
        regressor: FitKind::parse(cfg["regressor"].as_str().context("regressor")?)?,
        ratio_feature: cfg["ratio_feature"].as_bool().unwrap_or(false),
        out,
    })
}

pub struct BenchArgs {
    pub methods: Vec<String>,
    pub configs: Vec<InterventionKind>,
    pub sigmas: Vec<f64>,
    pub trials: usize,
    pub samples: usize,
    pub resamples: usize,
    pub seed: u64,
    pub out: PathBuf,
}

pub fn run_bench(args: &BenchArgs) -> Result<()> {
    ensure_dir(&args.out)?;
    let mut methods = Vec::new();
    for name in &args.methods {
        methods.push(match name.as_str() {
            "cf_shapley_mc" => BenchMethod::CfShapleyMc {
                samples: args.samples,
            },
            "shapley_direct" => BenchMethod::ShapleyDirect {
                samples: args.samples,
            },
            "do_shapley" => BenchMethod::DoShapley {
                samples: args.samples,
                resamples: args.resamples,
            },
            "ad_demand_delta" => BenchMethod::AdDemandDelta,
            "qv_delta" => BenchMethod::QueryVolumeDelta,
            "product_delta" => BenchMethod::ProductDelta,
            other => bail!("unknown bench method '{other}'"),
        });
    }
    let cfg = ExperimentConfig {
        methods,
        interventions: args.configs.clone(),
        sigmas: args.sigmas.clone(),
        trials: args.trials,
        seed: args.seed,
        sim: SimulationConfig::default(),
        direct_regressor: RegressorKind::mlp(),
    };
    let rows = run_accuracy_experiment(&cfg)?;
    let mut manifest = Manifest::new(
        "bench",
        json!({
            "methods": args.methods,
            "configs": args.configs.iter().map(|c| c.name()).collect::<Vec<_>>(),
            "sigmas": args.sigmas,
            "trials": args.trials,
            "samples": args.samples,
            "resamples": args.resamples,
            "seed": args.seed,
        }),
    );
    let path = args.out.join("accuracy.csv");
    write_text(&path, &accuracy_csv(&rows)?)?;
    manifest.record_output(&path)?;
    manifest.write(&args.out)?;
    for r in &rows {
        println!(
            "{:<16} {:<8} sigma {:<5} accuracy {:.2} [{:.2}, {:.2}]",
            r.method, r.config, r.sigma, r.accuracy, r.ci_low, r.ci_high
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}

pub struct ReportArgs {
    pub input: PathBuf,
    pub kind: String,
    pub out: PathBuf,
}

/// Convert a stored attribution JSON into one of its CSV views.
pub fn run_report(args: &ReportArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.input)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let mut csv = String::new();
    match args.kind.as_str() {
        "scores" => {
            csv.push_str("input,score\n");
            let scores = value["scores"].as_object().context("scores object")?;
            for (input, score) in scores {
                csv.push_str(&format!("{input},{score}\n"));
            }
        }
        "rollup" => {
            csv.push_str("category,ad_demand_attrib,query_volume_attrib,total\n");
            let rollup = value["rollup"]["per_category"]
                .as_object()
                .context("report has no rollup")?;
            for (cat, row) in rollup {
                csv.push_str(&format!(
                    "{cat},{},{},{}\n",
                    row["ad_demand"], row["query_volume"], row["total"]
                ));
            }
        }
        other => bail!("report kind must be scores or rollup, got '{other}'"),
    }
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            ensure_dir(parent)?;
        }
    }
    write_text(&args.out, &csv)?;
    println!("wrote {}", args.out.display());
    Ok(())
}
