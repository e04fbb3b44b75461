//! Synthetic ad-matching benchmark with known attribution ground truth.
//!
//! Per category c, a size factor `gamma_c ~ Beta(0.5, 0.5)` is drawn once;
//! daily query volume and ad demand are Gaussian draws (floored at 1.0, the
//! metric divides by volume), and category density follows
//! `den_t = kappa * ad_t / qv_t + beta * a_t * den_{t-1} + noise` with the
//! biweekly sign `a_t` and `den_{-1} = 0`. Densities are floored at zero to
//! keep the panel invariant; floor events are counted.
//!
//! Interventions scale one input of two chosen categories (x2.0 and x2.1) on
//! a single day and push that day through the same equations with the same
//! noise realization: the intervention changes inputs, never the noise.

use crate::attribution::{
    cf_shapley_mc, delta_baselines, do_shapley, rollup_by_category, shapley_direct,
    AttributionResult, DeltaMode,
};
use crate::counterfactual::CounterfactualSession;
use crate::error::{Error, Result};
use crate::features::{FeaturePlan, FeatureTerm};
use crate::frame::biweekly_sign;
use crate::panel::{ad_node, qv_node, PanelDataset};
use crate::regressor::{fit_ols, FittedRegressor, LinearModel, RegressorKind};
use crate::rng::stream_rng;
use crate::scm::{assemble_scm, AnalyticRegistry, FittedNodeModel, FittedScm};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::ops::Range;
use std::sync::Arc;

/// Days discarded from the start of every training window to forget the
/// `den_{-1} = 0` initialization.
pub const BURN_IN_DAYS: usize = 28;
/// The benchmark's reference-day offset; matches the biweekly period.
pub const REFERENCE_LAG: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    /// Category count k.
    pub categories: usize,
    /// Days simulated T.
    pub days: usize,
    /// Fraction of ads relevant per query (the ratio coefficient).
    pub relevant_fraction: f64,
    /// Weight of the signed previous density.
    pub autoregressive_weight: f64,
    /// Density noise standard deviation.
    pub noise_std: f64,
    /// Query-volume draw standard deviation (the generating equations give
    /// the Gaussian a variance of 100).
    pub qv_noise_std: f64,
    /// Ad-demand draw standard deviation.
    pub ad_noise_std: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            categories: 10,
            days: 1000,
            relevant_fraction: 0.85,
            autoregressive_weight: 0.15,
            noise_std: 1.0,
            qv_noise_std: 10.0,
            ad_noise_std: 10.0,
        }
    }
}

impl SimulationConfig {
    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_std = sigma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.categories < 2 {
            return Err(Error::InvalidConfig("need at least two categories".into()));
        }
        if self.days <= BURN_IN_DAYS {
            return Err(Error::InvalidConfig(format!(
                "need more than {BURN_IN_DAYS} days"
            )));
        }
        if self.relevant_fraction < 0.0 || self.autoregressive_weight < 0.0 || self.noise_std < 0.0
        {
            return Err(Error::InvalidConfig("negative generator parameter".into()));
        }
        Ok(())
    }
}

fn category_name(c: usize) -> String {
    format!("cat{c:02}")
}

/// Generated panel plus the generator internals needed to replay a day.
#[derive(Debug, Clone)]
pub struct SimulatedDataset {
    pub panel: PanelDataset,
    pub config: SimulationConfig,
    pub seed: u64,
    pub gamma: Vec<f64>,
    /// Density noise draws, `[category][day]`.
    noise: Vec<Vec<f64>>,
    /// Input draws floored at 1.0.
    pub truncated_inputs: u64,
    /// Density values floored at 0.0 during generation.
    pub clamped_densities: u64,
}

fn draw_floored(
    rng: &mut ChaCha8Rng,
    mean: f64,
    std: f64,
    days: usize,
    truncated: &mut u64,
) -> Vec<f64> {
    let normal = Normal::new(mean, std).expect("valid normal");
    (0..days)
        .map(|_| {
            let v: f64 = normal.sample(rng);
            if v < 1.0 {
                *truncated += 1;
                1.0
            } else {
                v
            }
        })
        .collect()
}

/// Deterministic benchmark generator; identical `(config, seed)` yields a
/// bit-identical dataset.
pub fn generate_dataset(config: &SimulationConfig, seed: u64) -> Result<SimulatedDataset> {
    config.validate()?;
    let k = config.categories;
    let days = config.days;
    let kappa = config.relevant_fraction;
    let beta_w = config.autoregressive_weight;

    let mut gamma_rng = stream_rng(seed, "sim/gamma");
    let beta = Beta::new(0.5, 0.5).expect("valid Beta parameters");
    let gamma: Vec<f64> = (0..k).map(|_| beta.sample(&mut gamma_rng)).collect();

    let mut truncated = 0u64;
    let mut qv_rng = stream_rng(seed, "sim/qv");
    let qv: Vec<Vec<f64>> = (0..k)
        .map(|c| {
            draw_floored(
                &mut qv_rng,
                1000.0 * gamma[c],
                config.qv_noise_std,
                days,
                &mut truncated,
            )
        })
        .collect();
    let mut ad_rng = stream_rng(seed, "sim/ad");
    let ad: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            draw_floored(
                &mut ad_rng,
                10000.0,
                config.ad_noise_std,
                days,
                &mut truncated,
            )
        })
        .collect();

    let mut noise_rng = stream_rng(seed, "sim/noise");
    let noise: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            (0..days)
                .map(|_| {
                    if config.noise_std == 0.0 {
                        0.0
                    } else {
                        Normal::new(0.0, config.noise_std)
                            .expect("valid normal")
                            .sample(&mut noise_rng)
                    }
                })
                .collect()
        })
        .collect();

    let mut clamped = 0u64;
    let mut den = vec![vec![0.0; days]; k];
    for c in 0..k {
        let mut prev = 0.0;
        for t in 0..days {
            let raw = kappa * ad[c][t] / qv[c][t] + beta_w * biweekly_sign(t) * prev + noise[c][t];
            let v = if raw < 0.0 {
                clamped += 1;
                0.0
            } else {
                raw
            };
            den[c][t] = v;
            prev = v;
        }
    }

    let categories: Vec<String> = (0..k).map(category_name).collect();
    let panel = PanelDataset::new(categories, qv, ad, den)?;
    Ok(SimulatedDataset {
        panel,
        config: *config,
        seed,
        gamma,
        noise,
        truncated_inputs: truncated,
        clamped_densities: clamped,
    })
}

/// Which input series the intervention scales.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterventionKind {
    /// Scale ad demand of the highest- and lowest-volume categories.
    AdDemand,
    /// Scale query volume of the most- and least-extreme-density categories.
    QueryVolume,
}

impl InterventionKind {
    pub fn name(&self) -> &'static str {
        match self {
            InterventionKind::AdDemand => "config1",
            InterventionKind::QueryVolume => "config2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterventionSpec {
    pub kind: InterventionKind,
    /// Defaults to the last simulated day.
    pub target_day: Option<usize>,
    /// Scale factors for the (first, second) chosen categories.
    pub factors: (f64, f64),
}

impl InterventionSpec {
    pub fn new(kind: InterventionKind) -> Self {
        InterventionSpec {
            kind,
            target_day: None,
            factors: (2.0, 2.1),
        }
    }
}

/// Which categories were scaled and which one carries the ground-truth label.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InterventionOutcome {
    pub first: String,
    pub second: String,
    pub ground_truth: String,
    pub target_day: usize,
}

fn argmax_by<F: Fn(usize) -> f64>(k: usize, f: F) -> usize {
    let mut best = 0;
    let mut best_v = f(0);
    for c in 1..k {
        let v = f(c);
        if v > best_v {
            best = c;
            best_v = v;
        }
    }
    best
}

fn argmin_by<F: Fn(usize) -> f64>(k: usize, f: F) -> usize {
    let mut best = 0;
    let mut best_v = f(0);
    for c in 1..k {
        let v = f(c);
        if v < best_v {
            best = c;
            best_v = v;
        }
    }
    best
}

/// Scale the designated input of the two chosen categories on the target day
/// and replay that day through the generating equations with the original
/// noise draw. Every other value is untouched.
pub fn apply_intervention(
    sim: &SimulatedDataset,
    spec: &InterventionSpec,
) -> Result<(SimulatedDataset, InterventionOutcome)> {
    let k = sim.config.categories;
    let days = sim.config.days;
    let target = spec.target_day.unwrap_or(days - 1);
    if target >= days || target < BURN_IN_DAYS + REFERENCE_LAG {
        return Err(Error::InvalidConfig(format!(
            "target day {target} outside the usable range"
        )));
    }
    let panel = &sim.panel;
    let train = BURN_IN_DAYS..target;
    let (first, second) = match spec.kind {
        InterventionKind::AdDemand => {
            let mean_qv = |c: usize| -> f64 {
                panel.qv(c)[train.clone()].iter().sum::<f64>() / train.len() as f64
            };
            (argmax_by(k, mean_qv), argmin_by(k, mean_qv))
        }
        InterventionKind::QueryVolume => {
            let t_ref = target - REFERENCE_LAG;
            let y_ref = panel.daily_density()[t_ref];
            let dist = |c: usize| -> f64 { (panel.den(c)[t_ref] - y_ref).abs() };
            (argmax_by(k, dist), argmin_by(k, dist))
        }
    };
    if first == second {
        return Err(Error::DegenerateSelection(category_name(first)));
    }

    let mut qv: Vec<Vec<f64>> = (0..k).map(|c| panel.qv(c).to_vec()).collect();
    let mut ad: Vec<Vec<f64>> = (0..k).map(|c| panel.ad(c).to_vec()).collect();
    let mut den: Vec<Vec<f64>> = (0..k).map(|c| panel.den(c).to_vec()).collect();
    for (c, factor) in [(first, spec.factors.0), (second, spec.factors.1)] {
        match spec.kind {
            InterventionKind::AdDemand => ad[c][target] *= factor,
            InterventionKind::QueryVolume => qv[c][target] *= factor,
        }
    }
    let kappa = sim.config.relevant_fraction;
    let beta_w = sim.config.autoregressive_weight;
    let mut clamped = sim.clamped_densities;
    for c in [first, second] {
        let prev = if target == 0 { 0.0 } else { den[c][target - 1] };
        let raw = kappa * ad[c][target] / qv[c][target]
            + beta_w * biweekly_sign(target) * prev
            + sim.noise[c][target];
        den[c][target] = if raw < 0.0 {
            clamped += 1;
            0.0
        } else {
            raw
        };
    }
    let new_panel = PanelDataset::new(panel.categories().to_vec(), qv, ad, den)?;
    let outcome = InterventionOutcome {
        first: category_name(first),
        second: category_name(second),
        ground_truth: category_name(first),
        target_day: target,
    };
    Ok((
        SimulatedDataset {
            panel: new_panel,
            config: sim.config,
            seed: sim.seed,
            gamma: sim.gamma.clone(),
            noise: sim.noise.clone(),
            truncated_inputs: sim.truncated_inputs,
            clamped_densities: clamped,
        },
        outcome,
    ))
}

/// Fit the benchmark's structural equations: one linear model pooled over
/// all category densities, with the identifiable terms fitted and the
/// unidentifiable one imputed.
///
/// The ratio coefficient and the signed-lag weight identify sharply from the
/// pooled cross-category variation. The per-category response to ad demand
/// does not (demand barely varies day to day), so the counterfactual ad
/// response applies the pooled mean-field slope `kappa_hat * mean(1/qv)` to
/// the deviation from the anchor day, while the query-volume response keeps
/// the fitted ratio structure anchored at the category's observed demand.
pub fn fit_benchmark_scm(panel: &PanelDataset, train_range: Range<usize>) -> Result<FittedScm> {
    let graph = panel.graph(&[1, 7, 14]);
    let frame = panel.to_frame();
    let fit_plan = FeaturePlan::new(vec![FeatureTerm::Ratio(0, 1), FeatureTerm::SignedLag(1)]);
    let start = train_range.start.max(1);
    let end = train_range.end.min(panel.days());

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut targets: Vec<f64> = Vec::new();
    let mut inv_qv_sum = 0.0;
    for cat in panel.categories() {
        let spec = graph.node(&crate::panel::den_node(cat))?;
        for t in start..end {
            let target = frame.value(&spec.name, t)?;
            // floored densities are censored observations; they would bias
            // the pooled coefficients
            if target == 0.0 {
                continue;
            }
            rows.push(fit_plan.at_row(&frame, spec, t)?);
            targets.push(target);
            inv_qv_sum += 1.0 / frame.value(&qv_node(cat), t)?;
        }
    }
    if rows.len() < 20 * panel.categories().len() {
        return Err(Error::InsufficientData {
            rows: rows.len(),
            features: 2,
            needed: 20 * panel.categories().len(),
        });
    }
    let base = fit_ols(&rows, &targets, 1e-6)?;
    let kappa_hat = base.coefs[0];
    let beta_hat = base.coefs[1];
    let mean_inv_qv = inv_qv_sum / rows.len() as f64;

    let response_plan = FeaturePlan::new(vec![
        FeatureTerm::AnchoredRatio(0, 1),
        FeatureTerm::ParentDeviation(0),
        FeatureTerm::SignedLag(1),
    ]);
    let shared: Arc<LinearModel> = Arc::new(LinearModel {
        coefs: vec![kappa_hat, kappa_hat * mean_inv_qv, beta_hat],
        intercept: base.intercept,
    });

    let mut models = Vec::new();
    for cat in panel.categories() {
        let node = crate::panel::den_node(cat);
        let spec = graph.node(&node)?;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        let mut count = 0usize;
        for t in start..end {
            let feats = response_plan.at_row(&frame, spec, t)?;
            let r = frame.value(&node, t)? - FittedRegressor::predict(shared.as_ref(), &feats)?;
            sum += r;
            sumsq += r * r;
            count += 1;
        }
        let mean = sum / count as f64;
        let scale = (sumsq / count as f64 - mean * mean).max(0.0).sqrt();
        models.push(FittedNodeModel {
            node: node.clone(),
            feature_names: response_plan.names(&spec.parents),
            plan: response_plan.clone(),
            regressor: shared.clone(),
            residual_scale: scale,
            train_rows: count,
        });
    }
    assemble_scm(&graph, models, &AnalyticRegistry::default())
}

/// 95% Wilson score interval for a binomial proportion.
pub fn wilson_interval(hits: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959964;
    let n = trials as f64;
    let p = hits as f64 / n;
    let z2 = z * z;
    let center = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / (1.0 + z2 / n);
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Attribution method entry for the accuracy experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum BenchMethod {
    CfShapleyMc { samples: usize },
    ShapleyDirect { samples: usize },
    DoShapley { samples: usize, resamples: usize },
    AdDemandDelta,
    QueryVolumeDelta,
    ProductDelta,
}

impl BenchMethod {
    pub fn name(&self) -> &'static str {
        match self {
            BenchMethod::CfShapleyMc { .. } => "cf_shapley_mc",
            BenchMethod::ShapleyDirect { .. } => "shapley_direct",
            BenchMethod::DoShapley { .. } => "do_shapley",
            BenchMethod::AdDemandDelta => "ad_demand_delta",
            BenchMethod::QueryVolumeDelta => "qv_delta",
            BenchMethod::ProductDelta => "product_delta",
        }
    }

    fn needs_direct_model(&self) -> bool {
        matches!(
            self,
            BenchMethod::ShapleyDirect { .. } | BenchMethod::DoShapley { .. }
        )
    }
}

/// One cell of the accuracy table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub method: String,
    pub config: String,
    pub sigma: f64,
    pub accuracy: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub trials: usize,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub methods: Vec<BenchMethod>,
    pub interventions: Vec<InterventionKind>,
    pub sigmas: Vec<f64>,
    pub trials: usize,
    /// Trial i uses dataset seed `seed + i`.
    pub seed: u64,
    pub sim: SimulationConfig,
    /// Regressor for the flat input->metric model the direct baselines use.
    pub direct_regressor: RegressorKind,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            methods: vec![BenchMethod::CfShapleyMc { samples: 1000 }],
            interventions: vec![InterventionKind::AdDemand, InterventionKind::QueryVolume],
            sigmas: vec![0.1, 1.0, 10.0],
            trials: 20,
            seed: 0,
            sim: SimulationConfig::default(),
            direct_regressor: RegressorKind::mlp(),
        }
    }
}

/// Flat design over the 2k inputs in lexicographic node order.
fn direct_rows(
    panel: &PanelDataset,
    range: Range<usize>,
) -> (Vec<String>, Vec<Vec<f64>>, Vec<f64>) {
    let mut names: Vec<String> = Vec::new();
    for cat in panel.categories() {
        names.push(ad_node(cat));
        names.push(qv_node(cat));
    }
    names.sort();
    let rows: Vec<Vec<f64>> = range.clone().map(|t| input_row(panel, &names, t)).collect();
    let targets: Vec<f64> = range.map(|t| panel.daily_density()[t]).collect();
    (names, rows, targets)
}

fn input_row(panel: &PanelDataset, names: &[String], t: usize) -> Vec<f64> {
    names
        .iter()
        .map(|n| {
            let (kind, cat) = n.split_once("::").expect("input node name");
            let c = panel
                .categories()
                .iter()
                .position(|x| x == cat)
                .expect("category exists");
            match kind {
                "ad" => panel.ad(c)[t],
                _ => panel.qv(c)[t],
            }
        })
        .collect()
}

fn trial_hits(
    cfg: &ExperimentConfig,
    kind: InterventionKind,
    sigma: f64,
    trial: usize,
) -> Result<Vec<bool>> {
    let seed = cfg.seed + trial as u64;
    let sim = generate_dataset(&cfg.sim.with_noise(sigma), seed)?;
    let (intervened, outcome) = apply_intervention(&sim, &InterventionSpec::new(kind))?;
    let panel = &intervened.panel;
    let t = outcome.target_day;
    let t_ref = t - REFERENCE_LAG;
    let category_map = panel.category_map();

    let needs_cf = cfg
        .methods
        .iter()
        .any(|m| matches!(m, BenchMethod::CfShapleyMc { .. }));
    let needs_direct = cfg.methods.iter().any(BenchMethod::needs_direct_model);

    let frame = panel.to_frame();
    let scm = if needs_cf {
        Some(fit_benchmark_scm(panel, BURN_IN_DAYS..t)?)
    } else {
        None
    };
    let mut session = match &scm {
        Some(scm) => Some(CounterfactualSession::new(scm, &frame, t, t_ref)?),
        None => None,
    };

    let direct = if needs_direct {
        let (names, rows, targets) = direct_rows(panel, BURN_IN_DAYS..t);
        let model = cfg.direct_regressor.fit(&rows, &targets)?;
        Some((names, rows, model))
    } else {
        None
    };

    let top_matches = |result: &AttributionResult| -> Result<bool> {
        let rollup = rollup_by_category(result, &category_map)?;
        Ok(rollup.top_category() == Some(outcome.ground_truth.as_str()))
    };

    let mut hits = Vec::with_capacity(cfg.methods.len());
    for method in &cfg.methods {
        let hit = match method {
            BenchMethod::CfShapleyMc { samples } => {
                let session = session.as_mut().expect("session prepared");
                let result = cf_shapley_mc(session, *samples, seed)?;
                top_matches(&result)?
            }
            BenchMethod::ShapleyDirect { samples } => {
                let (names, _, model) = direct.as_ref().expect("direct model prepared");
                let observed = input_row(panel, names, t);
                let reference = input_row(panel, names, t_ref);
                let result =
                    shapley_direct(model.as_ref(), names, &observed, &reference, *samples, seed)?;
                top_matches(&result)?
            }
            BenchMethod::DoShapley { samples, resamples } => {
                let (names, rows, model) = direct.as_ref().expect("direct model prepared");
                let observed = input_row(panel, names, t);
                let result = do_shapley(
                    model.as_ref(),
                    names,
                    &observed,
                    rows,
                    *samples,
                    seed,
                    *resamples,
                )?;
                top_matches(&result)?
            }
            BenchMethod::AdDemandDelta
            | BenchMethod::QueryVolumeDelta
            | BenchMethod::ProductDelta => {
                let [ad, qv, product] = delta_baselines(panel, t, t_ref, DeltaMode::Absolute)?;
                let result = match method {
                    BenchMethod::AdDemandDelta => ad,
                    BenchMethod::QueryVolumeDelta => qv,
                    _ => product,
                };
                result.top() == Some(outcome.ground_truth.as_str())
            }
        };
        hits.push(hit);
    }
    Ok(hits)
}

/// Run the full method x config x sigma accuracy table. Trials are
/// independent, seeded `seed + trial`, and may run concurrently; the table
/// is independent of scheduling.
pub fn run_accuracy_experiment(cfg: &ExperimentConfig) -> Result<Vec<AccuracyRow>> {
    if cfg.trials == 0 {
        return Err(Error::InvalidConfig("need at least one trial".into()));
    }
    let mut rows = Vec::new();
    for &kind in &cfg.interventions {
        for &sigma in &cfg.sigmas {
            let per_trial: Vec<Result<Vec<bool>>> = (0..cfg.trials)
                .into_par_iter()
                .map(|trial| trial_hits(cfg, kind, sigma, trial))
                .collect();
            let mut hit_counts = vec![0usize; cfg.methods.len()];
            for trial in per_trial {
                let trial = trial?;
                for (count, hit) in hit_counts.iter_mut().zip(&trial) {
                    if *hit {
                        *count += 1;
                    }
                }
            }
            for (method, &hits) in cfg.methods.iter().zip(&hit_counts) {
                let accuracy = hits as f64 / cfg.trials as f64;
                let (ci_low, ci_high) = wilson_interval(hits, cfg.trials);
                rows.push(AccuracyRow {
                    method: method.name().to_string(),
                    config: kind.name().to_string(),
                    sigma,
                    accuracy,
                    ci_low,
                    ci_high,
                    trials: cfg.trials,
                });
            }
        }
    }
    Ok(rows)
}
