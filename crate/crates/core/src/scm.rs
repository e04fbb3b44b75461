//! Fitting structural equations over a causal graph.
//!
//! Learned nodes get a regressor over their feature plan; analytic nodes are
//! bound to registry functions; input nodes pass observed values through.
//! Fitting can pool training rows across nodes that share a feature shape
//! (one regressor, per-node residual bookkeeping), which is how a single
//! equation is learned jointly for all category series.

use crate::error::{Error, Result};
use crate::features::FeaturePlan;
use crate::frame::Frame;
use crate::graph::{CausalGraph, NodeKind};
use crate::metrics::{aggregate_daily_density, prediction_metrics, PredictionMetrics};
use crate::regressor::{FittedRegressor, RegressorKind};
use std::collections::BTreeMap;
use std::ops::Range;
use std::sync::Arc;

pub type AnalyticFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Closed-form functions addressable from graph specs by key.
#[derive(Clone)]
pub struct AnalyticRegistry {
    map: BTreeMap<String, AnalyticFn>,
}

impl AnalyticRegistry {
    pub fn empty() -> Self {
        AnalyticRegistry {
            map: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, key: impl Into<String>, f: AnalyticFn) {
        self.map.insert(key.into(), f);
    }

    pub fn get(&self, key: &str) -> Result<AnalyticFn> {
        self.map
            .get(key)
            .cloned()
            .ok_or_else(|| Error::UnknownAnalytic(key.to_string()))
    }
}

impl Default for AnalyticRegistry {
    /// Ships the aggregation formula: parents ordered as k densities
    /// followed by their k query volumes.
    fn default() -> Self {
        let mut reg = Self::empty();
        reg.register(
            crate::panel::QV_WEIGHTED_DENSITY,
            Arc::new(|values: &[f64]| {
                let k = values.len() / 2;
                aggregate_daily_density(&values[..k], &values[k..]).unwrap_or(f64::NAN)
            }),
        );
        reg
    }
}

/// One node's fitted structural equation plus residual bookkeeping.
#[derive(Clone)]
pub struct FittedNodeModel {
    pub node: String,
    pub feature_names: Vec<String>,
    pub plan: FeaturePlan,
    pub regressor: Arc<dyn FittedRegressor>,
    /// Standard deviation of training residuals.
    pub residual_scale: f64,
    pub train_rows: usize,
}

impl FittedNodeModel {
    pub fn predict(&self, features: &[f64]) -> Result<f64> {
        self.regressor.predict(features)
    }
}

impl std::fmt::Debug for FittedNodeModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FittedNodeModel")
            .field("node", &self.node)
            .field("feature_names", &self.feature_names)
            .field("residual_scale", &self.residual_scale)
            .field("train_rows", &self.train_rows)
            .finish()
    }
}

/// How learned nodes share training data.
#[derive(Debug, Clone, Default, PartialEq)]
pub enum Pooling {
    /// One regressor per node.
    #[default]
    PerNode,
    /// One regressor over all learned nodes' stacked rows.
    AllLearned,
    /// Explicit node -> group key assignment; absent nodes fit alone.
    Groups(BTreeMap<String, String>),
}

#[derive(Debug, Clone)]
pub struct FitConfig {
    pub regressor: RegressorKind,
    pub train_range: Range<usize>,
    /// Per-node feature plan overrides; nodes not listed use parents+lags.
    pub plans: BTreeMap<String, FeaturePlan>,
    pub pooling: Pooling,
}

impl FitConfig {
    pub fn new(regressor: RegressorKind, train_range: Range<usize>) -> Self {
        FitConfig {
            regressor,
            train_range,
            plans: BTreeMap::new(),
            pooling: Pooling::PerNode,
        }
    }

    pub fn with_plan(mut self, node: impl Into<String>, plan: FeaturePlan) -> Self {
        self.plans.insert(node.into(), plan);
        self
    }

    pub fn with_pooling(mut self, pooling: Pooling) -> Self {
        self.pooling = pooling;
        self
    }
}

/// The fitted SCM: the counterfactual oracle's model side.
#[derive(Clone)]
pub struct FittedScm {
    graph: CausalGraph,
    models: BTreeMap<String, FittedNodeModel>,
    analytic: BTreeMap<String, AnalyticFn>,
}

impl std::fmt::Debug for FittedScm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FittedScm")
            .field("output", &self.graph.output())
            .field("models", &self.models.keys().collect::<Vec<_>>())
            .field("analytic", &self.analytic.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl FittedScm {
    pub fn graph(&self) -> &CausalGraph {
        &self.graph
    }

    pub fn model(&self, node: &str) -> Result<&FittedNodeModel> {
        self.models
            .get(node)
            .ok_or_else(|| Error::UnknownNode(node.to_string()))
    }

    pub fn models(&self) -> impl Iterator<Item = &FittedNodeModel> {
        self.models.values()
    }

    pub fn analytic_fn(&self, node: &str) -> Result<&AnalyticFn> {
        self.analytic
            .get(node)
            .ok_or_else(|| Error::UnknownNode(node.to_string()))
    }

    /// Replace or install a node model; entry point for external predictors.
    pub fn insert_node_model(&mut self, model: FittedNodeModel) {
        self.models.insert(model.node.clone(), model);
    }

    /// Point prediction for a learned node from observed features at `t`.
    pub fn predict_node(&self, frame: &Frame, node: &str, t: usize) -> Result<f64> {
        let model = self.model(node)?;
        let spec = self.graph.node(node)?;
        let features = model.plan.at_row(frame, spec, t)?;
        model.predict(&features)
    }

    /// Observed value minus model prediction at `t`.
    pub fn residual(&self, frame: &Frame, node: &str, t: usize) -> Result<f64> {
        Ok(frame.value(node, t)? - self.predict_node(frame, node, t)?)
    }
}

fn usable_rows(plan: &FeaturePlan, range: &Range<usize>, days: usize) -> Vec<usize> {
    let start = range.start.max(plan.max_lag());
    (start..range.end.min(days)).collect()
}

fn node_rows(
    frame: &Frame,
    graph: &CausalGraph,
    node: &str,
    plan: &FeaturePlan,
    range: &Range<usize>,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let spec = graph.node(node)?;
    if !frame.has(node) {
        return Err(Error::MissingColumn(node.to_string()));
    }
    for p in &spec.parents {
        if !frame.has(p) {
            return Err(Error::MissingColumn(p.clone()));
        }
    }
    let days = frame.days();
    let ts = usable_rows(plan, range, days);
    let needed = 10 * plan.len().max(1);
    let needed = if plan.is_empty() { 1 } else { needed };
    if ts.len() < needed {
        return Err(Error::InsufficientData {
            rows: ts.len(),
            features: plan.len(),
            needed,
        });
    }
    let mut rows = Vec::with_capacity(ts.len());
    let mut targets = Vec::with_capacity(ts.len());
    for &t in &ts {
        rows.push(plan.at_row(frame, spec, t)?);
        targets.push(frame.value(node, t)?);
    }
    Ok((rows, targets))
}

fn residual_scale(
    regressor: &Arc<dyn FittedRegressor>,
    rows: &[Vec<f64>],
    targets: &[f64],
) -> Result<f64> {
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for (row, &y) in rows.iter().zip(targets) {
        let r = y - regressor.predict(row)?;
        sum += r;
        sumsq += r * r;
    }
    let n = rows.len() as f64;
    let mean = sum / n;
    Ok((sumsq / n - mean * mean).max(0.0).sqrt())
}

/// Fit one learned node in isolation.
pub fn fit_node_model(
    frame: &Frame,
    graph: &CausalGraph,
    node: &str,
    regressor: &RegressorKind,
    plan: Option<FeaturePlan>,
    train_range: Range<usize>,
) -> Result<FittedNodeModel> {
    let spec = graph.node(node)?;
    if spec.kind != NodeKind::Learned {
        return Err(Error::InvalidNode {
            node: node.to_string(),
            detail: "only learned nodes are fitted".into(),
        });
    }
    let plan = plan.unwrap_or_else(|| FeaturePlan::default_for(spec));
    let (rows, targets) = node_rows(frame, graph, node, &plan, &train_range)?;
    let fitted = regressor.fit(&rows, &targets)?;
    let scale = residual_scale(&fitted, &rows, &targets)?;
    Ok(FittedNodeModel {
        node: node.to_string(),
        feature_names: plan.names(&spec.parents),
        plan,
        regressor: fitted,
        residual_scale: scale,
        train_rows: rows.len(),
    })
}

/// Assemble a fitted SCM from externally built node models (one per learned
/// node) and the analytic registry.
pub fn assemble_scm(
    graph: &CausalGraph,
    models: Vec<FittedNodeModel>,
    registry: &AnalyticRegistry,
) -> Result<FittedScm> {
    let mut analytic = BTreeMap::new();
    for spec in graph.nodes() {
        if spec.kind == NodeKind::Analytic {
            let key = spec.function.as_deref().expect("validated at build");
            analytic.insert(spec.name.clone(), registry.get(key)?);
        }
    }
    let mut map = BTreeMap::new();
    for model in models {
        graph.node(&model.node)?;
        map.insert(model.node.clone(), model);
    }
    for name in graph.learned_names() {
        if !map.contains_key(&name) {
            return Err(Error::MissingColumn(name));
        }
    }
    Ok(FittedScm {
        graph: graph.clone(),
        models: map,
        analytic,
    })
}

/// Fit every learned node and bind analytic nodes to the registry.
pub fn fit_scm(
    graph: &CausalGraph,
    frame: &Frame,
    config: &FitConfig,
    registry: &AnalyticRegistry,
) -> Result<FittedScm> {
    let mut analytic = BTreeMap::new();
    for spec in graph.nodes() {
        if spec.kind == NodeKind::Analytic {
            let key = spec.function.as_deref().expect("validated at build");
            analytic.insert(spec.name.clone(), registry.get(key)?);
        }
    }

    // node -> group key; PerNode gives every node its own group.
    let mut groups: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for name in graph.learned_names() {
        let key = match &config.pooling {
            Pooling::PerNode => name.clone(),
            Pooling::AllLearned => "__all__".to_string(),
            Pooling::Groups(map) => map.get(&name).cloned().unwrap_or_else(|| name.clone()),
        };
        groups.entry(key).or_default().push(name);
    }

    let mut models = BTreeMap::new();
    for nodes in groups.values() {
        let mut stacked_rows: Vec<Vec<f64>> = Vec::new();
        let mut stacked_targets: Vec<f64> = Vec::new();
        type NodeRows = (String, FeaturePlan, Vec<Vec<f64>>, Vec<f64>);
        let mut per_node: Vec<NodeRows> = Vec::new();
        let mut width: Option<usize> = None;
        for node in nodes {
            let spec = graph.node(node)?;
            let plan = config
                .plans
                .get(node)
                .cloned()
                .unwrap_or_else(|| FeaturePlan::default_for(spec));
            let (rows, targets) = node_rows(frame, graph, node, &plan, &config.train_range)?;
            match width {
                None => width = Some(plan.len()),
                Some(w) if w != plan.len() => {
                    return Err(Error::InvalidConfig(format!(
                        "pooled nodes disagree on feature arity ({} vs {})",
                        w,
                        plan.len()
                    )))
                }
                _ => {}
            }
            stacked_rows.extend(rows.iter().cloned());
            stacked_targets.extend(targets.iter().cloned());
            per_node.push((node.clone(), plan, rows, targets));
        }
        let fitted = config.regressor.fit(&stacked_rows, &stacked_targets)?;
        for (node, plan, rows, targets) in per_node {
            let scale = residual_scale(&fitted, &rows, &targets)?;
            let spec = graph.node(&node)?;
            models.insert(
                node.clone(),
                FittedNodeModel {
                    node,
                    feature_names: plan.names(&spec.parents),
                    plan,
                    regressor: Arc::clone(&fitted),
                    residual_scale: scale,
                    train_rows: rows.len(),
                },
            );
        }
    }

    Ok(FittedScm {
        graph: graph.clone(),
        models,
        analytic,
    })
}

/// Holdout error of a node model over a day range (disjoint from training by
/// the caller's choice).
pub fn evaluate_node_model(
    scm: &FittedScm,
    frame: &Frame,
    node: &str,
    holdout: Range<usize>,
) -> Result<PredictionMetrics> {
    let mut predicted = Vec::new();
    let mut actual = Vec::new();
    for t in holdout {
        predicted.push(scm.predict_node(frame, node, t)?);
        actual.push(frame.value(node, t)?);
    }
    prediction_metrics(&predicted, &actual)
}
