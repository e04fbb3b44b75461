//! Attribution scores: counterfactual Shapley values (exact and Monte
//! Carlo), direct-model and interventional Shapley baselines, naive delta
//! rankings, axiom checks and category rollups.
//!
//! The score of input X averages its counterfactual marginal contribution
//! `Y_s'(u) - Y_{x',s'}(u)` over subsets S of the other inputs, weighted
//! `1/(n C(n-1,|S|))`. Exact enumeration walks all 2^n assignments through
//! the memoized session; the Monte Carlo estimator samples whole input
//! permutations, so each sample's marginals telescope and efficiency holds
//! by construction.

use crate::counterfactual::CounterfactualSession;
use crate::error::{Error, Result};
use crate::panel::PanelDataset;
use crate::regressor::FittedRegressor;
use crate::rng::stream_rng;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};

/// Exact enumeration refuses beyond this many inputs.
pub const EXACT_INPUT_CAP: usize = 20;
/// Exact enumeration logs a warning beyond this many inputs.
pub const EXACT_WARN_LIMIT: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributionMethod {
    CfShapleyExact,
    CfShapleyMc,
    ShapleyDirect,
    DoShapley,
    AdDemandDelta,
    QueryVolumeDelta,
    ProductDelta,
}

impl AttributionMethod {
    pub fn name(&self) -> &'static str {
        match self {
            AttributionMethod::CfShapleyExact => "cf_shapley_exact",
            AttributionMethod::CfShapleyMc => "cf_shapley_mc",
            AttributionMethod::ShapleyDirect => "shapley_direct",
            AttributionMethod::DoShapley => "do_shapley",
            AttributionMethod::AdDemandDelta => "ad_demand_delta",
            AttributionMethod::QueryVolumeDelta => "qv_delta",
            AttributionMethod::ProductDelta => "product_delta",
        }
    }
}

/// Per-input scores plus estimator metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttributionResult {
    pub method: AttributionMethod,
    pub scores: BTreeMap<String, f64>,
    /// `sum(scores) - (Y(u) - Y_allref(u))`; absent for rank-only methods.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub efficiency_residual: Option<f64>,
    /// Per-input standard error of the Monte Carlo mean.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc_std_error: Option<BTreeMap<String, f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Monte Carlo sample count (permutations).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
}

impl AttributionResult {
    /// Key of the highest-scoring entry; ties break to the lexicographically
    /// smallest key.
    pub fn top(&self) -> Option<&str> {
        let mut best: Option<(&str, f64)> = None;
        for (k, &v) in &self.scores {
            match best {
                None => best = Some((k, v)),
                Some((_, bv)) if v > bv => best = Some((k, v)),
                _ => {}
            }
        }
        best.map(|(k, _)| k)
    }

    /// Quadrature-combined Monte Carlo standard error of the score sum.
    pub fn combined_std_error(&self) -> Option<f64> {
        self.mc_std_error
            .as_ref()
            .map(|m| m.values().map(|se| se * se).sum::<f64>().sqrt())
    }
}

fn binomials(n: usize) -> Vec<f64> {
    // C(n-1, s) for s = 0..n-1
    let mut c = vec![1.0; n];
    for s in 1..n {
        c[s] = c[s - 1] * (n - s) as f64 / s as f64;
    }
    c
}

/// Exact subset-enumeration scores. 2^n counterfactuals through the session
/// cache; hard-capped at [`EXACT_INPUT_CAP`] inputs.
pub fn cf_shapley_exact(session: &mut CounterfactualSession) -> Result<AttributionResult> {
    let inputs = session.inputs().to_vec();
    let n = inputs.len();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if n > EXACT_INPUT_CAP {
        return Err(Error::TooManyInputs {
            n,
            max: EXACT_INPUT_CAP,
        });
    }
    if n > EXACT_WARN_LIMIT {
        log::warn!(
            "exact enumeration over {n} inputs evaluates {} counterfactuals",
            1u64 << n
        );
    }
    let total_masks = 1usize << n;
    let mut values = vec![0.0; total_masks];
    for (bits, slot) in values.iter_mut().enumerate() {
        *slot = session.value_for_reference_bits(bits as u64)?;
    }
    let weights = binomials(n); // C(n-1, s)
    let mut phi = vec![0.0; n];
    for bits in 0..total_masks {
        let s = bits.count_ones() as usize;
        if s >= n {
            continue;
        }
        let w = 1.0 / (n as f64 * weights[s]);
        for (x, phi_x) in phi.iter_mut().enumerate() {
            if bits >> x & 1 == 0 {
                *phi_x += (values[bits] - values[bits | (1 << x)]) * w;
            }
        }
    }
    let target = values[0] - values[total_masks - 1];
    let sum: f64 = phi.iter().sum();
    Ok(AttributionResult {
        method: AttributionMethod::CfShapleyExact,
        scores: inputs.into_iter().zip(phi.iter().copied()).collect(),
        efficiency_residual: Some(sum - target),
        mc_std_error: None,
        seed: None,
        samples: None,
    })
}

/// Monte Carlo permutation estimator. Each sampled permutation contributes
/// one marginal per input from n+1 counterfactual evaluations (memoized
/// across permutations). Deterministic for a given seed.
pub fn cf_shapley_mc(
    session: &mut CounterfactualSession,
    samples: usize,
    seed: u64,
) -> Result<AttributionResult> {
    if samples == 0 {
        return Err(Error::InvalidConfig("need at least one permutation".into()));
    }
    let inputs = session.inputs().to_vec();
    let n = inputs.len();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let mut rng = stream_rng(seed, "attribution/mc");
    let mut perm: Vec<usize> = (0..n).collect();
    let mut prefix: Vec<usize> = Vec::with_capacity(n);
    let mut mean = vec![0.0; n];
    let mut m2 = vec![0.0; n];
    for sample in 0..samples {
        perm.shuffle(&mut rng);
        prefix.clear();
        let mut prev = session.value_for_reference_set(&prefix);
        for &p in &perm {
            prefix.push(p);
            let next = session.value_for_reference_set(&prefix);
            let marginal = prev - next;
            let delta = marginal - mean[p];
            mean[p] += delta / (sample + 1) as f64;
            m2[p] += delta * (marginal - mean[p]);
            prev = next;
        }
    }
    let target = {
        let all: Vec<usize> = (0..n).collect();
        session.value_for_reference_set(&[]) - session.value_for_reference_set(&all)
    };
    let m = samples as f64;
    let se: Vec<f64> = m2.iter().map(|&s| (s / m / m).sqrt()).collect();
    let sum: f64 = mean.iter().sum();
    Ok(AttributionResult {
        method: AttributionMethod::CfShapleyMc,
        scores: inputs.iter().cloned().zip(mean.iter().copied()).collect(),
        efficiency_residual: Some(sum - target),
        mc_std_error: Some(inputs.into_iter().zip(se).collect()),
        seed: Some(seed),
        samples: Some(samples),
    })
}

/// Masking game over a direct input->metric model: members of S take the
/// observed row, the rest fall back to baseline rows (the reference row, or
/// resampled marginals).
struct MaskedGame<'a> {
    model: &'a dyn FittedRegressor,
    observed: &'a [f64],
    baseline_rows: Vec<Vec<f64>>,
    baseline_value: f64,
    cache: HashMap<u64, f64>,
}

impl MaskedGame<'_> {
    fn value(&mut self, bits: u64) -> Result<f64> {
        if let Some(&v) = self.cache.get(&bits) {
            return Ok(v);
        }
        let n = self.observed.len();
        let mut acc = 0.0;
        let mut row = vec![0.0; n];
        for base in &self.baseline_rows {
            for j in 0..n {
                row[j] = if bits >> j & 1 == 1 {
                    self.observed[j]
                } else {
                    base[j]
                };
            }
            acc += self.model.predict(&row)?;
        }
        let v = acc / self.baseline_rows.len() as f64 - self.baseline_value;
        self.cache.insert(bits, v);
        Ok(v)
    }
}

fn shapley_over_game(
    game: &mut MaskedGame,
    names: &[String],
    method: AttributionMethod,
    samples: usize,
    seed: u64,
) -> Result<AttributionResult> {
    let n = names.len();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if n > 64 {
        return Err(Error::TooManyInputs { n, max: 64 });
    }
    if samples == 0 {
        return Err(Error::InvalidConfig("need at least one permutation".into()));
    }
    let mut rng = stream_rng(seed, "attribution/game-mc");
    let mut perm: Vec<usize> = (0..n).collect();
    let mut mean = vec![0.0; n];
    let mut m2 = vec![0.0; n];
    for sample in 0..samples {
        perm.shuffle(&mut rng);
        let mut bits = 0u64;
        let mut prev = game.value(bits)?;
        for &p in &perm {
            bits |= 1 << p;
            let next = game.value(bits)?;
            let marginal = next - prev;
            let delta = marginal - mean[p];
            mean[p] += delta / (sample + 1) as f64;
            m2[p] += delta * (marginal - mean[p]);
            prev = next;
        }
    }
    let full = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    let target = game.value(full)? - game.value(0)?;
    let m = samples as f64;
    let se: Vec<f64> = m2.iter().map(|&s| (s / m / m).sqrt()).collect();
    let sum: f64 = mean.iter().sum();
    Ok(AttributionResult {
        method,
        scores: names.iter().cloned().zip(mean.iter().copied()).collect(),
        efficiency_residual: Some(sum - target),
        mc_std_error: Some(names.iter().cloned().zip(se).collect()),
        seed: Some(seed),
        samples: Some(samples),
    })
}

/// Shapley scores of a direct model with reference-replacement masking:
/// `v(S) = g(S at observed, rest at reference) - g(all reference)`.
pub fn shapley_direct(
    model: &dyn FittedRegressor,
    input_names: &[String],
    observed: &[f64],
    reference: &[f64],
    samples: usize,
    seed: u64,
) -> Result<AttributionResult> {
    if observed.len() != input_names.len() || reference.len() != input_names.len() {
        return Err(Error::DimensionMismatch {
            expected: input_names.len(),
            got: observed.len().min(reference.len()),
        });
    }
    let baseline_value = model.predict(reference)?;
    let mut game = MaskedGame {
        model,
        observed,
        baseline_rows: vec![reference.to_vec()],
        baseline_value,
        cache: HashMap::new(),
    };
    shapley_over_game(
        &mut game,
        input_names,
        AttributionMethod::ShapleyDirect,
        samples,
        seed,
    )
}

/// Shapley scores of the interventional game
/// `v(S) = E[Y | do(X_S = observed)] - E[Y]`, with expectations estimated by
/// resampling the remaining inputs from their empirical marginals. Valid
/// when the attributed inputs are mutually independent direct causes, which
/// holds for the panel graph.
pub fn do_shapley(
    model: &dyn FittedRegressor,
    input_names: &[String],
    observed: &[f64],
    marginal_rows: &[Vec<f64>],
    samples: usize,
    seed: u64,
    n_resamples: usize,
) -> Result<AttributionResult> {
    if observed.len() != input_names.len() {
        return Err(Error::DimensionMismatch {
            expected: input_names.len(),
            got: observed.len(),
        });
    }
    if marginal_rows.len() < 30 {
        return Err(Error::InsufficientData {
            rows: marginal_rows.len(),
            features: input_names.len(),
            needed: 30,
        });
    }
    let n = input_names.len();
    // Common random draws: one background row set reused across every
    // coalition, entries drawn independently per (sample, input).
    let mut rng = stream_rng(seed, "attribution/do-draws");
    let mut baseline_rows = Vec::with_capacity(n_resamples.max(1));
    for _ in 0..n_resamples.max(1) {
        let mut row = vec![0.0; n];
        for (j, slot) in row.iter_mut().enumerate() {
            let idx = rng.gen_range(0..marginal_rows.len());
            *slot = marginal_rows[idx][j];
        }
        baseline_rows.push(row);
    }
    let mut acc = 0.0;
    for row in &baseline_rows {
        acc += model.predict(row)?;
    }
    let baseline_value = acc / baseline_rows.len() as f64;
    let mut game = MaskedGame {
        model,
        observed,
        baseline_rows,
        baseline_value,
        cache: HashMap::new(),
    };
    shapley_over_game(
        &mut game,
        input_names,
        AttributionMethod::DoShapley,
        samples,
        seed,
    )
}

/// Absolute or relative change magnitudes for the delta baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaMode {
    #[default]
    Absolute,
    Percent,
}

fn delta(mode: DeltaMode, now: f64, before: f64) -> f64 {
    match mode {
        DeltaMode::Absolute => (now - before).abs(),
        DeltaMode::Percent => {
            if before == 0.0 {
                (now - before).abs()
            } else {
                (now - before).abs() / before.abs() * 100.0
            }
        }
    }
}

/// Rank-only baselines: per-category change magnitude of ad demand, query
/// volume, and density-times-volume between the attributed and reference day.
pub fn delta_baselines(
    panel: &PanelDataset,
    t: usize,
    t_ref: usize,
    mode: DeltaMode,
) -> Result<[AttributionResult; 3]> {
    let days = panel.days();
    if t >= days || t_ref >= days {
        return Err(Error::InsufficientHistory {
            t: t.max(t_ref),
            required: days,
        });
    }
    let mut ad = BTreeMap::new();
    let mut qv = BTreeMap::new();
    let mut product = BTreeMap::new();
    for (c, cat) in panel.categories().iter().enumerate() {
        ad.insert(cat.clone(), delta(mode, panel.ad(c)[t], panel.ad(c)[t_ref]));
        qv.insert(cat.clone(), delta(mode, panel.qv(c)[t], panel.qv(c)[t_ref]));
        product.insert(
            cat.clone(),
            delta(
                mode,
                panel.den(c)[t] * panel.qv(c)[t],
                panel.den(c)[t_ref] * panel.qv(c)[t_ref],
            ),
        );
    }
    let wrap = |method, scores| AttributionResult {
        method,
        scores,
        efficiency_residual: None,
        mc_std_error: None,
        seed: None,
        samples: None,
    };
    Ok([
        wrap(AttributionMethod::AdDemandDelta, ad),
        wrap(AttributionMethod::QueryVolumeDelta, qv),
        wrap(AttributionMethod::ProductDelta, product),
    ])
}

/// Result of checking the efficiency and approximation axioms for a set of
/// scores.
#[derive(Debug, Clone, Serialize)]
pub struct AxiomReport {
    /// `sum(scores) - (Y(u) - Y_allref(u))`.
    pub efficiency_residual: f64,
    /// Kernel-weighted least-squares objective at the given scores.
    pub objective_at_scores: f64,
    /// Same objective at the efficiency-constrained optimum.
    pub objective_at_optimum: f64,
    /// `objective_at_scores - objective_at_optimum`; ~0 for exact scores.
    pub approximation_gap: f64,
}

fn choose(n: usize, k: usize) -> f64 {
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c
}

/// Shapley kernel weight for a proper non-empty subset of size `s`.
pub fn kernel_weight(n: usize, s: usize) -> f64 {
    (n - 1) as f64 / (choose(n, s) * (s * (n - s)) as f64)
}

#[allow(clippy::needless_range_loop)]
/// Verify efficiency and the weighted-least-squares characterization.
///
/// The objective runs over proper non-empty reference sets with the Shapley
/// kernel weights; its minimum subject to the efficiency constraint is
/// attained by the exact scores. Capped at [`EXACT_WARN_LIMIT`] inputs.
pub fn check_axioms(
    session: &mut CounterfactualSession,
    scores: &BTreeMap<String, f64>,
) -> Result<AxiomReport> {
    let inputs = session.inputs().to_vec();
    let n = inputs.len();
    if n > EXACT_WARN_LIMIT {
        return Err(Error::TooManyInputs {
            n,
            max: EXACT_WARN_LIMIT,
        });
    }
    if n < 2 {
        return Err(Error::InvalidConfig(
            "the approximation check needs at least two inputs".into(),
        ));
    }
    let phi: Vec<f64> = inputs
        .iter()
        .map(|name| {
            scores
                .get(name)
                .copied()
                .ok_or_else(|| Error::UnmappedInput(name.clone()))
        })
        .collect::<Result<_>>()?;

    let total_masks = 1usize << n;
    let observed = session.value_for_reference_bits(0)?;
    let full = session.value_for_reference_bits(total_masks as u64 - 1)?;
    let v_total = observed - full;

    // game value v(S) = Y(u) - Y_{s'}(u), over proper non-empty S
    let mut game = vec![0.0; total_masks];
    for (bits, slot) in game.iter_mut().enumerate().take(total_masks - 1).skip(1) {
        *slot = observed - session.value_for_reference_bits(bits as u64)?;
    }
    let objective_at = |phi: &[f64]| -> f64 {
        let mut obj = 0.0;
        for bits in 1..(total_masks - 1) {
            let s = bits.count_ones() as usize;
            let w = kernel_weight(n, s);
            let mut sum_phi = 0.0;
            for (x, phi_x) in phi.iter().enumerate() {
                if bits >> x & 1 == 1 {
                    sum_phi += phi_x;
                }
            }
            obj += w * (game[bits] - sum_phi) * (game[bits] - sum_phi);
        }
        obj
    };

    // efficiency-constrained optimum via a bordered KKT system
    let mut a = nalgebra::DMatrix::<f64>::zeros(n + 1, n + 1);
    let mut b = nalgebra::DVector::<f64>::zeros(n + 1);
    for bits in 1..(total_masks - 1) {
        let s = bits.count_ones() as usize;
        let w = kernel_weight(n, s);
        for i in 0..n {
            if bits >> i & 1 == 0 {
                continue;
            }
            b[i] += w * game[bits];
            for j in 0..n {
                if bits >> j & 1 == 1 {
                    a[(i, j)] += w;
                }
            }
        }
    }
    for i in 0..n {
        a[(i, n)] = 0.5;
        a[(n, i)] = 1.0;
    }
    b[n] = v_total;
    let solved = nalgebra::linalg::LU::new(a)
        .solve(&b)
        .ok_or(Error::SingularDesign)?;
    let optimum: Vec<f64> = solved.as_slice()[..n].to_vec();

    let sum: f64 = phi.iter().sum();
    let objective_at_scores = objective_at(&phi);
    let objective_at_optimum = objective_at(&optimum);
    Ok(AxiomReport {
        efficiency_residual: sum - v_total,
        objective_at_scores,
        objective_at_optimum,
        approximation_gap: objective_at_scores - objective_at_optimum,
    })
}

/// Which input series of a category an attribution input belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputChannel {
    AdDemand,
    QueryVolume,
}

/// Per-category totals split by input channel.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RollupRow {
    pub ad_demand: f64,
    pub query_volume: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CategoryRollup {
    pub per_category: BTreeMap<String, RollupRow>,
    pub grand_total: f64,
}

impl CategoryRollup {
    /// Category with the highest total; ties break to the lexicographically
    /// smallest name.
    pub fn top_category(&self) -> Option<&str> {
        let mut best: Option<(&str, f64)> = None;
        for (k, row) in &self.per_category {
            match best {
                None => best = Some((k, row.total)),
                Some((_, bv)) if row.total > bv => best = Some((k, row.total)),
                _ => {}
            }
        }
        best.map(|(k, _)| k)
    }
}

/// Sum input scores into per-category ad/qv columns.
pub fn rollup_by_category(
    result: &AttributionResult,
    category_map: &BTreeMap<String, (String, InputChannel)>,
) -> Result<CategoryRollup> {
    let mut per_category: BTreeMap<String, RollupRow> = BTreeMap::new();
    let mut grand_total = 0.0;
    for (input, &score) in &result.scores {
        let (category, channel) = category_map
            .get(input)
            .ok_or_else(|| Error::UnmappedInput(input.clone()))?;
        let row = per_category.entry(category.clone()).or_default();
        match channel {
            InputChannel::AdDemand => row.ad_demand += score,
            InputChannel::QueryVolume => row.query_volume += score,
        }
        row.total += score;
        grand_total += score;
    }
    Ok(CategoryRollup {
        per_category,
        grand_total,
    })
}
