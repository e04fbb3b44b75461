//! Property tests for the structural invariants.

use cfattrib_core::attribution::cf_shapley_exact;
use cfattrib_core::counterfactual::CounterfactualSession;
use cfattrib_core::frame::Frame;
use cfattrib_core::graph::{build_graph, NodeSpec};
use cfattrib_core::metrics::{aggregate_daily_density, prediction_metrics};
use cfattrib_core::regressor::RegressorKind;
use cfattrib_core::scm::{fit_scm, AnalyticRegistry, FitConfig, FittedScm};
use proptest::prelude::*;
use std::sync::Arc;

/// Random DAG: node i may take parents among 0..i, the sink collects every
/// childless node, so construction always yields a valid graph.
fn arb_dag() -> impl Strategy<Value = Vec<Vec<usize>>> {
    (2usize..8).prop_flat_map(|n| {
        let parent_sets: Vec<BoxedStrategy<Vec<usize>>> = (0..n)
            .map(|i| {
                if i == 0 {
                    Just(Vec::new()).boxed()
                } else {
                    proptest::collection::vec(0..i, 0..=i.min(3)).boxed()
                }
            })
            .collect();
        parent_sets
    })
}

fn graph_from(edges: &[Vec<usize>]) -> cfattrib_core::CausalGraph {
    let name = |i: usize| format!("n{i:02}");
    let mut specs = Vec::new();
    let mut has_child = vec![false; edges.len()];
    for (i, parents) in edges.iter().enumerate() {
        let mut ps: Vec<String> = parents.iter().map(|&p| name(p)).collect();
        ps.sort();
        ps.dedup();
        for &p in parents {
            has_child[p] = true;
        }
        if ps.is_empty() {
            specs.push(NodeSpec::input(name(i)));
        } else {
            specs.push(NodeSpec::learned(name(i), ps, vec![]));
        }
    }
    let sink_parents: Vec<String> = (0..edges.len())
        .filter(|&i| !has_child[i])
        .map(name)
        .collect();
    specs.push(NodeSpec::analytic("sink", sink_parents, "sum"));
    build_graph(specs, "sink").unwrap()
}

proptest! {
    #[test]
    fn topological_order_is_a_valid_permutation(edges in arb_dag()) {
        let graph = graph_from(&edges);
        let order = graph.topological_order();
        let mut names: Vec<&str> = order.iter().map(String::as_str).collect();
        names.sort_unstable();
        let mut expect: Vec<String> = graph.nodes().map(|s| s.name.clone()).collect();
        expect.sort();
        prop_assert_eq!(names, expect.iter().map(String::as_str).collect::<Vec<_>>());
        let pos = |n: &str| order.iter().position(|x| x == n).unwrap();
        for spec in graph.nodes() {
            for parent in &spec.parents {
                prop_assert!(pos(parent) < pos(&spec.name), "{} must precede {}", parent, spec.name);
            }
        }
        // determinism under rebuild
        let again = graph_from(&edges);
        prop_assert_eq!(order, again.topological_order());
    }

    #[test]
    fn aggregate_is_scale_invariant_and_bounded(
        den in proptest::collection::vec(0.0f64..100.0, 1..12),
        qv_raw in proptest::collection::vec(0.1f64..1000.0, 1..12),
        scale in 0.001f64..1000.0,
    ) {
        let k = den.len().min(qv_raw.len());
        let den = &den[..k];
        let qv = &qv_raw[..k];
        let y = aggregate_daily_density(den, qv).unwrap();
        let scaled: Vec<f64> = qv.iter().map(|v| v * scale).collect();
        let y2 = aggregate_daily_density(den, &scaled).unwrap();
        prop_assert!((y - y2).abs() <= 1e-9 * y.abs().max(1.0));
        let lo = den.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = den.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(y >= lo - 1e-9 && y <= hi + 1e-9);
    }

    #[test]
    fn prediction_metrics_ignore_row_order(
        pairs in proptest::collection::vec((0.1f64..100.0, 0.1f64..100.0), 2..30),
        seed in 0u64..1000,
    ) {
        let predicted: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let actual: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let base = prediction_metrics(&predicted, &actual).unwrap();
        use rand::seq::SliceRandom;
        let mut idx: Vec<usize> = (0..pairs.len()).collect();
        idx.shuffle(&mut cfattrib_core::rng::stream_rng(seed, "test/perm"));
        let p2: Vec<f64> = idx.iter().map(|&i| predicted[i]).collect();
        let a2: Vec<f64> = idx.iter().map(|&i| actual[i]).collect();
        let perm = prediction_metrics(&p2, &a2).unwrap();
        prop_assert!((base.mean_ape - perm.mean_ape).abs() < 1e-9);
        prop_assert!((base.median_ape - perm.median_ape).abs() < 1e-9);
        prop_assert!((base.smape - perm.smape).abs() < 1e-9);
    }
}

/// Linear sink over n inputs with explicit observed/reference rows.
fn linear_scm(coefs: &[f64], observed: &[f64], reference: &[f64]) -> (FittedScm, Frame) {
    let n = coefs.len();
    let names: Vec<String> = (0..n).map(|i| format!("x{i:02}")).collect();
    let mut specs: Vec<NodeSpec> = names.iter().map(NodeSpec::input).collect();
    specs.push(NodeSpec::analytic("y", names.clone(), "lin"));
    let graph = build_graph(specs, "y").unwrap();
    let weights = coefs.to_vec();
    let mut reg = AnalyticRegistry::default();
    reg.register(
        "lin",
        Arc::new(move |v: &[f64]| v.iter().zip(&weights).map(|(x, c)| x * c).sum()),
    );
    let mut frame = Frame::new(2);
    let y = |row: &[f64]| -> f64 { row.iter().zip(coefs).map(|(x, c)| x * c).sum() };
    for (i, name) in names.iter().enumerate() {
        frame
            .insert(name.clone(), vec![reference[i], observed[i]])
            .unwrap();
    }
    frame.insert("y", vec![y(reference), y(observed)]).unwrap();
    let scm = fit_scm(
        &graph,
        &frame,
        &FitConfig::new(RegressorKind::default(), 0..2),
        &reg,
    )
    .unwrap();
    (scm, frame)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn counterfactual_is_a_pure_function_of_the_assignment(
        coefs in proptest::collection::vec(-5.0f64..5.0, 2..6),
        seed in 0u64..10_000,
    ) {
        let n = coefs.len();
        let mut rng = cfattrib_core::rng::stream_rng(seed, "test/rows");
        use rand::Rng;
        let observed: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let reference: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let (scm, frame) = linear_scm(&coefs, &observed, &reference);
        let mut session = CounterfactualSession::new(&scm, &frame, 1, 0).unwrap();
        // visiting subsets in two different orders yields identical values
        let masks: Vec<u64> = (0..(1u64 << n)).collect();
        let forward: Vec<f64> = masks.iter().map(|&m| session.value_for_reference_bits(m).unwrap()).collect();
        let mut session2 = CounterfactualSession::new(&scm, &frame, 1, 0).unwrap();
        let backward: Vec<f64> = masks.iter().rev().map(|&m| session2.value_for_reference_bits(m).unwrap()).collect();
        for (i, &m) in masks.iter().enumerate() {
            prop_assert_eq!(forward[i].to_bits(), backward[masks.len() - 1 - i].to_bits(), "mask {}", m);
        }
        // empty reference set returns the observed output bit-exactly
        let y_obs = frame.value("y", 1).unwrap();
        prop_assert_eq!(forward[0].to_bits(), y_obs.to_bits());
        // linear response: value(S) = y_obs - sum_{i in S} a_i (x_i - x_i_ref)
        for (i, &m) in masks.iter().enumerate() {
            let mut expect = y_obs;
            for j in 0..n {
                if m >> j & 1 == 1 {
                    expect -= coefs[j] * (observed[j] - reference[j]);
                }
            }
            prop_assert!((forward[i] - expect).abs() < 1e-9, "mask {}: {} vs {}", m, forward[i], expect);
        }
    }

    #[test]
    fn exact_scores_on_linear_systems_are_coefficient_times_delta(
        coefs in proptest::collection::vec(-5.0f64..5.0, 2..6),
        seed in 0u64..10_000,
    ) {
        let n = coefs.len();
        let mut rng = cfattrib_core::rng::stream_rng(seed, "test/rows2");
        use rand::Rng;
        let observed: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let reference: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let (scm, frame) = linear_scm(&coefs, &observed, &reference);
        let mut session = CounterfactualSession::new(&scm, &frame, 1, 0).unwrap();
        let result = cf_shapley_exact(&mut session).unwrap();
        for (j, name) in (0..n).map(|i| format!("x{i:02}")).enumerate() {
            let expect = coefs[j] * (observed[j] - reference[j]);
            prop_assert!((result.scores[&name] - expect).abs() < 1e-9);
        }
        prop_assert!(result.efficiency_residual.unwrap().abs() < 1e-9);
    }
}

/// Mean of Monte Carlo scores over many seeds stays within three combined
/// standard errors of the exact scores (estimator unbiasedness).
#[test]
fn mc_estimator_is_unbiased_on_the_threshold_example() {
    use cfattrib_core::attribution::cf_shapley_mc;
    use cfattrib_core::scm::AnalyticRegistry;

    let graph = build_graph(
        vec![
            NodeSpec::input("x1"),
            NodeSpec::input("x2"),
            NodeSpec::input("x3"),
            NodeSpec::analytic("load", vec!["x1".into(), "x2".into(), "x3".into()], "load"),
            NodeSpec::analytic("y", vec!["load".into()], "threshold"),
        ],
        "y",
    )
    .unwrap();
    let mut reg = AnalyticRegistry::default();
    reg.register(
        "load",
        Arc::new(|v: &[f64]| 0.5 * v[0] + 0.4 * v[1] + 0.9 * v[2]),
    );
    reg.register(
        "threshold",
        Arc::new(|v: &[f64]| if v[0] >= 0.9 { 1.0 } else { 0.0 }),
    );
    let mut frame = Frame::new(2);
    for n in ["x1", "x2", "x3"] {
        frame.insert(n, vec![0.0, 1.0]).unwrap();
    }
    frame.insert("load", vec![0.0, 1.8]).unwrap();
    frame.insert("y", vec![0.0, 1.0]).unwrap();
    let scm = fit_scm(
        &graph,
        &frame,
        &FitConfig::new(RegressorKind::default(), 0..2),
        &reg,
    )
    .unwrap();

    let exact = {
        let mut s = CounterfactualSession::new(&scm, &frame, 1, 0).unwrap();
        cf_shapley_exact(&mut s).unwrap()
    };
    let runs = 100;
    let m = 200;
    let mut sums: std::collections::BTreeMap<String, f64> = Default::default();
    let mut ses: std::collections::BTreeMap<String, f64> = Default::default();
    for seed in 0..runs {
        let mut s = CounterfactualSession::new(&scm, &frame, 1, 0).unwrap();
        let mc = cf_shapley_mc(&mut s, m, seed).unwrap();
        for (k, v) in &mc.scores {
            *sums.entry(k.clone()).or_default() += v;
        }
        for (k, v) in mc.mc_std_error.as_ref().unwrap() {
            *ses.entry(k.clone()).or_default() += v;
        }
    }
    for (k, exact_score) in &exact.scores {
        let mean = sums[k] / runs as f64;
        let avg_se = ses[k] / runs as f64;
        let bound = 3.0 * avg_se / (runs as f64).sqrt() + 1e-9;
        assert!(
            (mean - exact_score).abs() <= bound,
            "{k}: mean {mean} vs exact {exact_score} (bound {bound})"
        );
    }
}
