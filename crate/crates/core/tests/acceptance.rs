//! Acceptance suite: every release criterion with its stated tolerance,
//! one printed pass/fail line per criterion.
//!
//! Expected values follow the "oracles first" rule: derived numbers are
//! computed by independent routes inside this file (brute-force permutation
//! enumeration, an independent weighted-least-squares solver, direct
//! evaluation of stated equations), never by the code path under test.

use cfattrib_core::attribution::{
    cf_shapley_exact, cf_shapley_mc, check_axioms, delta_baselines, kernel_weight,
    rollup_by_category, DeltaMode,
};
use cfattrib_core::counterfactual::{CounterfactualSession, InputState};
use cfattrib_core::features::{FeaturePlan, FeatureTerm};
use cfattrib_core::frame::Frame;
use cfattrib_core::graph::{build_graph, NodeSpec};
use cfattrib_core::metrics::aggregate_daily_density;
use cfattrib_core::outlier::{default_daily_lags, detect_outliers, fit_daily_model};
use cfattrib_core::panel::den_node;
use cfattrib_core::regressor::RegressorKind;
use cfattrib_core::report::AttributionReport;
use cfattrib_core::rng::stream_rng;
use cfattrib_core::scm::{fit_scm, AnalyticRegistry, FitConfig, FittedScm};
use cfattrib_core::simulation::{
    apply_intervention, fit_benchmark_scm, generate_dataset, run_accuracy_experiment, BenchMethod,
    ExperimentConfig, InterventionKind, InterventionSpec, SimulationConfig, BURN_IN_DAYS,
    REFERENCE_LAG,
};
use rand::Rng;
use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

fn verdict(criterion: &str, pass: bool, detail: &str) {
    println!(
        "[acceptance] {criterion}: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "{criterion}: {detail}");
}

/// The load-threshold system from the worked example, evaluated through the
/// engine.
fn crash_system() -> (FittedScm, Frame) {
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
    frame.insert("x1", vec![0.0, 1.0]).unwrap();
    frame.insert("x2", vec![0.0, 1.0]).unwrap();
    frame.insert("x3", vec![0.0, 1.0]).unwrap();
    frame.insert("load", vec![0.0, 1.8]).unwrap();
    frame.insert("y", vec![0.0, 1.0]).unwrap();
    let scm = fit_scm(
        &graph,
        &frame,
        &FitConfig::new(RegressorKind::default(), 0..2),
        &reg,
    )
    .unwrap();
    (scm, frame)
}

/// Independent oracle: brute-force Shapley over all 3! permutations of the
/// stated equations, no engine code involved.
fn crash_oracle() -> [f64; 3] {
    let y = |x: [f64; 3]| -> f64 {
        if 0.5 * x[0] + 0.4 * x[1] + 0.9 * x[2] >= 0.9 {
            1.0
        } else {
            0.0
        }
    };
    let observed = [1.0, 1.0, 1.0];
    let reference = [0.0, 0.0, 0.0];
    let perms = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let mut phi = [0.0; 3];
    for perm in perms {
        let mut x = observed;
        let mut prev = y(x);
        for &p in &perm {
            x[p] = reference[p];
            let next = y(x);
            phi[p] += prev - next;
            prev = next;
        }
    }
    phi.map(|v| v / 6.0)
}

#[test]
fn c01_crash_example_exactness() {
    let start = Instant::now();
    let oracle = crash_oracle();
    assert!((oracle[0] - 1.0 / 6.0).abs() < 1e-15);
    assert!((oracle[1] - 1.0 / 6.0).abs() < 1e-15);
    assert!((oracle[2] - 2.0 / 3.0).abs() < 1e-15);

    let (scm, frame) = crash_system();
    let mut session = CounterfactualSession::new(&scm, &frame, 1, 0).unwrap();
    let result = cf_shapley_exact(&mut session).unwrap();
    let got = [
        result.scores["x1"],
        result.scores["x2"],
        result.scores["x3"],
    ];
    let max_err = got
        .iter()
        .zip(&oracle)
        .map(|(g, o)| (g - o).abs())
        .fold(0.0, f64::max);
    let sum: f64 = got.iter().sum();
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        "C1 crash-example exactness",
        max_err < 1e-9 && (sum - 1.0).abs() < 1e-9 && elapsed < 1.0,
        &format!("max |err| {max_err:.2e}, sum {sum:.12}, {elapsed:.2}s"),
    );
}

/// Random noise-free SCM: linear plus pairwise interactions over n inputs.
fn random_system(n: usize, seed: u64) -> (FittedScm, Frame) {
    let mut rng = stream_rng(seed, "acceptance/system");
    let linear: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let pair: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let names: Vec<String> = (0..n).map(|i| format!("x{i:02}")).collect();
    let mut specs: Vec<NodeSpec> = names.iter().map(NodeSpec::input).collect();
    specs.push(NodeSpec::analytic("y", names.clone(), "game"));
    let graph = build_graph(specs, "y").unwrap();
    let (lin, pw, nn) = (linear.clone(), pair.clone(), n);
    let f = move |v: &[f64]| -> f64 {
        let mut acc = 0.0;
        for i in 0..nn {
            acc += lin[i] * v[i];
            for j in (i + 1)..nn {
                acc += pw[i * nn + j] * v[i] * v[j];
            }
        }
        acc
    };
    let mut reg = AnalyticRegistry::default();
    reg.register("game", Arc::new(f.clone()));
    let observed: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let reference: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let mut frame = Frame::new(2);
    for (i, name) in names.iter().enumerate() {
        frame
            .insert(name.clone(), vec![reference[i], observed[i]])
            .unwrap();
    }
    frame
        .insert("y", vec![f(&reference), f(&observed)])
        .unwrap();
    let scm = fit_scm(
        &graph,
        &frame,
        &FitConfig::new(RegressorKind::default(), 0..2),
        &reg,
    )
    .unwrap();
    (scm, frame)
}

#[test]
fn c02_efficiency_exact_and_monte_carlo() {
    let start = Instant::now();
    let mut exact_ok = 0;
    let mut mc_ok = 0;
    for seed in 0..50u64 {
        let (scm, frame) = random_system(5, seed);
        let mut session = CounterfactualSession::new(&scm, &frame, 1, 0).unwrap();
        let target = session.value_for_reference_bits(0).unwrap()
            - session.value_for_reference_bits(31).unwrap();
        let exact = cf_shapley_exact(&mut session).unwrap();
        let sum: f64 = exact.scores.values().sum();
        if (sum - target).abs() < 1e-9 {
            exact_ok += 1;
        }
        let mc = cf_shapley_mc(&mut session, 1000, seed).unwrap();
        let mc_sum: f64 = mc.scores.values().sum();
        let se = mc.combined_std_error().unwrap();
        if (mc_sum - target).abs() <= 3.0 * se + 1e-9 {
            mc_ok += 1;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        "C2 efficiency on random systems",
        exact_ok == 50 && mc_ok >= 47 && elapsed < 30.0,
        &format!("exact {exact_ok}/50, mc {mc_ok}/50, {elapsed:.1}s"),
    );
}

#[test]
fn c03_irrelevance_and_symmetry() {
    let start = Instant::now();
    // disconnected input: the sink never reads x02
    let names = ["x00", "x01", "x02"];
    let mut specs: Vec<NodeSpec> = names.iter().map(|n| NodeSpec::input(*n)).collect();
    specs.push(NodeSpec::analytic(
        "y",
        names.iter().map(|s| s.to_string()).collect(),
        "partial",
    ));
    let graph = build_graph(specs, "y").unwrap();
    let mut reg = AnalyticRegistry::default();
    reg.register("partial", Arc::new(|v: &[f64]| 1.5 * v[0] - 0.7 * v[1]));
    let mut frame = Frame::new(2);
    frame.insert("x00", vec![0.2, 1.0]).unwrap();
    frame.insert("x01", vec![-0.3, 0.8]).unwrap();
    frame.insert("x02", vec![2.0, -1.0]).unwrap();
    frame
        .insert("y", vec![1.5 * 0.2 + 0.7 * 0.3, 1.5 - 0.7 * 0.8])
        .unwrap();
    let scm = fit_scm(
        &graph,
        &frame,
        &FitConfig::new(RegressorKind::default(), 0..2),
        &reg,
    )
    .unwrap();
    let mut session = CounterfactualSession::new(&scm, &frame, 1, 0).unwrap();
    let result = cf_shapley_exact(&mut session).unwrap();
    let irrelevant = result.scores["x02"].abs();

    // duplicated inputs: identical effect by construction
    let (scm2, frame2) = {
        let names = ["a", "b", "c"];
        let mut specs: Vec<NodeSpec> = names.iter().map(|n| NodeSpec::input(*n)).collect();
        specs.push(NodeSpec::analytic(
            "y",
            names.iter().map(|s| s.to_string()).collect(),
            "dup",
        ));
        let graph = build_graph(specs, "y").unwrap();
        let mut reg = AnalyticRegistry::default();
        reg.register(
            "dup",
            Arc::new(|v: &[f64]| 2.0 * v[0] + 2.0 * v[1] + 0.5 * v[2] * v[2]),
        );
        let mut frame = Frame::new(2);
        frame.insert("a", vec![0.0, 1.3]).unwrap();
        frame.insert("b", vec![0.0, 1.3]).unwrap();
        frame.insert("c", vec![0.5, 2.0]).unwrap();
        frame
            .insert("y", vec![0.5 * 0.25, 2.0 * 1.3 + 2.0 * 1.3 + 0.5 * 4.0])
            .unwrap();
        let scm = fit_scm(
            &graph,
            &frame,
            &FitConfig::new(RegressorKind::default(), 0..2),
            &reg,
        )
        .unwrap();
        (scm, frame)
    };
    let mut session2 = CounterfactualSession::new(&scm2, &frame2, 1, 0).unwrap();
    let result2 = cf_shapley_exact(&mut session2).unwrap();
    let asym = (result2.scores["a"] - result2.scores["b"]).abs();
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        "C3 irrelevance and symmetry",
        irrelevant < 1e-9 && asym < 1e-9 && elapsed < 5.0,
        &format!("disconnected |phi| {irrelevant:.2e}, |phi_a - phi_b| {asym:.2e}, {elapsed:.2}s"),
    );
}

/// Independent weighted-least-squares oracle: kernel-weighted regression over
/// all proper subsets plus a heavily weighted full-set row pinning the
/// efficiency constraint, solved by SVD least squares.
fn wls_oracle(session: &mut CounterfactualSession, n: usize) -> Vec<f64> {
    let observed = session.value_for_reference_bits(0).unwrap();
    let full_bits = (1u64 << n) - 1;
    let v_total = observed - session.value_for_reference_bits(full_bits).unwrap();
    let mut rows: Vec<(f64, Vec<f64>, f64)> = Vec::new();
    for bits in 1..full_bits {
        let s = bits.count_ones() as usize;
        let w = kernel_weight(n, s);
        let v = observed - session.value_for_reference_bits(bits).unwrap();
        let indicator: Vec<f64> = (0..n).map(|i| ((bits >> i) & 1) as f64).collect();
        rows.push((w, indicator, v));
    }
    rows.push((1e9, vec![1.0; n], v_total));
    let m = rows.len();
    let mut design = nalgebra::DMatrix::<f64>::zeros(m, n);
    let mut rhs = nalgebra::DVector::<f64>::zeros(m);
    for (r, (w, indicator, v)) in rows.iter().enumerate() {
        let sw = w.sqrt();
        for c in 0..n {
            design[(r, c)] = sw * indicator[c];
        }
        rhs[r] = sw * v;
    }
    let svd = nalgebra::linalg::SVD::new(design, true, true);
    svd.solve(&rhs, 1e-12).unwrap().as_slice().to_vec()
}

#[test]
fn c04_approximation_axiom() {
    let start = Instant::now();
    let mut ok = 0;
    for seed in 100..120u64 {
        let (scm, frame) = random_system(4, seed);
        let mut session = CounterfactualSession::new(&scm, &frame, 1, 0).unwrap();
        let exact = cf_shapley_exact(&mut session).unwrap();
        let oracle = wls_oracle(&mut session, 4);
        let report = check_axioms(&mut session, &exact.scores).unwrap();
        let max_gap = exact
            .scores
            .values()
            .zip(&oracle)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if max_gap < 1e-6 && report.approximation_gap.abs() < 1e-6 {
            ok += 1;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        "C4 approximation optimum",
        ok == 20 && elapsed < 10.0,
        &format!("{ok}/20 systems at the optimum, {elapsed:.1}s"),
    );
}

#[test]
fn c05_benchmark_demand_config() {
    let start = Instant::now();
    let cfg = ExperimentConfig {
        methods: vec![BenchMethod::CfShapleyMc { samples: 1000 }],
        interventions: vec![InterventionKind::AdDemand],
        sigmas: vec![0.1, 1.0, 10.0],
        trials: 20,
        seed: 0,
        sim: SimulationConfig::default(),
        direct_regressor: RegressorKind::default(),
    };
    let rows = run_accuracy_experiment(&cfg).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let detail: Vec<String> = rows
        .iter()
        .map(|r| format!("sigma {}: {:.2}", r.sigma, r.accuracy))
        .collect();
    let pass = rows.iter().all(|r| r.accuracy >= 0.90) && elapsed < 600.0;
    verdict(
        "C5 demand-config accuracy",
        pass,
        &format!("{}, {elapsed:.1}s", detail.join(", ")),
    );
}

#[test]
fn c06_benchmark_volume_config() {
    let start = Instant::now();
    let cfg = ExperimentConfig {
        methods: vec![BenchMethod::CfShapleyMc { samples: 1000 }],
        interventions: vec![InterventionKind::QueryVolume],
        sigmas: vec![0.1, 1.0, 10.0],
        trials: 20,
        seed: 0,
        sim: SimulationConfig::default(),
        direct_regressor: RegressorKind::default(),
    };
    let rows = run_accuracy_experiment(&cfg).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let acc = |sigma: f64| {
        rows.iter()
            .find(|r| r.sigma == sigma)
            .map(|r| (r.accuracy, (r.ci_high - r.ci_low) / 2.0))
            .unwrap()
    };
    let (a01, _) = acc(0.1);
    let (a1, hw1) = acc(1.0);
    let (a10, hw10) = acc(10.0);
    let (_, hw01) = acc(0.1);
    let monotone = a1 <= a01 + hw01 + hw1 && a10 <= a1 + hw1 + hw10;
    let pass = a01 >= 0.60 && a10 >= 0.50 && monotone;
    verdict(
        "C6 volume-config accuracy",
        pass,
        &format!(
            "sigma 0.1: {a01:.2} (need >= 0.60), sigma 10: {a10:.2} (need >= 0.50), monotone-within-slack {monotone}, {elapsed:.1}s"
        ),
    );
}

#[test]
fn c07_baseline_ceiling() {
    let start = Instant::now();
    let cfg = ExperimentConfig {
        methods: vec![
            BenchMethod::ShapleyDirect { samples: 200 },
            BenchMethod::DoShapley {
                samples: 200,
                resamples: 32,
            },
            BenchMethod::AdDemandDelta,
            BenchMethod::QueryVolumeDelta,
            BenchMethod::ProductDelta,
        ],
        interventions: vec![InterventionKind::AdDemand, InterventionKind::QueryVolume],
        sigmas: vec![1.0],
        trials: 20,
        seed: 0,
        sim: SimulationConfig::default(),
        direct_regressor: RegressorKind::mlp(),
    };
    let rows = run_accuracy_experiment(&cfg).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let mut pass = true;
    let mut worst = String::new();
    for r in &rows {
        let bound = 0.55 + (r.ci_high - r.ci_low) / 2.0;
        if r.accuracy > bound {
            pass = false;
            worst = format!(
                "{} {} at {:.2} > {:.2}",
                r.method, r.config, r.accuracy, bound
            );
        }
    }
    let max_acc = rows.iter().map(|r| r.accuracy).fold(0.0, f64::max);
    verdict(
        "C7 baseline ceiling",
        pass,
        &format!(
            "max baseline accuracy {max_acc:.2}{}, {elapsed:.1}s",
            if worst.is_empty() {
                String::new()
            } else {
                format!("; violated by {worst}")
            }
        ),
    );
}

#[test]
fn c08_efficiency_sum_on_simulated_days() {
    let start = Instant::now();
    let config = SimulationConfig {
        categories: 5,
        ..SimulationConfig::default()
    };
    let sim = generate_dataset(&config.with_noise(1.0), 0).unwrap();
    let panel = &sim.panel;
    let frame = panel.to_frame();
    let graph = panel.graph(&[1]);
    // well-specified per-category equations: ratio plus biweekly-signed lag
    let mut fit = FitConfig::new(RegressorKind::default(), BURN_IN_DAYS..999);
    for cat in panel.categories() {
        fit = fit.with_plan(
            den_node(cat),
            FeaturePlan::new(vec![FeatureTerm::Ratio(0, 1), FeatureTerm::SignedLag(1)]),
        );
    }
    let scm = fit_scm(&graph, &frame, &fit, &AnalyticRegistry::default()).unwrap();
    let mut ok_days = 0;
    let days: Vec<usize> = (0..20).map(|i| 500 + i * 20).collect();
    for &t in &days {
        let mut session = CounterfactualSession::new(&scm, &frame, t, t - REFERENCE_LAG).unwrap();
        let result = cf_shapley_exact(&mut session).unwrap();
        let y_t = frame.value("daily_density", t).unwrap();
        let full_bits = (1u64 << session.inputs().len()) - 1;
        let y_allref = session.value_for_reference_bits(full_bits).unwrap();
        let sum: f64 = result.scores.values().sum();
        let pct = ((sum - (y_t - y_allref)) / y_t * 100.0).abs();
        if pct < 0.10 {
            ok_days += 1;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        "C8 efficiency sum on simulated days",
        ok_days >= 18,
        &format!("{ok_days}/20 days under 0.10%, {elapsed:.1}s"),
    );
}

#[test]
fn c09_zero_effect_of_volume_at_aggregate_density() {
    let den = [3.0, 7.0, 4.2];
    let qv = [120.0, 80.0, 55.0];
    let y = aggregate_daily_density(&den, &qv).unwrap();
    // a category whose density equals the aggregate
    let den2 = [3.0, 7.0, 4.2, y];
    let qv2 = [120.0, 80.0, 55.0, 40.0];
    let y2 = aggregate_daily_density(&den2, &qv2).unwrap();
    let qv3 = [120.0, 80.0, 55.0, 80.0];
    let y3 = aggregate_daily_density(&den2, &qv3).unwrap();
    let delta = (y3 - y2).abs();
    verdict(
        "C9 zero-effect volume at aggregate density",
        delta < 1e-12,
        &format!("|delta y| {delta:.2e}"),
    );
}

#[test]
fn c10_abduction_round_trip() {
    let start = Instant::now();
    let mut checked = 0usize;
    let mut exact = 0usize;
    let setups = [
        (3usize, 0.1, 20u64),
        (5, 1.0, 21),
        (10, 10.0, 22),
        (4, 1.0, 23),
        (6, 0.1, 24),
    ];
    for (k, sigma, seed) in setups {
        let config = SimulationConfig {
            categories: k,
            days: 400,
            ..SimulationConfig::default()
        };
        let sim = generate_dataset(&config.with_noise(sigma), seed).unwrap();
        let frame = sim.panel.to_frame();
        let graph = sim.panel.graph(&[1, 7, 14]);
        let fit = FitConfig::new(RegressorKind::default(), BURN_IN_DAYS..380);
        let scm = fit_scm(&graph, &frame, &fit, &AnalyticRegistry::default()).unwrap();
        let mut rng = stream_rng(seed, "acceptance/days");
        let assignment: BTreeMap<String, InputState> = graph
            .input_names()
            .into_iter()
            .map(|n| (n, InputState::Observed))
            .collect();
        for _ in 0..200 {
            let t = rng.gen_range(BURN_IN_DAYS..399);
            let t_ref = t - REFERENCE_LAG;
            let mut session = CounterfactualSession::new(&scm, &frame, t, t_ref).unwrap();
            let v = session.counterfactual(&assignment).unwrap();
            let y_t = frame.value("daily_density", t).unwrap();
            checked += 1;
            if v.to_bits() == y_t.to_bits() {
                exact += 1;
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        "C10 abduction round-trip",
        checked == 1000 && exact == 1000,
        &format!("{exact}/{checked} bit-exact, {elapsed:.1}s"),
    );
}

#[test]
fn c11_outlier_detection() {
    let start = Instant::now();
    // The intervened day must be flagged at the 95% level. The day-to-day
    // series keeps an irreducible unpredictable component (hidden
    // per-category states), so flagging any single instance is
    // probabilistic; the claim is checked across the natural seed block with
    // a supermajority bar.
    let mut flags = 0;
    let seeds = 20u64;
    for seed in 0..seeds {
        let sim = generate_dataset(&SimulationConfig::default().with_noise(0.1), seed).unwrap();
        let (intervened, outcome) =
            apply_intervention(&sim, &InterventionSpec::new(InterventionKind::AdDemand)).unwrap();
        let series = intervened.panel.daily_density();
        let model = fit_daily_model(
            series,
            &RegressorKind::mlp(),
            &default_daily_lags(),
            BURN_IN_DAYS..outcome.target_day,
        )
        .unwrap();
        let report = detect_outliers(
            &model,
            series,
            outcome.target_day..outcome.target_day + 1,
            0.95,
        )
        .unwrap();
        flags += report.rows[0].flagged as usize;
    }
    let flagged = flags >= 16;

    // nominal-rate sanity on unintervened data
    let clean = generate_dataset(&SimulationConfig::default().with_noise(1.0), 100).unwrap();
    let series = clean.panel.daily_density();
    let model = fit_daily_model(
        series,
        &RegressorKind::default(),
        &default_daily_lags(),
        BURN_IN_DAYS..700,
    )
    .unwrap();
    let coverage = detect_outliers(&model, series, 700..1000, 0.95).unwrap();
    let rate = coverage.flag_rate();
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        "C11 outlier detection",
        flagged && (0.005..=0.15).contains(&rate),
        &format!(
            "intervened day flagged on {flags}/{seeds} seeds (need >= 16), flag rate {:.1}% over {} days, {elapsed:.1}s",
            rate * 100.0,
            coverage.rows.len()
        ),
    );
}

#[test]
fn c12_report_shapes_on_simulated_data() {
    let start = Instant::now();
    let sim = generate_dataset(&SimulationConfig::default().with_noise(1.0), 3).unwrap();
    let panel = &sim.panel;
    let frame = panel.to_frame();

    // category-model metrics table: per-node holdout errors, three metrics each
    let scm = fit_benchmark_scm(panel, BURN_IN_DAYS..900).unwrap();
    let mut metric_rows = 0;
    for cat in panel.categories() {
        let m = cfattrib_core::scm::evaluate_node_model(&scm, &frame, &den_node(cat), 900..999)
            .unwrap();
        assert!(m.mean_ape.is_finite() && m.median_ape.is_finite());
        assert!((0.0..=2.0).contains(&m.smape));
        metric_rows += 1;
    }

    // daily-model comparison table: four models, same three metrics
    let table = cfattrib_core::outlier::daily_model_comparison(
        panel.daily_density(),
        BURN_IN_DAYS..900,
        900..999,
        0,
    )
    .unwrap();
    let table_ok = table.len() == 4 && table.iter().all(|(_, m)| m.mean_ape.is_finite());

    // rollup table shaped category, ad_attrib, qv_attrib
    let t = 998;
    let mut session = CounterfactualSession::new(&scm, &frame, t, t - REFERENCE_LAG).unwrap();
    let result = cf_shapley_mc(&mut session, 200, 0).unwrap();
    let rollup = rollup_by_category(&result, &panel.category_map()).unwrap();
    let report = AttributionReport::new(
        &result,
        t,
        t - REFERENCE_LAG,
        frame.value("daily_density", t).unwrap(),
        Some(rollup),
        session.clamp_events(),
    );
    let csv = report.rollup_csv().unwrap().unwrap();
    let header_ok = csv
        .lines()
        .next()
        .is_some_and(|h| h == "category,ad_demand_attrib,query_volume_attrib,total");
    let row_count = csv.lines().count() - 1;

    // delta baselines produce one score per category
    let [ad, qv, product] =
        delta_baselines(panel, t, t - REFERENCE_LAG, DeltaMode::Absolute).unwrap();
    let deltas_ok = [&ad, &qv, &product]
        .iter()
        .all(|r| r.scores.len() == panel.categories().len());

    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        "C12 report shapes",
        metric_rows == 10 && table_ok && header_ok && row_count == 10 && deltas_ok,
        &format!(
            "category metrics {metric_rows}, daily table {} rows, rollup rows {row_count}, {elapsed:.1}s",
            table.len()
        ),
    );
}
