//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hhnas_core::engine::sample_uniform;
use hhnas_core::evaluators::{ExternalConfig, ExternalEvaluator, SyntheticEvaluator};
use hhnas_core::output::write_record;
use hhnas_core::policy::{mutate_candidate, select_action, Action, ContinuousMutation, PolicyView};
use hhnas_core::space::decode_arch_index;
use hhnas_core::stats::{
    update_mean, update_reward_tracker, update_variance_distance, update_variance_moment, MeanSignMode, TrackerMode, VarianceStrategy,
};
use hhnas_core::*;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn close(name: &str, got: f64, want: f64) -> Result<(), String> {
    ensure((got - want).abs() <= 1e-12, format!("{name}: got {got}, want {want}"))
}

fn tracker_at(avg: f64) -> RewardTracker<f64> {
    RewardTracker { running_avg: avg, count: 1, mode: TrackerMode::Arithmetic }
}

fn formula_suite() -> Outcome {
    let mut checked = 0;
    let mut check = |name: &str, got: f64, want: f64| {
        checked += 1;
        close(name, got, want)
    };

    check("ArchIndex [1,0,1]", decode_arch_index(&[true, false, true]) as f64, 5.0)?;

    let mut table = QTable::<f64>::default();
    let (a, b) = (FeatureId::micro(0, "a"), FeatureId::micro(0, "b"));
    table.insert_feature(a.clone(), ParamKind::Discrete, 1.0);
    table.insert_feature(b.clone(), ParamKind::Discrete, 2.0);
    check("Q(a)", table.cumulative_q(&a).unwrap(), 2.0)?;
    check("Q(b)", table.cumulative_q(&b).unwrap(), 4.0)?;
    check("P(a)", table.mutation_probability(&a, 0.8).unwrap(), 0.4)?;
    check("P(b)", table.mutation_probability(&b, 0.8).unwrap(), 0.8)?;

    let literal = StatsConfig { k: 0.1, ..Default::default() };
    let corrected = StatsConfig { mean_sign_mode: MeanSignMode::SignCorrected, ..literal.clone() };
    let g = GaussianState::new(0.5, 0.01);
    let bounds = (0.0, 1.0);
    check("mean unsigned", update_mean(&g, 0.7, 0.8, &tracker_at(0.6), &literal, bounds).mean, 0.52)?;
    check("mean sign_corrected", update_mean(&g, 0.3, 0.8, &tracker_at(0.6), &corrected, bounds).mean, 0.48)?;
    check("mean zero delta literal", update_mean(&g, 0.7, 0.6, &tracker_at(0.6), &literal, bounds).mean, 0.5)?;
    check("mean zero delta corrected", update_mean(&g, 0.7, 0.6, &tracker_at(0.6), &corrected, bounds).mean, 0.5)?;

    let half = StatsConfig { k: 0.5, ..Default::default() };
    let unit = GaussianState::new(0.0, 1.0);
    check("distance outside", update_variance_distance(&unit, 2.0, 0.8, &tracker_at(0.6), &half).variance, 1.1)?;
    check("distance inside", update_variance_distance(&unit, 0.5, 0.4, &tracker_at(0.6), &half).variance, 0.95)?;
    for r in [0.0, 0.3, 0.6, 1.0] {
        check("distance boundary", update_variance_distance(&unit, 1.0, r, &tracker_at(0.6), &half).variance, 1.0)?;
        check("distance boundary (below)", update_variance_distance(&unit, -1.0, r, &tracker_at(0.6), &half).variance, 1.0)?;
        check("moment boundary", update_variance_moment(&unit, 1.0, r, &tracker_at(0.6), &half).variance, 1.0)?;
    }
    check("moment", update_variance_moment(&unit, 2.0, 0.8, &tracker_at(0.6), &half).variance, 1.3)?;
    let k1 = StatsConfig { k: 1.0, ..Default::default() };
    let narrow = GaussianState::new(0.0, 0.04);
    check("moment floor", update_variance_moment(&narrow, 0.0, 1.0, &tracker_at(0.5), &k1).variance, k1.var_floor)?;

    let t = update_reward_tracker(&RewardTracker::<f64>::new(TrackerMode::Arithmetic), 0.6);
    check("tracker first", t.running_avg, 0.6)?;
    check("tracker count", t.count as f64, 1.0)?;
    check("tracker mean", update_reward_tracker(&t, 0.8).running_avg, 0.7)?;
    let e = RewardTracker { running_avg: 0.5, count: 3, mode: TrackerMode::Exponential { beta: 0.9 } };
    check("tracker exponential", update_reward_tracker(&e, 1.0).running_avg, 0.55)?;

    Ok(format!("{checked} worked values at 1e-12"))
}

fn mutation_validity(trials: usize) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE);
    for trial in 0..trials {
        let space = common::random_space(&mut rng);
        let mut table = QTable::for_space(&space, 1.0);
        let ids: Vec<_> = table.features().cloned().collect();
        for id in &ids {
            let actions: Vec<Action> = table.actions(id).unwrap().keys().copied().collect();
            for a in actions {
                table.set(id, a, rng.random_range(0.05..5.0)).unwrap();
            }
        }
        let mut gaussians = BTreeMap::new();
        let mut arch_store = BTreeMap::new();
        for arch in space.archs() {
            for p in space.micro_params(arch).iter().filter(|p| !p.fixed && p.kind == ParamKind::Continuous) {
                let mean = rng.random_range(p.lower..=p.upper);
                let var = rng.random_range(1e-6..=p.span() * p.span());
                gaussians.insert(FeatureId::micro(arch, &p.name), GaussianState::new(mean, var));
            }
            if rng.random_bool(0.5) {
                let mut c = sample_uniform(&space, &mut rng);
                while c.arch_index != arch {
                    c = sample_uniform(&space, &mut rng);
                }
                arch_store.insert(arch, c.micro_values);
            }
        }
        let cfg = MutationPolicyConfig {
            max_prob: rng.random_range(0.05..=1.0),
            continuous_mutation: if rng.random_bool(0.5) { ContinuousMutation::MeanRelative } else { ContinuousMutation::ValueRelative },
            ..Default::default()
        };
        let view = PolicyView { space: &space, table: &table, gaussians: &gaussians, arch_store: &arch_store, cfg: &cfg };
        let mut cand = if rng.random_bool(0.5) { space.initial_candidate() } else { sample_uniform(&space, &mut rng) };
        for _ in 0..5 {
            let (next, _) = mutate_candidate(&view, &cand, &mut rng).map_err(|e| format!("trial {trial}: {e}"))?;
            space.validate_candidate(&next).map_err(|e| format!("trial {trial}: invalid mutation output: {e}"))?;
            cand = next;
        }
    }
    Ok(())
}

fn action_frequency() -> Result<(), String> {
    let id = FeatureId::micro(0, "s");
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (plus, minus) in [(3.0, 1.0), (1.0, 1.0), (0.05, 2.0), (4.5, 0.5)] {
        let mut table = QTable::<f64>::default();
        table.insert_feature(id.clone(), ParamKind::Continuous, 1.0);
        table.set(&id, Action::Plus, plus).unwrap();
        table.set(&id, Action::Minus, minus).unwrap();
        let n = 100_000;
        let hits = (0..n).filter(|_| select_action(&table, &id, &mut rng).unwrap() == Action::Plus).count();
        let freq = hits as f64 / n as f64;
        let want = plus / (plus + minus);
        ensure((freq - want).abs() <= 0.01, format!("select_action frequency {freq} vs {want}"))?;
    }
    Ok(())
}

fn engine_invariants() -> Result<usize, String> {
    let mut steps = 0;
    let space = common::four_arch_space();
    let mut landscape = common::four_arch_landscape();
    landscape.noise_std = 0.3;
    for seed in 0..6 {
        for acceptance in [Acceptance::AlwaysAccept, Acceptance::GreedyElitist] {
            for strategy in [VarianceStrategy::DistanceBased, VarianceStrategy::MomentBased] {
                let cfg = EngineConfig {
                    iterations: 150,
                    seed,
                    acceptance,
                    policy: MutationPolicyConfig { q_learning_rate: 20.0, ..Default::default() },
                    stats: StatsConfig { k: 2.0, variance_strategy: strategy, ..Default::default() },
                    ..Default::default()
                };
                let floor = cfg.policy.q_floor;
                let var_floor = cfg.stats.var_floor;
                let max_prob = cfg.policy.max_prob;
                let mut engine = Engine::new(space.clone(), cfg).map_err(|e| e.to_string())?;
                let mut ev = SyntheticEvaluator::new(landscape.clone());
                let mut best = f64::NEG_INFINITY;
                let mut base_reward = f64::NEG_INFINITY;
                while !engine.is_complete() {
                    let reward = engine.step(&mut ev).map_err(|e| e.to_string())?.reward;
                    steps += 1;
                    for id in engine.table().features() {
                        for q in engine.table().actions(id).unwrap().values() {
                            ensure(*q >= floor, format!("Q below floor: {q}"))?;
                        }
                    }
                    let probs = engine.probabilities();
                    let top = probs.values().copied().fold(f64::NEG_INFINITY, f64::max);
                    ensure(top == max_prob, format!("max P(s) = {top}, expected {max_prob}"))?;
                    ensure(probs.values().all(|p| *p > 0.0), "zero mutation probability")?;
                    for g in engine.gaussians().values() {
                        ensure(g.variance >= var_floor, format!("variance {} below floor", g.variance))?;
                    }
                    let new_best = best.max(reward);
                    ensure(new_best >= best, "best-so-far decreased")?;
                    best = new_best;
                    if acceptance == Acceptance::GreedyElitist {
                        let b = engine.base().1.expect("base has a reward");
                        ensure(b >= base_reward, format!("greedy base reward decreased from {base_reward} to {b}"))?;
                        base_reward = b;
                    }
                }
                let result = engine.result().expect("ran");
                ensure(result.best_reward == best, "best_reward disagrees with history")?;
                let curve = result.best_so_far();
                ensure(curve.windows(2).all(|w| w[1] >= w[0]), "best_so_far not monotone")?;
            }
        }
    }
    Ok(steps)
}

fn invariant_suite() -> Outcome {
    let steps = engine_invariants()?;
    mutation_validity(1000)?;
    action_frequency()?;
    Ok(format!("{steps} engine steps checked, 1000 random spaces valid, select_action within 0.01 over 1e5 draws"))
}

fn jsonl(history: &[IterationRecord<f64>]) -> Vec<u8> {
    let mut out = Vec::new();
    for rec in history {
        write_record(&mut out, rec).unwrap();
    }
    out
}

fn determinism() -> Outcome {
    let space = common::small_space();
    let landscape = common::small_landscape();
    let cfg = EngineConfig { iterations: 50, seed: 42, checkpoint_every: 25, ..Default::default() };
    let run = || -> Result<RunResult<f64>, String> {
        run_search(&space, &mut SyntheticEvaluator::new(landscape.clone()), &cfg).map_err(|e| e.to_string())
    };
    let first = run()?;
    let second = run()?;
    let log = jsonl(&first.history);
    ensure(log == jsonl(&second.history), "repeated runs produced different trajectory logs")?;
    ensure(first == second, "repeated runs produced different results")?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ckpt = dir.path().join("checkpoint.json");
    let mut engine = Engine::new(space.clone(), cfg.clone()).map_err(|e| e.to_string())?.with_checkpoint_path(&ckpt);
    let mut ev = SyntheticEvaluator::new(landscape.clone());
    for _ in 0..25 {
        engine.step(&mut ev).map_err(|e| e.to_string())?;
    }
    drop(engine);
    let mut resumed = Engine::<f64>::load_checkpoint(&ckpt).map_err(|e| e.to_string())?;
    ensure(resumed.iteration() == 25, format!("checkpoint holds iteration {}", resumed.iteration()))?;
    let result = resumed.run(&mut ev, |_| Ok(())).map_err(|e| e.to_string())?;
    for (a, b) in first.history.iter().zip(&result.history).skip(25) {
        ensure(a == b, format!("record {} differs after resume", a.iteration))?;
    }
    ensure(jsonl(&result.history) == log, "resumed trajectory log differs")?;
    ensure(result == first, "resumed result differs")?;
    Ok(format!("{} byte log identical across runs and after resume at 25", log.len()))
}

/// Logistic of the quadratic score, computed from the landscape constants
/// alone.
fn oracle_reward(arch: usize, theta: &[f64; 6]) -> f64 {
    let mut raw = common::FOUR_ARCH_BONUS[arch];
    for ((value, opt), range) in theta.iter().zip(common::FOUR_ARCH_OPTIMA[arch]).zip(common::PARAM_RANGES) {
        let d = value - opt;
        raw -= d * d / (range * range);
    }
    1.0 / (1.0 + (-raw).exp())
}

/// Grid search: 11 points across each continuous range, every value of
/// each discrete parameter.
fn grid_optimum() -> (usize, f64) {
    let space = common::four_arch_space();
    let mut best = (0, f64::NEG_INFINITY);
    for arch in 0..4 {
        let specs = space.micro_params(arch);
        let axis = |i: usize| -> Vec<f64> {
            let p = &specs[i];
            match p.kind {
                ParamKind::Continuous => (0..=10).map(|k| p.lower + p.span() * k as f64 / 10.0).collect(),
                _ => (p.lower as i64..=p.upper as i64).map(|v| v as f64).collect(),
            }
        };
        let axes: Vec<Vec<f64>> = (0..6).map(axis).collect();
        for &a in &axes[0] {
            for &b in &axes[1] {
                for &c in &axes[2] {
                    for &d in &axes[3] {
                        for &e in &axes[4] {
                            for &f in &axes[5] {
                                let r = oracle_reward(arch, &[a, b, c, d, e, f]);
                                if r > best.1 {
                                    best = (arch, r);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    best
}

fn convergence() -> Outcome {
    let landscape = common::four_arch_landscape();
    let space = common::four_arch_space();
    landscape.check_against(&space).map_err(|e| e.to_string())?;
    let (grid_arch, grid_best) = grid_optimum();
    let (arch, optimum) = landscape.global_optimum().expect("non-empty");
    ensure(grid_arch == arch, format!("grid oracle prefers architecture {grid_arch}, landscape reports {arch}"))?;
    ensure(grid_best <= optimum && optimum - grid_best < 1e-3, format!("grid optimum {grid_best} vs analytic {optimum}"))?;

    let threshold = 0.98 * optimum;
    let mut hits = 0;
    let mut finals = Vec::new();
    for seed in 0..20 {
        let r = run_search(&space, &mut SyntheticEvaluator::new(landscape.clone()), &common::convergence_config(seed))
            .map_err(|e| e.to_string())?;
        if r.best_reward >= threshold {
            hits += 1;
        }
        finals.push(r.best_reward / optimum);
    }
    finals.sort_by(f64::total_cmp);
    let detail = format!("{hits}/20 seeds within 2% of {optimum:.6} after 200 iterations (worst {:.4} of optimum)", finals[0]);
    ensure(hits >= 18, detail.clone())?;
    Ok(detail)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        let (a, b) = (v[n / 2 - 1], v[n / 2]);
        if b.is_infinite() {
            b
        } else {
            (a + b) / 2.0
        }
    }
}

fn ablation() -> Outcome {
    let space = common::relevance_space();
    let landscape = common::relevance_landscape();
    let land = &landscape.archs[&0];
    let total: f64 = land.weights.values().sum();
    ensure(land.weights[common::RELEVANT] / total >= 0.9, "relevant parameter carries under 90% of the weight")?;
    let threshold = 0.95 * landscape.global_optimum().unwrap().1;

    let relevant = FeatureId::micro(0, common::RELEVANT);
    let mut wins = 0;
    let mut adaptive = Vec::new();
    let mut fixed = Vec::new();
    for seed in 0..20 {
        let cfg = common::relevance_config(seed);
        let mut engine = Engine::new(space.clone(), cfg.clone()).map_err(|e| e.to_string())?;
        let mut ev = SyntheticEvaluator::new(landscape.clone());
        for _ in 0..100 {
            engine.step(&mut ev).map_err(|e| e.to_string())?;
        }
        let probs = engine.probabilities();
        let irrelevant: Vec<f64> = common::IRRELEVANT.iter().map(|n| probs[&FeatureId::micro(0, n)]).collect();
        if probs[&relevant] > irrelevant.iter().sum::<f64>() / irrelevant.len() as f64 {
            wins += 1;
        }
        let result = engine.run(&mut ev, |_| Ok(())).map_err(|e| e.to_string())?;
        adaptive.push(result.iterations_to(threshold).map_or(f64::INFINITY, |i| i as f64));

        let fixed_cfg = EngineConfig { search: SearchPolicy::FixedProb { p: 0.5 }, ..cfg };
        let result = run_search(&space, &mut SyntheticEvaluator::new(landscape.clone()), &fixed_cfg).map_err(|e| e.to_string())?;
        fixed.push(result.iterations_to(threshold).map_or(f64::INFINITY, |i| i as f64));
    }
    let (ma, mf) = (median(adaptive), median(fixed));
    let detail = format!("relevant P(s) ahead in {wins}/20 seeds at iteration 100; median iterations to 95%: adaptive {ma}, fixed_prob(0.5) {mf}");
    ensure(wins >= 15 && ma <= mf, detail.clone())?;
    Ok(detail)
}

fn loopback(landscape: &Path, mode: &str, timeout_secs: f64) -> Result<ExternalEvaluator, String> {
    let mut cfg = ExternalConfig::new(vec![
        env!("CARGO_BIN_EXE_hhnas-loopback").to_string(),
        landscape.display().to_string(),
        "--mode".to_string(),
        mode.to_string(),
    ]);
    cfg.timeout_secs = timeout_secs;
    ExternalEvaluator::spawn(cfg).map_err(|e| format!("spawn {mode}: {e}"))
}

fn expect_protocol_error(ev: &mut ExternalEvaluator, cand: &Candidate<f64>, want: fn(&EvalError) -> bool, what: &str) -> Result<(), String> {
    match Evaluator::<f64>::evaluate(ev, cand) {
        Err(e) if want(&e) => Ok(()),
        Err(e) => Err(format!("{what}: unexpected error {e}")),
        Ok(r) => Err(format!("{what}: accepted reward {}", r.reward)),
    }
}

fn protocol_conformance() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("landscape.json");
    let landscape = common::four_arch_landscape();
    std::fs::write(&path, serde_json::to_string(&landscape).unwrap()).map_err(|e| e.to_string())?;
    let space = common::four_arch_space();
    let cfg = EngineConfig { iterations: 40, seed: 3, ..Default::default() };

    let local = run_search(&space, &mut SyntheticEvaluator::new(landscape.clone()), &cfg).map_err(|e| e.to_string())?;
    let mut external = loopback(&path, "echo", 5.0)?;
    let remote = run_search(&space, &mut external, &cfg).map_err(|e| e.to_string())?;
    for (a, b) in local.history.iter().zip(&remote.history) {
        ensure(a.candidate == b.candidate, format!("iteration {}: candidates diverge", a.iteration))?;
        ensure(a.reward.to_bits() == b.reward.to_bits(), format!("iteration {}: {} vs {}", a.iteration, a.reward, b.reward))?;
    }
    ensure(local.history.len() == remote.history.len() && local.best_reward == remote.best_reward, "loopback run differs")?;

    let cand = space.initial_candidate();
    let is_protocol = |e: &EvalError| matches!(e, EvalError::Protocol { .. });
    let mut ev = loopback(&path, "malformed", 5.0)?;
    expect_protocol_error(&mut ev, &cand, is_protocol, "malformed response")?;
    let mut ev = loopback(&path, "wrong-id", 5.0)?;
    expect_protocol_error(&mut ev, &cand, is_protocol, "id mismatch")?;
    let mut ev = loopback(&path, "error", 5.0)?;
    expect_protocol_error(&mut ev, &cand, is_protocol, "error payload")?;
    let mut ev = loopback(&path, "silent", 0.3)?;
    let started = Instant::now();
    expect_protocol_error(&mut ev, &cand, |e| matches!(e, EvalError::Timeout { id: 1, .. }), "timeout")?;
    ensure(started.elapsed().as_secs_f64() < 3.0, "timeout took too long")?;
    let mut ev = loopback(&path, "exit", 5.0)?;
    expect_protocol_error(&mut ev, &cand, |e| matches!(e, EvalError::ChildExited { .. }), "child exit")?;

    Ok(format!("{} loopback rewards bit-identical; malformed, id mismatch, error, timeout and exit rejected", remote.history.len()))
}

fn main() {
    let criteria: [Criterion; 6] = [
        ("formula suite", formula_suite),
        ("invariant suite", invariant_suite),
        ("determinism", determinism),
        ("synthetic convergence", convergence),
        ("adaptive vs fixed ablation", ablation),
        ("protocol conformance", protocol_conformance),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = f();
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail}; {secs:.1}s)", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({detail}; {secs:.1}s)", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
