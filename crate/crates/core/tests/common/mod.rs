//! Landscapes and spaces shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use hhnas_core::evaluators::{ArchLandscape, SyntheticLandscape};
use hhnas_core::stats::TrackerMode;
use hhnas_core::{Acceptance, EngineConfig, MutationPolicyConfig, ParamSpec, SearchSpace, StatsConfig};

pub const PARAM_NAMES: [&str; 6] = ["learning_rate", "dropout_rate", "weight_decay", "warmup", "layer_size", "kernel_size"];
pub const PARAM_RANGES: [f64; 6] = [1.0, 0.5, 1.0, 1.0, 7.0, 6.0];

/// Two free macro bits behind a fixed backbone bit; four continuous and two
/// discrete parameters per architecture.
pub fn four_arch_space() -> SearchSpace<f64> {
    let micro = (0..4)
        .map(|a| {
            (
                a,
                vec![
                    ParamSpec::continuous("learning_rate", 0.0, 1.0, 0.5),
                    ParamSpec::continuous("dropout_rate", 0.0, 0.5, 0.25),
                    ParamSpec::continuous("weight_decay", 0.0, 1.0, 0.5),
                    ParamSpec::continuous("warmup", 0.0, 1.0, 0.5),
                    ParamSpec::discrete("layer_size", 1, 8, 4),
                    ParamSpec::discrete("kernel_size", 1, 7, 4),
                ],
            )
        })
        .collect();
    let macro_params = vec![ParamSpec::binary("backbone", true).fixed(), ParamSpec::binary("cnn_a", false), ParamSpec::binary("cnn_b", false)];
    SearchSpace::new(macro_params, micro).unwrap()
}

pub const FOUR_ARCH_BONUS: [f64; 4] = [1.0, 0.5, 1.5, 2.5];
pub const FOUR_ARCH_OPTIMA: [[f64; 6]; 4] = [
    [0.3, 0.1, 0.7, 0.2, 2.0, 5.0],
    [0.6, 0.4, 0.2, 0.8, 7.0, 2.0],
    [0.2, 0.3, 0.4, 0.3, 3.0, 6.0],
    [0.8, 0.1, 0.25, 0.7, 7.0, 2.0],
];

/// Weights are `1 / range^2`, so every parameter costs at most 1 raw unit.
pub fn four_arch_landscape() -> SyntheticLandscape<f64> {
    let archs = (0..4)
        .map(|a| {
            let optimum = PARAM_NAMES.iter().zip(FOUR_ARCH_OPTIMA[a]).map(|(n, v)| (n.to_string(), v)).collect();
            let weights = PARAM_NAMES.iter().zip(PARAM_RANGES).map(|(n, r)| (n.to_string(), 1.0 / (r * r))).collect();
            (a, ArchLandscape { bonus: FOUR_ARCH_BONUS[a], optimum, weights })
        })
        .collect();
    SyntheticLandscape { archs, noise_std: 0.0, noise_seed: 0 }
}

pub fn convergence_config(seed: u64) -> EngineConfig {
    EngineConfig {
        iterations: 200,
        seed,
        acceptance: Acceptance::GreedyElitist,
        stats: StatsConfig { k: 0.3, tracker: TrackerMode::Exponential { beta: 0.8 }, ..Default::default() },
        ..Default::default()
    }
}

pub const RELEVANT: &str = "hidden";
pub const IRRELEVANT: [&str; 4] = ["lr", "dropout", "wd", "warmup"];

/// One architecture, five continuous parameters on `[0, 1]`.
pub fn relevance_space() -> SearchSpace<f64> {
    let mut params = vec![ParamSpec::continuous(RELEVANT, 0.0, 1.0, 0.1)];
    params.extend(IRRELEVANT.iter().map(|n| ParamSpec::continuous(*n, 0.0, 1.0, 0.5)));
    SearchSpace::new(vec![ParamSpec::binary("backbone", true).fixed()], [(0, params)].into()).unwrap()
}

/// The relevant parameter carries 90% of the total curvature weight.
pub fn relevance_landscape() -> SyntheticLandscape<f64> {
    let total = 4.0;
    let mut optimum: BTreeMap<String, f64> = [(RELEVANT.to_string(), 0.9)].into();
    let mut weights: BTreeMap<String, f64> = [(RELEVANT.to_string(), 0.9 * total)].into();
    for (name, opt) in IRRELEVANT.iter().zip([0.3, 0.7, 0.2, 0.6]) {
        optimum.insert(name.to_string(), opt);
        weights.insert(name.to_string(), 0.025 * total);
    }
    SyntheticLandscape { archs: [(0, ArchLandscape { bonus: 2.0, optimum, weights })].into(), noise_std: 0.0, noise_seed: 0 }
}

pub fn relevance_config(seed: u64) -> EngineConfig {
    EngineConfig {
        iterations: 200,
        seed,
        policy: MutationPolicyConfig { q_learning_rate: 5.0, ..Default::default() },
        stats: StatsConfig { k: 1.0, tracker: TrackerMode::Exponential { beta: 0.8 }, ..Default::default() },
        ..Default::default()
    }
}

/// Small mixed space with a noise-free landscape, for quick engine runs.
pub fn small_space() -> SearchSpace<f64> {
    let micro = (0..2)
        .map(|a| (a, vec![ParamSpec::continuous("x", 0.0, 1.0, 0.5), ParamSpec::discrete("n", 0, 5, 2), ParamSpec::binary("flag", false)]))
        .collect();
    SearchSpace::new(vec![ParamSpec::binary("wide", false)], micro).unwrap()
}

pub fn small_landscape() -> SyntheticLandscape<f64> {
    let arch = |bonus: f64, x: f64, n: f64| ArchLandscape {
        bonus,
        optimum: [("x".to_string(), x), ("n".to_string(), n), ("flag".to_string(), 1.0)].into(),
        weights: [("x".to_string(), 3.0), ("n".to_string(), 0.2), ("flag".to_string(), 0.5)].into(),
    };
    SyntheticLandscape { archs: [(0, arch(1.0, 0.2, 4.0)), (1, arch(1.5, 0.7, 1.0))].into(), noise_std: 0.0, noise_seed: 0 }
}

/// Up to four macro bits (some fixed) and up to four micro parameters of
/// random kind and bounds per architecture.
pub fn random_space(rng: &mut ChaCha8Rng) -> SearchSpace<f64> {
    let m = rng.random_range(1..=4);
    let macro_params: Vec<ParamSpec<f64>> = (0..m)
        .map(|i| {
            let p = ParamSpec::binary(format!("b{i}"), rng.random_bool(0.5));
            if rng.random_bool(0.25) {
                p.fixed()
            } else {
                p
            }
        })
        .collect();
    let free = macro_params.iter().filter(|p| !p.fixed).count();
    let micro = (0..1usize << free)
        .map(|arch| {
            let params = (0..rng.random_range(0..=4))
                .map(|i| {
                    let name = format!("p{i}");
                    let p = match rng.random_range(0..3) {
                        0 => ParamSpec::binary(name, rng.random_bool(0.5)),
                        1 => {
                            let lo = rng.random_range(-3..=3);
                            let hi = lo + rng.random_range(0..=5);
                            ParamSpec::discrete(name, lo, hi, rng.random_range(lo..=hi))
                        }
                        _ => {
                            let lo: f64 = rng.random_range(-2.0..1.0);
                            let hi = lo + rng.random_range(0.1..3.0);
                            ParamSpec::continuous(name, lo, hi, rng.random_range(lo..=hi))
                        }
                    };
                    if rng.random_bool(0.2) {
                        p.fixed()
                    } else {
                        p
                    }
                })
                .collect();
            (arch, params)
        })
        .collect();
    SearchSpace::new(macro_params, micro).unwrap()
}
