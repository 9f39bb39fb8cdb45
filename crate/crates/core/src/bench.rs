//! Side-by-side comparison of proposal policies over several seeds.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{EngineConfig, RunResult, SearchPolicy};
use crate::error::{EngineError, EvalError};
use crate::evaluators::Evaluator;
use crate::scalar::Real;
use crate::space::SearchSpace;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub policies: Vec<SearchPolicy>,
    pub seeds: Vec<u64>,
    /// Reward a run must reach to count as converged.
    pub threshold: f64,
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.seeds.len() < 2 {
            return Err(EngineError::Config(format!("bench.seeds needs at least 2 seeds, got {}", self.seeds.len())));
        }
        if self.policies.is_empty() {
            return Err(EngineError::Config("bench.policies is empty".into()));
        }
        Ok(())
    }
}

/// Median and interquartile range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

impl Spread {
    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

/// Linear-interpolation quantile of sorted data. Infinite entries stay
/// infinite in the result when they participate.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        return sorted[lo];
    }
    let frac = pos - lo as f64;
    if sorted[hi].is_infinite() {
        return if frac == 0.0 { sorted[lo] } else { sorted[hi] };
    }
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn spread(values: &[f64]) -> Option<Spread> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(Spread { median: quantile(&v, 0.5), q1: quantile(&v, 0.25), q3: quantile(&v, 0.75) })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub policy: SearchPolicy,
    pub label: String,
    pub seeds: Vec<u64>,
    pub failures: Vec<(u64, String)>,
    /// Per-iteration spread of the best-so-far reward across seeds.
    pub best_curve: Vec<Spread>,
    pub final_best: Option<Spread>,
    /// Per seed; `None` when the threshold was never reached.
    pub iterations_to_threshold: Vec<Option<u64>>,
    /// Unreached seeds count as infinitely slow.
    pub iterations_to_threshold_spread: Option<Spread>,
}

impl PolicySummary {
    pub fn median_iterations(&self) -> Option<f64> {
        self.iterations_to_threshold_spread.map(|s| s.median).filter(|m| m.is_finite())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub iterations: u64,
    pub threshold: f64,
    pub policies: Vec<PolicySummary>,
}

impl BenchReport {
    /// Human-readable table.
    pub fn render(&self) -> String {
        let mut out = format!(
            "{:<20} {:>6} {:>12} {:>10} {:>22} {:>9}\n",
            "policy", "runs", "final_median", "final_iqr", "iters_to_threshold", "failures"
        );
        for p in &self.policies {
            let (fm, fi) = p.final_best.map_or(("-".into(), "-".into()), |s| (format!("{:.6}", s.median), format!("{:.6}", s.iqr())));
            let iters = match p.median_iterations() {
                Some(m) => format!("{m:.1}"),
                None => format!("not reached ({})", self.iterations),
            };
            out.push_str(&format!(
                "{:<20} {:>6} {:>12} {:>10} {:>22} {:>9}\n",
                p.label,
                p.seeds.len() - p.failures.len(),
                fm,
                fi,
                iters,
                p.failures.len()
            ));
        }
        for p in &self.policies {
            for (seed, err) in &p.failures {
                out.push_str(&format!("failed: {} seed {seed}: {err}\n", p.label));
            }
        }
        out
    }
}

fn summarize<T: Real>(policy: SearchPolicy, seeds: &[u64], runs: Vec<Result<RunResult<T>, String>>, n: u64, threshold: f64) -> PolicySummary {
    let mut failures = Vec::new();
    let mut curves = Vec::new();
    let mut iters = Vec::new();
    for (&seed, run) in seeds.iter().zip(runs) {
        match run {
            Ok(r) => {
                curves.push(r.best_so_far().into_iter().map(Real::as_f64).collect::<Vec<_>>());
                iters.push(r.iterations_to(T::lit(threshold)));
            }
            Err(e) => failures.push((seed, e)),
        }
    }
    let best_curve = (0..n as usize)
        .filter_map(|i| spread(&curves.iter().filter_map(|c| c.get(i).copied()).collect::<Vec<_>>()))
        .collect();
    let finals: Vec<f64> = curves.iter().filter_map(|c| c.last().copied()).collect();
    let iter_values: Vec<f64> = iters.iter().map(|i| i.map_or(f64::INFINITY, |v| v as f64)).collect();
    PolicySummary {
        policy,
        label: policy.label(),
        seeds: seeds.to_vec(),
        failures,
        best_curve,
        final_best: spread(&finals),
        iterations_to_threshold: iters,
        iterations_to_threshold_spread: spread(&iter_values),
    }
}

/// Runs every (policy, seed) cell. Cells are independent and execute in
/// parallel, each with its own engine and evaluator. Cell failures are
/// reported in the summary rather than aborting the comparison.
pub fn compare_policies<T, F>(
    space: &SearchSpace<T>,
    evaluator_factory: F,
    base: &EngineConfig,
    bench: &BenchConfig,
) -> Result<BenchReport, EngineError>
where
    T: Real,
    F: Fn(u64) -> Result<Box<dyn Evaluator<T>>, EvalError> + Sync,
{
    bench.validate()?;
    base.validate()?;
    let cells: Vec<(usize, u64)> = (0..bench.policies.len()).flat_map(|p| bench.seeds.iter().map(move |&s| (p, s))).collect();
    let results: Vec<Result<RunResult<T>, String>> = cells
        .par_iter()
        .map(|&(p, seed)| {
            let cfg = EngineConfig { search: bench.policies[p], seed, ..base.clone() };
            let mut evaluator = evaluator_factory(seed).map_err(|e| e.to_string())?;
            crate::engine::run_search(space, &mut evaluator, &cfg).map_err(|e| e.to_string())
        })
        .collect();
    let mut results = results.into_iter();
    let policies = bench
        .policies
        .iter()
        .map(|&policy| {
            let runs: Vec<_> = results.by_ref().take(bench.seeds.len()).collect();
            summarize(policy, &bench.seeds, runs, base.iterations, bench.threshold)
        })
        .collect();
    Ok(BenchReport { iterations: base.iterations, threshold: bench.threshold, policies })
}
