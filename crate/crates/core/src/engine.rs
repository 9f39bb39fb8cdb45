//! The search loop: mutate, evaluate, update the Q-table and Gaussian
//! statistics, accept, record.
//!
//! Within one iteration the Q-table and the mean/variance updates are
//! measured against the running reward average *before* the new reward is
//! folded into it.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{EngineError, EvalError};
use crate::evaluators::{cache_key, EvalResult, Evaluator};
use crate::policy::{mutate_candidate, Draws, FeatureId, MutationPolicyConfig, MutationRecord, PolicyView, QTable};
use crate::scalar::Real;
use crate::space::{Candidate, MacroVector, ParamKind, SearchSpace};
use crate::stats::{adapt, GaussianState, RewardTracker, StatsConfig};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Acceptance {
    /// The mutated candidate always becomes the next base.
    #[default]
    AlwaysAccept,
    /// The mutated candidate replaces the base only if it scores at least as
    /// well.
    GreedyElitist,
}

/// How candidates are proposed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SearchPolicy {
    /// Q-table driven probabilities and actions.
    #[default]
    Adaptive,
    /// Constant firing probability, 50/50 actions, no Q updates.
    FixedProb { p: f64 },
    /// Uniform in-bounds sampling every iteration.
    RandomSearch,
}

impl SearchPolicy {
    pub fn label(&self) -> String {
        match self {
            SearchPolicy::Adaptive => "adaptive".into(),
            SearchPolicy::FixedProb { p } => format!("fixed_prob({p})"),
            SearchPolicy::RandomSearch => "random_search".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub iterations: u64,
    pub acceptance: Acceptance,
    pub search: SearchPolicy,
    pub policy: MutationPolicyConfig,
    pub stats: StatsConfig,
    pub eval_cache: bool,
    pub checkpoint_every: u64,
    pub seed: u64,
    /// Adds `wall_time_ms` to iteration records. Off by default so that
    /// trajectory logs are byte-reproducible.
    pub record_wall_time: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            iterations: 50,
            acceptance: Acceptance::AlwaysAccept,
            search: SearchPolicy::Adaptive,
            policy: MutationPolicyConfig::default(),
            stats: StatsConfig::default(),
            eval_cache: false,
            checkpoint_every: 10,
            seed: 0,
            record_wall_time: false,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.iterations == 0 {
            return Err(EngineError::Config("engine.iterations must be at least 1".into()));
        }
        if self.checkpoint_every == 0 {
            return Err(EngineError::Config("engine.checkpoint_every must be at least 1".into()));
        }
        if let SearchPolicy::FixedProb { p } = self.search {
            if !(0.0..=1.0).contains(&p) {
                return Err(EngineError::Config(format!("engine.search.p must lie in [0, 1], got {p}")));
            }
        }
        self.policy.validate().map_err(EngineError::Config)?;
        self.stats.validate().map_err(EngineError::Config)
    }

    fn effective_policy(&self) -> MutationPolicyConfig {
        let mut policy = self.policy.clone();
        if let SearchPolicy::FixedProb { p } = self.search {
            policy.fixed_prob = Some(p);
        }
        policy
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct IterationRecord<T = f64> {
    pub iteration: u64,
    pub candidate: Candidate<T>,
    pub reward: T,
    /// Running average after folding in `reward`.
    pub running_avg: T,
    pub mutation_record: MutationRecord<T>,
    pub q_snapshot_digest: String,
    pub accepted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<u64>,
    /// Mutation probabilities used to produce this candidate.
    #[serde(default)]
    pub mutation_probs: BTreeMap<FeatureId, f64>,
    /// Gaussian states after this iteration's updates.
    #[serde(default)]
    pub gaussians: BTreeMap<FeatureId, GaussianState<T>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ArchBest<T = f64> {
    pub candidate: Candidate<T>,
    pub reward: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct RunResult<T = f64> {
    pub best_candidate: Candidate<T>,
    pub best_reward: T,
    pub history: Vec<IterationRecord<T>>,
    pub per_arch_best: BTreeMap<usize, ArchBest<T>>,
}

impl<T: Real> RunResult<T> {
    /// Best-so-far reward after each iteration.
    pub fn best_so_far(&self) -> Vec<T> {
        let mut best = T::neg_infinity();
        self.history
            .iter()
            .map(|r| {
                best = best.max(r.reward);
                best
            })
            .collect()
    }

    /// First iteration whose reward reaches `threshold`.
    pub fn iterations_to(&self, threshold: T) -> Option<u64> {
        self.history.iter().find(|r| r.reward >= threshold).map(|r| r.iteration)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
struct EngineState<T> {
    iteration: u64,
    table: QTable<T>,
    gaussians: BTreeMap<FeatureId, GaussianState<T>>,
    tracker: RewardTracker<T>,
    arch_store: BTreeMap<usize, BTreeMap<String, T>>,
    base: Candidate<T>,
    base_reward: Option<T>,
    best: Option<ArchBest<T>>,
    per_arch_best: BTreeMap<usize, ArchBest<T>>,
    history: Vec<IterationRecord<T>>,
    rng: ChaCha8Rng,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Real")]
struct Checkpoint<T> {
    version: u32,
    scalar: String,
    config_digest: String,
    config: EngineConfig,
    space: SearchSpace<T>,
    state: EngineState<T>,
}

fn scalar_name<T>() -> String {
    std::any::type_name::<T>().to_string()
}

/// SHA-256 over the canonical JSON of the engine config and space.
pub fn config_digest<T: Real>(cfg: &EngineConfig, space: &SearchSpace<T>) -> String {
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_vec(cfg).expect("config serializes"));
    hasher.update(b"\n");
    hasher.update(serde_json::to_vec(space).expect("space serializes"));
    hex::encode(hasher.finalize())
}

/// Stateful single-run search engine.
pub struct Engine<T = f64> {
    space: SearchSpace<T>,
    cfg: EngineConfig,
    state: EngineState<T>,
    checkpoint_path: Option<PathBuf>,
    cache: Option<HashMap<String, EvalResult<T>>>,
    evaluator_calls: u64,
    cache_hits: u64,
}

impl<T: Real> Engine<T> {
    pub fn new(space: SearchSpace<T>, cfg: EngineConfig) -> Result<Self, EngineError> {
        cfg.validate()?;
        let table = QTable::for_space(&space, cfg.policy.q_init);
        let mut gaussians = BTreeMap::new();
        for arch in space.archs() {
            for spec in space.micro_params(arch).iter().filter(|p| !p.fixed && p.kind == ParamKind::Continuous) {
                gaussians.insert(FeatureId::micro(arch, &spec.name), cfg.stats.initial_state(spec.initial, spec.lower, spec.upper));
            }
        }
        let base = space.initial_candidate();
        let state = EngineState {
            iteration: 0,
            table,
            gaussians,
            tracker: RewardTracker::new(cfg.stats.tracker),
            arch_store: BTreeMap::new(),
            base,
            base_reward: None,
            best: None,
            per_arch_best: BTreeMap::new(),
            history: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        };
        let cache = cfg.eval_cache.then(HashMap::new);
        Ok(Self { space, cfg, state, checkpoint_path: None, cache, evaluator_calls: 0, cache_hits: 0 })
    }

    /// Checkpoints are written every `checkpoint_every` iterations, at the
    /// end of the run and when the evaluator fails.
    pub fn with_checkpoint_path(mut self, path: impl Into<PathBuf>) -> Self {
        self.checkpoint_path = Some(path.into());
        self
    }

    pub fn space(&self) -> &SearchSpace<T> {
        &self.space
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn iteration(&self) -> u64 {
        self.state.iteration
    }

    pub fn is_complete(&self) -> bool {
        self.state.iteration >= self.cfg.iterations
    }

    pub fn table(&self) -> &QTable<T> {
        &self.state.table
    }

    pub fn gaussians(&self) -> &BTreeMap<FeatureId, GaussianState<T>> {
        &self.state.gaussians
    }

    pub fn tracker(&self) -> &RewardTracker<T> {
        &self.state.tracker
    }

    pub fn base(&self) -> (&Candidate<T>, Option<T>) {
        (&self.state.base, self.state.base_reward)
    }

    pub fn history(&self) -> &[IterationRecord<T>] {
        &self.state.history
    }

    pub fn evaluator_calls(&self) -> u64 {
        self.evaluator_calls
    }

    pub fn cache_hits(&self) -> u64 {
        self.cache_hits
    }

    /// Current mutation probability of every feature.
    pub fn probabilities(&self) -> BTreeMap<FeatureId, f64> {
        self.state.table.probabilities(&self.cfg.effective_policy())
    }

    pub fn config_digest(&self) -> String {
        config_digest(&self.cfg, &self.space)
    }

    fn propose(&mut self, policy: &MutationPolicyConfig) -> Result<(Candidate<T>, MutationRecord<T>), EngineError> {
        if self.cfg.search == SearchPolicy::RandomSearch {
            return Ok((sample_uniform(&self.space, &mut self.state.rng), MutationRecord::default()));
        }
        let view = PolicyView {
            space: &self.space,
            table: &self.state.table,
            gaussians: &self.state.gaussians,
            arch_store: &self.state.arch_store,
            cfg: policy,
        };
        Ok(mutate_candidate(&view, &self.state.base, &mut self.state.rng)?)
    }

    fn evaluate(&mut self, evaluator: &mut (impl Evaluator<T> + ?Sized), cand: &Candidate<T>) -> Result<EvalResult<T>, EvalError> {
        let key = self.cache.as_ref().map(|_| cache_key(cand));
        if let (Some(cache), Some(key)) = (&self.cache, &key) {
            if let Some(hit) = cache.get(key) {
                self.cache_hits += 1;
                return Ok(EvalResult { source: crate::evaluators::Source::Cache, ..hit.clone() });
            }
        }
        self.evaluator_calls += 1;
        let result = evaluator.evaluate(cand)?;
        if !result.reward.is_finite() {
            return Err(EvalError::NonFinite(result.reward.as_f64()));
        }
        if let (Some(cache), Some(key)) = (&mut self.cache, key) {
            cache.insert(key, result.clone());
        }
        Ok(result)
    }

    /// Runs one iteration.
    pub fn step(&mut self, evaluator: &mut (impl Evaluator<T> + ?Sized)) -> Result<&IterationRecord<T>, EngineError> {
        let started = Instant::now();
        let policy = self.cfg.effective_policy();
        let mutation_probs = self.state.table.probabilities(&policy);
        let rng_before = self.state.rng.clone();

        let (mut cand, record) = self.propose(&policy)?;
        let iteration = self.state.iteration + 1;
        cand.iteration = iteration;

        let result = match self.evaluate(evaluator, &cand) {
            Ok(r) => r,
            Err(source) => {
                self.state.rng = rng_before;
                if let Some(path) = self.checkpoint_path.clone() {
                    self.save_checkpoint(&path)?;
                }
                return Err(EngineError::Evaluator { iteration, source });
            }
        };
        let reward = result.reward;
        let advantage = self.state.tracker.advantage(reward);

        if self.cfg.search == SearchPolicy::Adaptive {
            self.state.table.reinforce(&record, advantage, &policy)?;
        }
        if self.cfg.search != SearchPolicy::RandomSearch {
            for entry in record.entries.iter().filter(|e| e.offset.is_some()) {
                let spec = self
                    .space
                    .micro_params(cand.arch_index)
                    .iter()
                    .find(|p| FeatureId::micro(cand.arch_index, &p.name) == entry.feature)
                    .expect("mutated feature belongs to candidate architecture");
                let state = self.state.gaussians.get_mut(&entry.feature).expect("continuous feature has a Gaussian state");
                *state = adapt(state, entry.new_value, reward, &self.state.tracker, &self.cfg.stats, (spec.lower, spec.upper));
            }
        }
        self.state.tracker = self.state.tracker.observe(reward);

        let accepted = match self.cfg.acceptance {
            Acceptance::AlwaysAccept => true,
            Acceptance::GreedyElitist => self.state.base_reward.is_none_or(|b| reward >= b),
        };
        if accepted {
            self.state.base = cand.clone();
            self.state.base_reward = Some(reward);
        }
        self.state.arch_store.insert(cand.arch_index, cand.micro_values.clone());

        if self.state.best.as_ref().is_none_or(|b| reward > b.reward) {
            self.state.best = Some(ArchBest { candidate: cand.clone(), reward });
        }
        match self.state.per_arch_best.get(&cand.arch_index) {
            Some(b) if b.reward >= reward => {}
            _ => {
                self.state.per_arch_best.insert(cand.arch_index, ArchBest { candidate: cand.clone(), reward });
            }
        }

        let rec = IterationRecord {
            iteration,
            candidate: cand,
            reward,
            running_avg: self.state.tracker.running_avg,
            mutation_record: record,
            q_snapshot_digest: self.state.table.digest(),
            accepted,
            wall_time_ms: self.cfg.record_wall_time.then(|| started.elapsed().as_millis() as u64),
            mutation_probs,
            gaussians: self.state.gaussians.clone(),
            metrics: result.metrics,
        };
        self.state.history.push(rec);
        self.state.iteration = iteration;

        if let Some(path) = self.checkpoint_path.clone() {
            if iteration.is_multiple_of(self.cfg.checkpoint_every) || self.is_complete() {
                self.save_checkpoint(&path)?;
            }
        }
        Ok(self.state.history.last().expect("just pushed"))
    }

    /// Runs the remaining iterations, handing each record to `on_record`.
    pub fn run<F>(&mut self, evaluator: &mut (impl Evaluator<T> + ?Sized), mut on_record: F) -> Result<RunResult<T>, EngineError>
    where
        F: FnMut(&IterationRecord<T>) -> std::io::Result<()>,
    {
        while !self.is_complete() {
            let rec = self.step(evaluator)?;
            on_record(rec)?;
        }
        self.result().ok_or_else(|| EngineError::Config("run finished without any iteration".into()))
    }

    /// Result so far; `None` before the first iteration.
    pub fn result(&self) -> Option<RunResult<T>> {
        let best = self.state.best.as_ref()?;
        Some(RunResult {
            best_candidate: best.candidate.clone(),
            best_reward: best.reward,
            history: self.state.history.clone(),
            per_arch_best: self.state.per_arch_best.clone(),
        })
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<(), EngineError> {
        let ckpt = CheckpointRef {
            version: CHECKPOINT_VERSION,
            scalar: scalar_name::<T>(),
            config_digest: self.config_digest(),
            config: &self.cfg,
            space: &self.space,
            state: &self.state,
        };
        let json = serde_json::to_vec(&ckpt).expect("checkpoint serializes");
        let tmp = path.with_extension("tmp");
        let io_err = |source| EngineError::CheckpointIo { path: path.to_path_buf(), source };
        std::fs::write(&tmp, json).map_err(io_err)?;
        std::fs::rename(&tmp, path).map_err(io_err)?;
        Ok(())
    }

    /// Restores an engine from a checkpoint; the continued run reproduces
    /// the uninterrupted trajectory.
    pub fn load_checkpoint(path: &Path) -> Result<Self, EngineError> {
        let corrupt = |reason: String| EngineError::CorruptCheckpoint { path: path.to_path_buf(), reason };
        let text = std::fs::read_to_string(path).map_err(|e| corrupt(e.to_string()))?;
        let header: serde_json::Value = serde_json::from_str(&text).map_err(|e| corrupt(e.to_string()))?;
        let version = header.get("version").and_then(|v| v.as_u64()).ok_or_else(|| corrupt("missing version".into()))?;
        if version != u64::from(CHECKPOINT_VERSION) {
            return Err(EngineError::VersionMismatch { path: path.to_path_buf(), found: version as u32, expected: CHECKPOINT_VERSION });
        }
        let ckpt: Checkpoint<T> = serde_json::from_value(header).map_err(|e| corrupt(e.to_string()))?;
        if ckpt.scalar != scalar_name::<T>() {
            return Err(corrupt(format!("checkpoint scalar type {} does not match {}", ckpt.scalar, scalar_name::<T>())));
        }
        if ckpt.config_digest != config_digest(&ckpt.config, &ckpt.space) {
            return Err(corrupt("config digest mismatch".into()));
        }
        ckpt.config.validate()?;
        if ckpt.state.history.len() as u64 != ckpt.state.iteration {
            return Err(corrupt("history length disagrees with iteration index".into()));
        }
        let cache = ckpt.config.eval_cache.then(HashMap::new);
        Ok(Self {
            space: ckpt.space,
            cfg: ckpt.config,
            state: ckpt.state,
            checkpoint_path: Some(path.to_path_buf()),
            cache,
            evaluator_calls: 0,
            cache_hits: 0,
        })
    }
}

#[derive(Serialize)]
#[serde(bound = "T: Real")]
struct CheckpointRef<'a, T> {
    version: u32,
    scalar: String,
    config_digest: String,
    config: &'a EngineConfig,
    space: &'a SearchSpace<T>,
    state: &'a EngineState<T>,
}

/// Uniform in-bounds candidate; fixed parameters keep their initial values.
pub fn sample_uniform<T: Real>(space: &SearchSpace<T>, draws: &mut (impl Draws + ?Sized)) -> Candidate<T> {
    let bits: Vec<bool> = space
        .macro_params()
        .iter()
        .map(|p| if p.fixed { p.initial == T::one() } else { draws.uniform() < 0.5 })
        .collect();
    let macro_vector = MacroVector(bits);
    let arch_index = space.arch_index_of(&macro_vector).expect("fixed bits preserved");
    let micro_values = space
        .micro_params(arch_index)
        .iter()
        .map(|p| {
            let v = if p.fixed {
                p.initial
            } else {
                let u = T::lit(draws.uniform());
                match p.kind {
                    ParamKind::Continuous => p.lower + u * p.span(),
                    ParamKind::Binary | ParamKind::Discrete => {
                        (p.lower + (u * (p.span() + T::one())).floor()).min(p.upper)
                    }
                }
            };
            (p.name.clone(), v)
        })
        .collect();
    Candidate { macro_vector, arch_index, micro_values, iteration: 0 }
}

/// Runs a fresh search to completion.
pub fn run_search<T: Real>(
    space: &SearchSpace<T>,
    evaluator: &mut (impl Evaluator<T> + ?Sized),
    cfg: &EngineConfig,
) -> Result<RunResult<T>, EngineError> {
    Engine::new(space.clone(), cfg.clone())?.run(evaluator, |_| Ok(()))
}

/// Continues a checkpointed run to completion.
pub fn resume<T: Real>(checkpoint: &Path, evaluator: &mut (impl Evaluator<T> + ?Sized)) -> Result<RunResult<T>, EngineError> {
    Engine::load_checkpoint(checkpoint)?.run(evaluator, |_| Ok(()))
}
