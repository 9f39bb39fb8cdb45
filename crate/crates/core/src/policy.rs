//! Q-table driven mutation policy.
//!
//! Every mutable feature owns one Q-value per action. A feature's summed
//! Q-value, normalised by the largest sum in the table and scaled by
//! `max_prob`, is its probability of being mutated in an iteration. Within a
//! feature, `Plus`/`Minus` are chosen in proportion to their Q-values; binary
//! features only ever `Flip`.
//!
//! Draw order inside [`mutate_candidate`] is fixed: macro bits in declaration
//! order, then the micro parameters of the resulting architecture in
//! declaration order. Each feature consumes its firing draw, then (if it
//! fired and is not binary) one action draw, then (if continuous) one
//! standard-normal offset draw.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::PolicyError;
use crate::scalar::Real;
use crate::space::{Candidate, MacroVector, ParamKind, ParamSpec, SearchSpace};
use crate::stats::GaussianState;

/// Identifies a mutable feature across the whole hierarchy.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureId(String);

impl FeatureId {
    pub fn macro_bit(name: &str) -> Self {
        Self(format!("macro/{name}"))
    }

    pub fn micro(arch: usize, name: &str) -> Self {
        Self(format!("arch{arch}/{name}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_macro(&self) -> bool {
        self.0.starts_with("macro/")
    }
}

impl fmt::Display for FeatureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Flip,
    Plus,
    Minus,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Action::Flip => "flip",
            Action::Plus => "plus",
            Action::Minus => "minus",
        })
    }
}

fn actions_for(kind: ParamKind) -> &'static [Action] {
    match kind {
        ParamKind::Binary => &[Action::Flip],
        ParamKind::Discrete | ParamKind::Continuous => &[Action::Plus, Action::Minus],
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContinuousMutation {
    /// New value is `mean ± |x|`.
    #[default]
    MeanRelative,
    /// New value is `current ± |x|`.
    ValueRelative,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MutationPolicyConfig {
    /// Upper bound on any feature's mutation probability.
    pub max_prob: f64,
    /// Overrides `max_prob` for macro bits.
    pub macro_max_prob: Option<f64>,
    /// Overrides `max_prob` for micro parameters.
    pub micro_max_prob: Option<f64>,
    pub q_init: f64,
    pub q_floor: f64,
    pub q_learning_rate: f64,
    pub continuous_mutation: ContinuousMutation,
    /// When set, every feature fires with this probability, actions are
    /// 50/50 and the Q-table is never consulted.
    pub fixed_prob: Option<f64>,
}

impl Default for MutationPolicyConfig {
    fn default() -> Self {
        Self {
            max_prob: 0.5,
            macro_max_prob: None,
            micro_max_prob: None,
            q_init: 1.0,
            q_floor: 0.05,
            q_learning_rate: 1.0,
            continuous_mutation: ContinuousMutation::MeanRelative,
            fixed_prob: None,
        }
    }
}

impl MutationPolicyConfig {
    pub fn validate(&self) -> Result<(), String> {
        let prob_ok = |p: f64| p > 0.0 && p <= 1.0;
        if !prob_ok(self.max_prob) {
            return Err(format!("policy.max_prob must lie in (0, 1], got {}", self.max_prob));
        }
        for (key, p) in [("policy.macro_max_prob", self.macro_max_prob), ("policy.micro_max_prob", self.micro_max_prob)] {
            if let Some(p) = p {
                if !prob_ok(p) {
                    return Err(format!("{key} must lie in (0, 1], got {p}"));
                }
            }
        }
        if let Some(p) = self.fixed_prob {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("policy.fixed_prob must lie in [0, 1], got {p}"));
            }
        }
        if self.q_floor.is_nan() || self.q_floor <= 0.0 {
            return Err("policy.q_floor must be positive".into());
        }
        if self.q_init.is_nan() || self.q_init < self.q_floor {
            return Err("policy.q_init must be at least policy.q_floor".into());
        }
        if !(self.q_learning_rate > 0.0 && self.q_learning_rate.is_finite()) {
            return Err("policy.q_learning_rate must be positive".into());
        }
        Ok(())
    }

    pub fn level_max_prob(&self, feature: &FeatureId) -> f64 {
        let over = if feature.is_macro() { self.macro_max_prob } else { self.micro_max_prob };
        over.unwrap_or(self.max_prob)
    }
}

/// Per-feature, per-action utilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct QTable<T = f64> {
    entries: BTreeMap<FeatureId, BTreeMap<Action, T>>,
}

impl<T: Real> Default for QTable<T> {
    fn default() -> Self {
        Self { entries: BTreeMap::new() }
    }
}

impl<T: Real> QTable<T> {
    /// One entry per mutable feature, every action at `q_init`. Fixed
    /// features get no entry.
    pub fn for_space(space: &SearchSpace<T>, q_init: f64) -> Self {
        let mut table = Self::default();
        let q = T::lit(q_init);
        for spec in space.macro_params().iter().filter(|p| !p.fixed) {
            table.insert_feature(FeatureId::macro_bit(&spec.name), spec.kind, q);
        }
        for arch in space.archs() {
            for spec in space.micro_params(arch).iter().filter(|p| !p.fixed) {
                table.insert_feature(FeatureId::micro(arch, &spec.name), spec.kind, q);
            }
        }
        table
    }

    pub fn insert_feature(&mut self, id: FeatureId, kind: ParamKind, q: T) {
        self.entries.insert(id, actions_for(kind).iter().map(|&a| (a, q)).collect());
    }

    pub fn set(&mut self, id: &FeatureId, action: Action, q: T) -> Result<(), PolicyError> {
        let slot = self
            .entries
            .get_mut(id)
            .and_then(|m| m.get_mut(&action))
            .ok_or_else(|| PolicyError::UnknownFeature(format!("{id}:{action}")))?;
        *slot = q;
        Ok(())
    }

    pub fn get(&self, id: &FeatureId, action: Action) -> Result<T, PolicyError> {
        self.entries
            .get(id)
            .and_then(|m| m.get(&action))
            .copied()
            .ok_or_else(|| PolicyError::UnknownFeature(format!("{id}:{action}")))
    }

    pub fn actions(&self, id: &FeatureId) -> Result<&BTreeMap<Action, T>, PolicyError> {
        self.entries.get(id).ok_or_else(|| PolicyError::UnknownFeature(id.to_string()))
    }

    pub fn features(&self) -> impl Iterator<Item = &FeatureId> {
        self.entries.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn cumulative_q(&self, id: &FeatureId) -> Result<T, PolicyError> {
        Ok(self.actions(id)?.values().fold(T::zero(), |acc, &q| acc + q))
    }

    fn max_cumulative(&self) -> Option<T> {
        self.entries
            .values()
            .map(|m| m.values().fold(T::zero(), |acc, &q| acc + q))
            .fold(None, |best: Option<T>, q| Some(best.map_or(q, |b| b.max(q))))
    }

    /// `Q(s) / max_s' Q(s') * max_prob`.
    pub fn mutation_probability(&self, id: &FeatureId, max_prob: f64) -> Result<f64, PolicyError> {
        let max = self.max_cumulative().ok_or(PolicyError::EmptyTable)?;
        let q = self.cumulative_q(id)?;
        if q == max {
            return Ok(max_prob);
        }
        Ok((q / max).as_f64() * max_prob)
    }

    /// Probability for every feature, honouring per-level overrides.
    pub fn probabilities(&self, cfg: &MutationPolicyConfig) -> BTreeMap<FeatureId, f64> {
        self.entries
            .keys()
            .map(|id| {
                let p = match cfg.fixed_prob {
                    Some(p) => p,
                    None => self.mutation_probability(id, cfg.level_max_prob(id)).expect("feature present"),
                };
                (id.clone(), p)
            })
            .collect()
    }

    /// `Q(s,a) <- max(q_floor, Q(s,a) + lr * advantage)` for each mutated pair.
    pub fn reinforce(&mut self, record: &MutationRecord<T>, advantage: T, cfg: &MutationPolicyConfig) -> Result<(), PolicyError> {
        let floor = T::lit(cfg.q_floor);
        let step = T::lit(cfg.q_learning_rate) * advantage;
        for entry in &record.entries {
            let q = self.get(&entry.feature, entry.action)?;
            self.set(&entry.feature, entry.action, (q + step).max(floor))?;
        }
        Ok(())
    }

    /// Hex SHA-256 of the table's canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("Q-table serializes");
        hex::encode(Sha256::digest(&json))
    }
}

pub fn cumulative_q<T: Real>(table: &QTable<T>, id: &FeatureId) -> Result<T, PolicyError> {
    table.cumulative_q(id)
}

pub fn mutation_probability<T: Real>(table: &QTable<T>, id: &FeatureId, max_prob: f64) -> Result<f64, PolicyError> {
    table.mutation_probability(id, max_prob)
}

/// Source of the random draws consumed by mutation.
pub trait Draws {
    /// Decides whether `feature` mutates. Consumes one uniform draw.
    fn fires(&mut self, feature: &FeatureId, probability: f64) -> bool {
        let _ = feature;
        self.uniform() < probability
    }

    /// Uniform on `[0, 1)`.
    fn uniform(&mut self) -> f64;

    fn standard_normal(&mut self) -> f64;
}

impl<R: Rng + ?Sized> Draws for R {
    fn uniform(&mut self) -> f64 {
        self.random::<f64>()
    }

    fn standard_normal(&mut self) -> f64 {
        self.sample(StandardNormal)
    }
}

/// Picks `Plus` with probability `Q(s,+)/(Q(s,+)+Q(s,-))`. Binary features
/// always `Flip` without consuming a draw.
pub fn select_action<T: Real>(table: &QTable<T>, id: &FeatureId, draws: &mut (impl Draws + ?Sized)) -> Result<Action, PolicyError> {
    let actions = table.actions(id)?;
    if actions.contains_key(&Action::Flip) {
        return Ok(Action::Flip);
    }
    let plus = table.get(id, Action::Plus)?;
    let minus = table.get(id, Action::Minus)?;
    let p_plus = (plus / (plus + minus)).as_f64();
    Ok(if draws.uniform() < p_plus { Action::Plus } else { Action::Minus })
}

/// Applies one action to one value. Returns the new value and, for
/// continuous parameters, the sampled offset `x ~ N(0, variance)`.
pub fn mutate_value<T: Real>(
    spec: &ParamSpec<T>,
    current: T,
    action: Action,
    gauss: Option<&GaussianState<T>>,
    mode: ContinuousMutation,
    draws: &mut (impl Draws + ?Sized),
) -> Result<(T, Option<T>), PolicyError> {
    let mismatch = |problem| PolicyError::KindMismatch { name: spec.name.clone(), kind: spec.kind, problem };
    match (spec.kind, gauss) {
        (ParamKind::Continuous, None) => return Err(mismatch("requires a Gaussian state")),
        (ParamKind::Binary | ParamKind::Discrete, Some(_)) => return Err(mismatch("takes no Gaussian state")),
        _ => {}
    }
    match (spec.kind, action) {
        (ParamKind::Binary, Action::Flip) => Ok((T::one() - current, None)),
        (ParamKind::Binary, _) => Err(mismatch("only supports flip")),
        (_, Action::Flip) => Err(mismatch("cannot flip")),
        (ParamKind::Discrete, a) => {
            let step = if a == Action::Plus { T::one() } else { -T::one() };
            Ok(((current + step).clamp_to(spec.lower, spec.upper), None))
        }
        (ParamKind::Continuous, a) => {
            let state = gauss.expect("checked above");
            let x = state.std_dev() * T::lit(draws.standard_normal());
            let base = match mode {
                ContinuousMutation::MeanRelative => state.mean,
                ContinuousMutation::ValueRelative => current,
            };
            let raw = if a == Action::Plus { base + x.abs() } else { base - x.abs() };
            Ok((raw.clamp_to(spec.lower, spec.upper), Some(x)))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct MutationEntry<T = f64> {
    pub feature: FeatureId,
    pub action: Action,
    pub old_value: T,
    pub new_value: T,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub offset: Option<T>,
}

/// Features whose mutation fired in one iteration.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
#[serde(transparent)]
pub struct MutationRecord<T = f64> {
    pub entries: Vec<MutationEntry<T>>,
}

impl<T: Real> MutationRecord<T> {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }
}

/// Everything the policy reads while mutating, besides the candidate.
pub struct PolicyView<'a, T> {
    pub space: &'a SearchSpace<T>,
    pub table: &'a QTable<T>,
    pub gaussians: &'a BTreeMap<FeatureId, GaussianState<T>>,
    /// Last-seen micro values per architecture, used when the macro vector
    /// moves to a different architecture.
    pub arch_store: &'a BTreeMap<usize, BTreeMap<String, T>>,
    pub cfg: &'a MutationPolicyConfig,
}

impl<'a, T: Real> PolicyView<'a, T> {
    fn probability(&self, id: &FeatureId) -> Result<f64, PolicyError> {
        match self.cfg.fixed_prob {
            Some(p) => {
                self.table.actions(id)?;
                Ok(p)
            }
            None => self.table.mutation_probability(id, self.cfg.level_max_prob(id)),
        }
    }

    fn action(&self, id: &FeatureId, draws: &mut (impl Draws + ?Sized)) -> Result<Action, PolicyError> {
        if self.cfg.fixed_prob.is_some() {
            let actions = self.table.actions(id)?;
            if actions.contains_key(&Action::Flip) {
                return Ok(Action::Flip);
            }
            return Ok(if draws.uniform() < 0.5 { Action::Plus } else { Action::Minus });
        }
        select_action(self.table, id, draws)
    }
}

/// Produces the next candidate: independent macro bit flips, re-decoding of
/// the architecture (with warm-started micro values on a switch), then
/// independent micro mutations.
pub fn mutate_candidate<T: Real>(
    view: &PolicyView<'_, T>,
    cand: &Candidate<T>,
    draws: &mut (impl Draws + ?Sized),
) -> Result<(Candidate<T>, MutationRecord<T>), PolicyError> {
    let space = view.space;
    let mut record = MutationRecord::default();

    let mut bits = cand.macro_vector.0.clone();
    for (bit, spec) in bits.iter_mut().zip(space.macro_params()) {
        if spec.fixed {
            continue;
        }
        let id = FeatureId::macro_bit(&spec.name);
        if draws.fires(&id, view.probability(&id)?) {
            let old = if *bit { T::one() } else { T::zero() };
            *bit = !*bit;
            record.entries.push(MutationEntry { feature: id, action: Action::Flip, old_value: old, new_value: T::one() - old, offset: None });
        }
    }
    let macro_vector = MacroVector(bits);
    let arch_index = space.arch_index_of(&macro_vector)?;

    let mut micro = if arch_index == cand.arch_index {
        cand.micro_values.clone()
    } else {
        view.arch_store.get(&arch_index).cloned().unwrap_or_else(|| space.initial_micro(arch_index))
    };

    for spec in space.micro_params(arch_index).iter().filter(|p| !p.fixed) {
        let id = FeatureId::micro(arch_index, &spec.name);
        if !draws.fires(&id, view.probability(&id)?) {
            continue;
        }
        let action = view.action(&id, draws)?;
        let current = *micro
            .get(&spec.name)
            .ok_or_else(|| crate::error::SpaceError::MissingParam { name: spec.name.clone(), arch: arch_index })?;
        let gauss = match spec.kind {
            ParamKind::Continuous => {
                Some(view.gaussians.get(&id).ok_or_else(|| PolicyError::UnknownFeature(id.to_string()))?)
            }
            _ => None,
        };
        let (new_value, offset) = mutate_value(spec, current, action, gauss, view.cfg.continuous_mutation, draws)?;
        micro.insert(spec.name.clone(), new_value);
        record.entries.push(MutationEntry { feature: id, action, old_value: current, new_value, offset });
    }

    let next = Candidate { macro_vector, arch_index, micro_values: micro, iteration: cand.iteration + 1 };
    Ok((next, record))
}
