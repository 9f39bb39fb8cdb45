//! Hierarchical architecture and hyperparameter search.
//!
//! A candidate is a macro bit vector choosing an architecture template plus
//! that template's micro parameters. Each iteration mutates features with
//! probabilities derived from a Q-table, evaluates the result through a
//! pluggable [`Evaluator`](evaluators::Evaluator), and adapts the Q-values
//! and the per-feature Gaussian sampling statistics from the reward.
//!
//! Numeric types are generic over [`Real`]; the aliases below fix the scalar
//! for the common cases.

pub mod bench;
pub mod engine;
pub mod error;
pub mod evaluators;
pub mod output;
pub mod policy;
pub mod scalar;
pub mod space;
pub mod stats;

pub use engine::{resume, run_search, Acceptance, Engine, EngineConfig, IterationRecord, RunResult, SearchPolicy};
pub use error::{EngineError, EvalError, PolicyError, SpaceError};
pub use evaluators::{EvalResult, Evaluator};
pub use policy::{Action, FeatureId, MutationPolicyConfig, QTable};
pub use scalar::Real;
pub use space::{Candidate, MacroVector, ParamKind, ParamSpec, SearchSpace};
pub use stats::{GaussianState, RewardTracker, StatsConfig};

pub type SearchSpaceF64 = space::SearchSpace<f64>;
pub type SearchSpaceF32 = space::SearchSpace<f32>;
pub type CandidateF64 = space::Candidate<f64>;
pub type CandidateF32 = space::Candidate<f32>;
pub type QTableF64 = policy::QTable<f64>;
pub type QTableF32 = policy::QTable<f32>;
pub type EngineF64 = engine::Engine<f64>;
pub type EngineF32 = engine::Engine<f32>;
pub type RunResultF64 = engine::RunResult<f64>;
pub type RunResultF32 = engine::RunResult<f32>;
pub type SyntheticLandscapeF64 = evaluators::SyntheticLandscape<f64>;
pub type SyntheticLandscapeF32 = evaluators::SyntheticLandscape<f32>;
