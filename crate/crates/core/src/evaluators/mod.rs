//! Reward sources.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::EvalError;
use crate::scalar::Real;
use crate::space::Candidate;

mod cache;
mod external;
pub mod protocol;
mod synthetic;

pub use cache::Cached;
pub use external::{ExternalConfig, ExternalEvaluator};
pub use synthetic::{squash, unsquash, ArchLandscape, SyntheticEvaluator, SyntheticLandscape};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Synthetic,
    External,
    Cache,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct EvalResult<T = f64> {
    /// Higher is better.
    pub reward: T,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metrics: BTreeMap<String, f64>,
    pub source: Source,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvaluatorInfo {
    pub name: String,
    #[serde(default)]
    pub details: BTreeMap<String, String>,
}

pub trait Evaluator<T: Real>: Send {
    fn evaluate(&mut self, cand: &Candidate<T>) -> Result<EvalResult<T>, EvalError>;

    fn describe(&self) -> EvaluatorInfo;
}

impl<T: Real, E: Evaluator<T> + ?Sized> Evaluator<T> for Box<E> {
    fn evaluate(&mut self, cand: &Candidate<T>) -> Result<EvalResult<T>, EvalError> {
        (**self).evaluate(cand)
    }

    fn describe(&self) -> EvaluatorInfo {
        (**self).describe()
    }
}

/// Cache identity of a candidate: architecture, macro bits and micro values
/// rounded to 12 significant digits.
pub fn cache_key<T: Real>(cand: &Candidate<T>) -> String {
    let mut key = format!("{}|{}|", cand.arch_index, cand.macro_vector);
    for (name, value) in &cand.micro_values {
        let _ = write!(key, "{name}={:.11e};", value.as_f64());
    }
    key
}
