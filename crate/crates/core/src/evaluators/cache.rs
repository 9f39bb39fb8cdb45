use std::collections::HashMap;

use super::{cache_key, EvalResult, Evaluator, EvaluatorInfo, Source};
use crate::error::EvalError;
use crate::scalar::Real;
use crate::space::Candidate;

/// Memoizes an inner evaluator by [`cache_key`]. Failures are not stored.
pub struct Cached<E, T = f64> {
    inner: E,
    store: HashMap<String, EvalResult<T>>,
    inner_calls: u64,
    hits: u64,
}

impl<E: Evaluator<T>, T: Real> Cached<E, T> {
    pub fn new(inner: E) -> Self {
        Self { inner, store: HashMap::new(), inner_calls: 0, hits: 0 }
    }

    pub fn inner_calls(&self) -> u64 {
        self.inner_calls
    }

    pub fn hits(&self) -> u64 {
        self.hits
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }

    pub fn into_inner(self) -> E {
        self.inner
    }
}

impl<E: Evaluator<T>, T: Real> Evaluator<T> for Cached<E, T> {
    fn evaluate(&mut self, cand: &Candidate<T>) -> Result<EvalResult<T>, EvalError> {
        let key = cache_key(cand);
        if let Some(hit) = self.store.get(&key) {
            self.hits += 1;
            return Ok(EvalResult { source: Source::Cache, ..hit.clone() });
        }
        self.inner_calls += 1;
        let result = self.inner.evaluate(cand)?;
        self.store.insert(key, result.clone());
        Ok(result)
    }

    fn describe(&self) -> EvaluatorInfo {
        let mut info = self.inner.describe();
        info.details.insert("cached".into(), "true".into());
        info
    }
}
