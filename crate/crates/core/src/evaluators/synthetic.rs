use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EvalResult, Evaluator, EvaluatorInfo, Source};
use crate::error::EvalError;
use crate::policy::Draws;
use crate::scalar::Real;
use crate::space::{Candidate, SearchSpace};

/// Logistic map from raw score to `(0, 1)`.
pub fn squash<T: Real>(raw: T) -> T {
    T::one() / (T::one() + (-raw).exp())
}

/// Inverse of [`squash`].
pub fn unsquash<T: Real>(reward: T) -> T {
    (reward / (T::one() - reward)).ln()
}

/// Quadratic bowl for one architecture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
#[serde(deny_unknown_fields)]
pub struct ArchLandscape<T = f64> {
    pub bonus: T,
    #[serde(default)]
    pub optimum: BTreeMap<String, T>,
    /// Curvature per parameter; parameters without a weight do not matter.
    #[serde(default)]
    pub weights: BTreeMap<String, T>,
}

/// `reward = squash(bonus[arch] - sum_i w_i (theta_i - theta*_i)^2 + noise)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
#[serde(deny_unknown_fields)]
pub struct SyntheticLandscape<T = f64> {
    pub archs: BTreeMap<usize, ArchLandscape<T>>,
    #[serde(default)]
    pub noise_std: T,
    #[serde(default)]
    pub noise_seed: u64,
}

impl<T: Real> SyntheticLandscape<T> {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, EvalError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de)
            .map_err(|e| EvalError::Landscape(format!("{}: at `{}`: {}", path.display(), e.path(), e.inner())))
    }

    /// Checks that every architecture of `space` is described and that
    /// every weighted parameter has an in-bounds optimum.
    pub fn check_against(&self, space: &SearchSpace<T>) -> Result<(), EvalError> {
        if self.noise_std.is_nan() || self.noise_std < T::zero() {
            return Err(EvalError::Landscape("noise_std must be non-negative".into()));
        }
        for arch in space.archs() {
            let land = self
                .archs
                .get(&arch)
                .ok_or_else(|| EvalError::Landscape(format!("no entry for architecture {arch}")))?;
            for (name, w) in &land.weights {
                if *w < T::zero() {
                    return Err(EvalError::Landscape(format!("archs.{arch}.weights.{name} is negative")));
                }
                let spec = space
                    .micro_params(arch)
                    .iter()
                    .find(|p| &p.name == name)
                    .ok_or_else(|| EvalError::Landscape(format!("archs.{arch}.weights.{name}: unknown parameter")))?;
                let opt = land
                    .optimum
                    .get(name)
                    .ok_or_else(|| EvalError::Landscape(format!("archs.{arch}.optimum.{name} missing")))?;
                spec.check_value(*opt).map_err(|e| EvalError::Landscape(format!("archs.{arch}.optimum: {e}")))?;
            }
        }
        Ok(())
    }

    /// Noise-free score before squashing.
    pub fn raw_score(&self, cand: &Candidate<T>) -> Result<T, EvalError> {
        let land = self
            .archs
            .get(&cand.arch_index)
            .ok_or_else(|| EvalError::Landscape(format!("no entry for architecture {}", cand.arch_index)))?;
        let mut penalty = T::zero();
        for (name, &w) in &land.weights {
            let target = land.optimum.get(name).copied().unwrap_or_else(T::zero);
            let value = cand
                .micro_values
                .get(name)
                .copied()
                .ok_or_else(|| EvalError::Landscape(format!("candidate lacks weighted parameter `{name}`")))?;
            let d = value - target;
            penalty = penalty + w * d * d;
        }
        Ok(land.bonus - penalty)
    }

    pub fn evaluate(&self, cand: &Candidate<T>, draws: Option<&mut dyn Draws>) -> Result<EvalResult<T>, EvalError> {
        let mut raw = self.raw_score(cand)?;
        if self.noise_std > T::zero() {
            if let Some(d) = draws {
                raw = raw + self.noise_std * T::lit(d.standard_normal());
            }
        }
        let reward = squash(raw);
        let mut metrics = BTreeMap::new();
        metrics.insert("raw_score".to_string(), raw.as_f64());
        Ok(EvalResult { reward, metrics, source: Source::Synthetic })
    }

    /// Best architecture and its noise-free reward at the optimum.
    pub fn global_optimum(&self) -> Option<(usize, T)> {
        self.archs
            .iter()
            .fold(None, |best: Option<(usize, T)>, (&arch, land)| match best {
                Some((_, b)) if b >= land.bonus => best,
                _ => Some((arch, land.bonus)),
            })
            .map(|(arch, bonus)| (arch, squash(bonus)))
    }
}

/// Owns a landscape and the noise generator.
pub struct SyntheticEvaluator<T = f64> {
    landscape: SyntheticLandscape<T>,
    rng: ChaCha8Rng,
    calls: u64,
}

impl<T: Real> SyntheticEvaluator<T> {
    pub fn new(landscape: SyntheticLandscape<T>) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(landscape.noise_seed);
        Self { landscape, rng, calls: 0 }
    }

    pub fn landscape(&self) -> &SyntheticLandscape<T> {
        &self.landscape
    }

    pub fn calls(&self) -> u64 {
        self.calls
    }
}

impl<T: Real> Evaluator<T> for SyntheticEvaluator<T> {
    fn evaluate(&mut self, cand: &Candidate<T>) -> Result<EvalResult<T>, EvalError> {
        self.calls += 1;
        self.landscape.evaluate(cand, Some(&mut self.rng))
    }

    fn describe(&self) -> EvaluatorInfo {
        let mut details = BTreeMap::new();
        details.insert("architectures".into(), self.landscape.archs.len().to_string());
        details.insert("noise_std".into(), self.landscape.noise_std.to_string());
        EvaluatorInfo { name: "synthetic".into(), details }
    }
}
