//! Hierarchical search space: a macro bit vector selecting an architecture
//! template, and per-template micro parameter lists.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::SpaceError;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Binary,
    Discrete,
    Continuous,
}

impl fmt::Display for ParamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ParamKind::Binary => "binary",
            ParamKind::Discrete => "discrete",
            ParamKind::Continuous => "continuous",
        };
        f.write_str(s)
    }
}

/// Declaration of one mutable feature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
#[serde(deny_unknown_fields)]
pub struct ParamSpec<T = f64> {
    pub name: String,
    pub kind: ParamKind,
    pub lower: T,
    pub upper: T,
    pub initial: T,
    /// Fixed parameters never mutate (e.g. a backbone bit pinned to 1).
    #[serde(default)]
    pub fixed: bool,
}

impl<T: Real> ParamSpec<T> {
    pub fn binary(name: impl Into<String>, initial: bool) -> Self {
        Self {
            name: name.into(),
            kind: ParamKind::Binary,
            lower: T::zero(),
            upper: T::one(),
            initial: if initial { T::one() } else { T::zero() },
            fixed: false,
        }
    }

    pub fn discrete(name: impl Into<String>, lower: i64, upper: i64, initial: i64) -> Self {
        Self {
            name: name.into(),
            kind: ParamKind::Discrete,
            lower: T::from_i64(lower).expect("bound fits scalar"),
            upper: T::from_i64(upper).expect("bound fits scalar"),
            initial: T::from_i64(initial).expect("initial fits scalar"),
            fixed: false,
        }
    }

    pub fn continuous(name: impl Into<String>, lower: T, upper: T, initial: T) -> Self {
        Self { name: name.into(), kind: ParamKind::Continuous, lower, upper, initial, fixed: false }
    }

    pub fn fixed(mut self) -> Self {
        self.fixed = true;
        self
    }

    pub fn span(&self) -> T {
        self.upper - self.lower
    }

    /// Checks that `value` is admissible for this parameter.
    pub fn check_value(&self, value: T) -> Result<(), SpaceError> {
        if !value.is_finite() || value < self.lower || value > self.upper {
            return Err(SpaceError::OutOfBounds {
                name: self.name.clone(),
                value: value.as_f64(),
                lower: self.lower.as_f64(),
                upper: self.upper.as_f64(),
            });
        }
        if self.kind != ParamKind::Continuous && !value.is_integral() {
            return Err(SpaceError::NotIntegral { name: self.name.clone(), value: value.as_f64() });
        }
        Ok(())
    }

    fn check_declaration(&self, path: &str) -> Result<(), SpaceError> {
        let invalid = |reason: String| SpaceError::InvalidSpec { path: path.to_string(), reason };
        if self.name.is_empty() {
            return Err(invalid("empty parameter name".into()));
        }
        if !(self.lower.is_finite() && self.upper.is_finite()) || self.lower > self.upper {
            return Err(invalid(format!("bounds [{}, {}] are not an interval", self.lower, self.upper)));
        }
        match self.kind {
            ParamKind::Binary if self.lower != T::zero() || self.upper != T::one() => {
                return Err(invalid("binary parameters must have bounds [0, 1]".into()));
            }
            ParamKind::Discrete if !self.lower.is_integral() || !self.upper.is_integral() => {
                return Err(invalid("discrete bounds must be integers".into()));
            }
            _ => {}
        }
        self.check_value(self.initial)
            .map_err(|e| invalid(format!("initial value rejected: {e}")))
    }
}

/// Ordered macro bits; the first bit is the most significant.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MacroVector(pub Vec<bool>);

impl MacroVector {
    pub fn from_bits(bits: &[u8]) -> Self {
        Self(bits.iter().map(|&b| b != 0).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> Vec<u8> {
        self.0.iter().map(|&b| u8::from(b)).collect()
    }
}

impl fmt::Display for MacroVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl Serialize for MacroVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.bits().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for MacroVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = Vec::<u8>::deserialize(deserializer)?;
        if let Some(bad) = raw.iter().find(|&&b| b > 1) {
            return Err(serde::de::Error::custom(format!("macro bit must be 0 or 1, got {bad}")));
        }
        Ok(Self::from_bits(&raw))
    }
}

/// Reads the bits as a base-2 number, first bit most significant.
pub fn decode_arch_index(bits: &[bool]) -> usize {
    bits.iter().fold(0usize, |acc, &b| (acc << 1) | usize::from(b))
}

/// Decodes only the free (non-fixed) bits, yielding an index in `0..2^F`.
pub fn effective_arch_index<T: Real>(bits: &[bool], specs: &[ParamSpec<T>]) -> Result<usize, SpaceError> {
    if bits.len() != specs.len() {
        return Err(SpaceError::MacroLength { expected: specs.len(), found: bits.len() });
    }
    let mut free = Vec::with_capacity(bits.len());
    for (&bit, spec) in bits.iter().zip(specs) {
        if spec.fixed {
            if bit != (spec.initial == T::one()) {
                return Err(SpaceError::FixedBitViolation { name: spec.name.clone() });
            }
        } else {
            free.push(bit);
        }
    }
    Ok(decode_arch_index(&free))
}

/// A fully assigned configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Candidate<T = f64> {
    pub macro_vector: MacroVector,
    /// Effective architecture index (decoded over free macro bits).
    pub arch_index: usize,
    pub micro_values: BTreeMap<String, T>,
    pub iteration: u64,
}

#[derive(Deserialize)]
#[serde(bound = "T: Real")]
#[serde(deny_unknown_fields)]
struct RawSpace<T> {
    #[serde(rename = "macro")]
    macro_params: Vec<ParamSpec<T>>,
    #[serde(default)]
    micro: BTreeMap<String, Vec<ParamSpec<T>>>,
}

/// Immutable hierarchical search space.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchSpace<T = f64> {
    macro_params: Vec<ParamSpec<T>>,
    micro_params: BTreeMap<usize, Vec<ParamSpec<T>>>,
}

impl<T: Real> SearchSpace<T> {
    /// Builds and validates a space. Reachable architectures without an entry
    /// get an empty micro list.
    pub fn new(
        macro_params: Vec<ParamSpec<T>>,
        mut micro_params: BTreeMap<usize, Vec<ParamSpec<T>>>,
    ) -> Result<Self, SpaceError> {
        if macro_params.is_empty() {
            return Err(SpaceError::InvalidSpec { path: "macro".into(), reason: "at least one macro bit is required".into() });
        }
        let mut seen = BTreeSet::new();
        for (i, spec) in macro_params.iter().enumerate() {
            let path = format!("macro[{i}]");
            if spec.kind != ParamKind::Binary {
                return Err(SpaceError::InvalidSpec { path, reason: format!("macro parameters must be binary, got {}", spec.kind) });
            }
            spec.check_declaration(&path)?;
            if !seen.insert(spec.name.as_str()) {
                return Err(SpaceError::InvalidSpec { path, reason: format!("duplicate name {:?}", spec.name) });
            }
        }
        let free_bits = macro_params.iter().filter(|p| !p.fixed).count();
        if free_bits >= usize::BITS as usize {
            return Err(SpaceError::InvalidSpec { path: "macro".into(), reason: "too many free macro bits".into() });
        }
        let arch_count = 1usize << free_bits;
        for (&arch, specs) in &micro_params {
            if arch >= arch_count {
                return Err(SpaceError::InvalidSpec {
                    path: format!("micro.{arch}"),
                    reason: format!("architecture index out of range 0..{arch_count}"),
                });
            }
            let mut seen = BTreeSet::new();
            for (i, spec) in specs.iter().enumerate() {
                let path = format!("micro.{arch}[{i}]");
                spec.check_declaration(&path)?;
                if !seen.insert(spec.name.as_str()) {
                    return Err(SpaceError::InvalidSpec { path, reason: format!("duplicate name {:?}", spec.name) });
                }
            }
        }
        for arch in 0..arch_count {
            micro_params.entry(arch).or_default();
        }
        Ok(Self { macro_params, micro_params })
    }

    pub fn from_json_str(json: &str) -> Result<Self, SpaceError> {
        let de = &mut serde_json::Deserializer::from_str(json);
        let raw: RawSpace<T> = serde_path_to_error::deserialize(de).map_err(|e| SpaceError::Parse {
            path: e.path().to_string(),
            reason: e.inner().to_string(),
        })?;
        Self::from_raw(raw)
    }

    pub fn from_json_value(value: serde_json::Value) -> Result<Self, SpaceError> {
        let raw: RawSpace<T> = serde_path_to_error::deserialize(value).map_err(|e| SpaceError::Parse {
            path: e.path().to_string(),
            reason: e.inner().to_string(),
        })?;
        Self::from_raw(raw)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SpaceError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| SpaceError::Io { path: path.display().to_string(), source: e })?;
        Self::from_json_str(&text)
    }

    fn from_raw(raw: RawSpace<T>) -> Result<Self, SpaceError> {
        let mut micro = BTreeMap::new();
        for (key, specs) in raw.micro {
            let arch: usize = key.parse().map_err(|_| SpaceError::Parse {
                path: format!("micro.{key}"),
                reason: "architecture keys must be non-negative integers".into(),
            })?;
            micro.insert(arch, specs);
        }
        Self::new(raw.macro_params, micro)
    }

    pub fn macro_params(&self) -> &[ParamSpec<T>] {
        &self.macro_params
    }

    /// Micro parameters of an architecture, in declaration order.
    pub fn micro_params(&self, arch: usize) -> &[ParamSpec<T>] {
        self.micro_params.get(&arch).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn free_bit_count(&self) -> usize {
        self.macro_params.iter().filter(|p| !p.fixed).count()
    }

    pub fn arch_count(&self) -> usize {
        1 << self.free_bit_count()
    }

    pub fn archs(&self) -> impl Iterator<Item = usize> {
        0..self.arch_count()
    }

    pub fn arch_index_of(&self, bits: &MacroVector) -> Result<usize, SpaceError> {
        effective_arch_index(&bits.0, &self.macro_params)
    }

    pub fn initial_micro(&self, arch: usize) -> BTreeMap<String, T> {
        self.micro_params(arch).iter().map(|p| (p.name.clone(), p.initial)).collect()
    }

    pub fn initial_candidate(&self) -> Candidate<T> {
        let macro_vector = MacroVector(self.macro_params.iter().map(|p| p.initial == T::one()).collect());
        let arch_index = self.arch_index_of(&macro_vector).expect("initial macro vector respects fixed bits");
        Candidate { micro_values: self.initial_micro(arch_index), macro_vector, arch_index, iteration: 0 }
    }

    pub fn validate_candidate(&self, cand: &Candidate<T>) -> Result<(), SpaceError> {
        let decoded = self.arch_index_of(&cand.macro_vector)?;
        if decoded != cand.arch_index {
            return Err(SpaceError::ArchMismatch { recorded: cand.arch_index, decoded });
        }
        let specs = self.micro_params(decoded);
        for name in cand.micro_values.keys() {
            if !specs.iter().any(|p| &p.name == name) {
                return Err(SpaceError::UnknownParam { name: name.clone(), arch: decoded });
            }
        }
        for spec in specs {
            let value = *cand
                .micro_values
                .get(&spec.name)
                .ok_or_else(|| SpaceError::MissingParam { name: spec.name.clone(), arch: decoded })?;
            spec.check_value(value)?;
        }
        Ok(())
    }
}

impl<T: Real> Serialize for SearchSpace<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        #[serde(bound = "T: Real")]
        struct Out<'a, T> {
            #[serde(rename = "macro")]
            macro_params: &'a [ParamSpec<T>],
            micro: BTreeMap<String, &'a [ParamSpec<T>]>,
        }
        Out {
            macro_params: &self.macro_params,
            micro: self.micro_params.iter().map(|(k, v)| (k.to_string(), v.as_slice())).collect(),
        }
        .serialize(serializer)
    }
}

impl<'de, T: Real> Deserialize<'de> for SearchSpace<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = RawSpace::<T>::deserialize(deserializer)?;
        Self::from_raw(raw).map_err(serde::de::Error::custom)
    }
}

/// Free-function form of [`SearchSpace::validate_candidate`].
pub fn validate_candidate<T: Real>(space: &SearchSpace<T>, cand: &Candidate<T>) -> Result<(), SpaceError> {
    space.validate_candidate(cand)
}
