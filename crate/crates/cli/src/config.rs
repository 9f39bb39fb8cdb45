//! Run configuration file: search space, engine settings, evaluator choice,
//! output directory and optional bench settings.
//!
//! `space` and `evaluator.synthetic` accept either an inline object or a
//! path relative to the config file.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use hhnas_core::bench::BenchConfig;
use hhnas_core::evaluators::{ExternalConfig, SyntheticLandscape};
use hhnas_core::{EngineConfig, SearchSpace};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum EvaluatorConfig {
    Synthetic(SyntheticLandscape<f64>),
    External(ExternalConfig),
}

/// Fully resolved configuration, as stored in a run directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub space: SearchSpace<f64>,
    #[serde(default)]
    pub engine: EngineConfig,
    pub evaluator: EvaluatorConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bench: Option<BenchConfig>,
}

fn parse<T: DeserializeOwned>(value: Value, prefix: &str) -> Result<T, CliError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let key = match (prefix.is_empty(), path.as_str()) {
            (true, _) => path.clone(),
            (false, ".") => prefix.to_string(),
            (false, p) => format!("{prefix}.{p}"),
        };
        CliError::Config(format!("`{key}`: {}", e.inner()))
    })
}

fn read_json(path: &Path, key: &str) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("`{key}`: cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("`{key}`: {} is not valid JSON: {e}", path.display())))
}

/// Replaces a path string with the JSON it points to.
fn inline(value: &mut Value, base: &Path, key: &str) -> Result<(), CliError> {
    if let Value::String(rel) = value {
        *value = read_json(&base.join(&*rel), key)?;
    }
    Ok(())
}

/// Sets `a.b.c = raw`, where `raw` is parsed as JSON when possible and taken
/// as a string otherwise.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{assignment}` is not of the form key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(CliError::Config(format!("override `{assignment}` has an empty key segment")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    for segment in key.split('.') {
        if !node.is_object() {
            return Err(CliError::Config(format!("override `{key}`: `{segment}` is not inside an object")));
        }
        node = node.as_object_mut().expect("checked").entry(segment).or_insert_with(|| Value::Object(Default::default()));
    }
    *node = value;
    Ok(())
}

impl RunConfig {
    /// Reads a config file, applies `key=value` overrides and validates the
    /// result before any work starts.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let mut root = read_json(path, "config")?;
        if !root.is_object() {
            return Err(CliError::Config(format!("{} must contain a JSON object", path.display())));
        }
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(space) = root.get_mut("space") {
            inline(space, base, "space")?;
        }
        if let Some(land) = root.get_mut("evaluator").and_then(|ev| ev.get_mut("synthetic")) {
            inline(land, base, "evaluator.synthetic")?;
        }
        for o in overrides {
            apply_override(&mut root, o)?;
        }
        if let Some(Value::Object(ev)) = root.get("evaluator") {
            if ev.len() != 1 {
                let keys: Vec<_> = ev.keys().cloned().collect();
                return Err(CliError::Config(format!("`evaluator` must select exactly one of synthetic/external, found {keys:?}")));
            }
        }
        let mut cfg: RunConfig = parse(root, "")?;
        if let Some(dir) = &cfg.output_dir {
            if dir.is_relative() {
                cfg.output_dir = Some(base.join(dir));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads the resolved config saved in a run directory.
    pub fn load_resolved(path: &Path) -> Result<Self, CliError> {
        let cfg: RunConfig = parse(read_json(path, "config")?, "")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.engine.validate().map_err(|e| CliError::Config(e.to_string()))?;
        match &self.evaluator {
            EvaluatorConfig::Synthetic(land) => land.check_against(&self.space).map_err(|e| CliError::Config(format!("`evaluator.synthetic`: {e}")))?,
            EvaluatorConfig::External(ext) => {
                if ext.command.is_empty() {
                    return Err(CliError::Config("`evaluator.external.command` is empty".into()));
                }
                if ext.timeout_secs.is_nan() || ext.timeout_secs <= 0.0 {
                    return Err(CliError::Config("`evaluator.external.timeout_secs` must be positive".into()));
                }
            }
        }
        if let Some(bench) = &self.bench {
            bench.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(())
    }
}
