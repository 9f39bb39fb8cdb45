use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpaceError {
    #[error("macro vector has {found} bits, space declares {expected}")]
    MacroLength { expected: usize, found: usize },
    #[error("fixed macro bit `{name}` differs from its declared value")]
    FixedBitViolation { name: String },
    #[error("candidate records arch_index {recorded} but its macro vector decodes to {decoded}")]
    ArchMismatch { recorded: usize, decoded: usize },
    #[error("parameter `{name}` is not declared for architecture {arch}")]
    UnknownParam { name: String, arch: usize },
    #[error("parameter `{name}` missing for architecture {arch}")]
    MissingParam { name: String, arch: usize },
    #[error("parameter `{name}` = {value} outside [{lower}, {upper}]")]
    OutOfBounds { name: String, value: f64, lower: f64, upper: f64 },
    #[error("parameter `{name}` = {value} must be integral")]
    NotIntegral { name: String, value: f64 },
    #[error("invalid search space at `{path}`: {reason}")]
    InvalidSpec { path: String, reason: String },
    #[error("cannot parse search space at `{path}`: {reason}")]
    Parse { path: String, reason: String },
    #[error("cannot read search space {path}: {source}")]
    Io { path: String, source: io::Error },
}

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("feature `{0}` has no Q-table entry")]
    UnknownFeature(String),
    #[error("Q-table is empty")]
    EmptyTable,
    #[error("parameter `{name}` of kind {kind} {problem}")]
    KindMismatch { name: String, kind: crate::space::ParamKind, problem: &'static str },
    #[error(transparent)]
    Space(#[from] SpaceError),
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("protocol error: {reason}; payload: {payload}")]
    Protocol { reason: String, payload: String },
    #[error("no response within {timeout_ms} ms for request {id}")]
    Timeout { id: u64, timeout_ms: u128 },
    #[error("evaluator process exited ({status}); last output: {payload}")]
    ChildExited { status: String, payload: String },
    #[error("cannot spawn evaluator {command:?}: {source}")]
    Spawn { command: Vec<String>, source: io::Error },
    #[error("evaluator I/O failure: {0}")]
    Io(#[from] io::Error),
    #[error("evaluator returned a non-finite reward {0}")]
    NonFinite(f64),
    #[error("invalid landscape: {0}")]
    Landscape(String),
    #[error("{0}")]
    Other(String),
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("evaluator failed at iteration {iteration}: {source}")]
    Evaluator { iteration: u64, source: EvalError },
    #[error("checkpoint I/O at {path}: {source}")]
    CheckpointIo { path: PathBuf, source: io::Error },
    #[error("corrupt checkpoint {path}: {reason}")]
    CorruptCheckpoint { path: PathBuf, reason: String },
    #[error("checkpoint {path} has version {found}, expected {expected}")]
    VersionMismatch { path: PathBuf, found: u32, expected: u32 },
    #[error("invalid engine configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("output I/O: {0}")]
    Io(#[from] io::Error),
}
