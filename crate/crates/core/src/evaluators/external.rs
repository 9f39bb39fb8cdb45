use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::protocol::{self, Request};
use super::{EvalResult, Evaluator, EvaluatorInfo, Source};
use crate::error::EvalError;
use crate::scalar::Real;
use crate::space::Candidate;

fn default_timeout() -> f64 {
    600.0
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalConfig {
    /// Program and arguments.
    pub command: Vec<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    /// Extra environment variables for the child.
    #[serde(default)]
    pub env: BTreeMap<String, String>,
    /// Pass the engine's own environment through.
    #[serde(default = "default_true")]
    pub inherit_env: bool,
}

impl ExternalConfig {
    pub fn new(command: Vec<String>) -> Self {
        Self { command, timeout_secs: default_timeout(), env: BTreeMap::new(), inherit_env: true }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs.max(0.0))
    }
}

/// Evaluator backed by a child process speaking [`protocol`].
pub struct ExternalEvaluator {
    cfg: ExternalConfig,
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    next_id: u64,
    /// Set after a timeout or protocol failure; the stream can no longer be
    /// trusted to stay in step.
    poisoned: Option<String>,
}

impl ExternalEvaluator {
    /// Spawns the child and completes the handshake.
    pub fn spawn(cfg: ExternalConfig) -> Result<Self, EvalError> {
        let (program, args) = cfg
            .command
            .split_first()
            .ok_or_else(|| EvalError::Other("external evaluator command is empty".into()))?;
        let mut cmd = Command::new(program);
        cmd.args(args).stdin(Stdio::piped()).stdout(Stdio::piped()).stderr(Stdio::inherit());
        if !cfg.inherit_env {
            cmd.env_clear();
        }
        cmd.envs(&cfg.env);
        let mut child = cmd.spawn().map_err(|source| EvalError::Spawn { command: cfg.command.clone(), source })?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().expect("stdout piped");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        let mut ev = Self { cfg, child, stdin, lines: rx, next_id: 1, poisoned: None };
        ev.send_line(&protocol::hello_line())?;
        let line = ev.recv_line(0)?;
        protocol::parse_ready(&line)?;
        Ok(ev)
    }

    fn send_line(&mut self, line: &str) -> Result<(), EvalError> {
        let stdin = self.stdin.as_mut().ok_or_else(|| EvalError::Other("evaluator stdin closed".into()))?;
        let res = writeln!(stdin, "{line}").and_then(|_| stdin.flush());
        if let Err(e) = res {
            return Err(match self.child.try_wait() {
                Ok(Some(status)) => EvalError::ChildExited { status: status.to_string(), payload: line.to_string() },
                _ => EvalError::Io(e),
            });
        }
        Ok(())
    }

    fn recv_line(&mut self, id: u64) -> Result<String, EvalError> {
        match self.lines.recv_timeout(self.cfg.timeout()) {
            Ok(Ok(line)) => Ok(line),
            Ok(Err(e)) => Err(EvalError::Io(e)),
            Err(RecvTimeoutError::Timeout) => {
                self.poisoned = Some(format!("timed out waiting for request {id}"));
                Err(EvalError::Timeout { id, timeout_ms: self.cfg.timeout().as_millis() })
            }
            Err(RecvTimeoutError::Disconnected) => {
                let status = match self.child.wait() {
                    Ok(s) => s.to_string(),
                    Err(e) => format!("unknown ({e})"),
                };
                self.poisoned = Some("child exited".into());
                Err(EvalError::ChildExited { status, payload: format!("<eof while waiting for request {id}>") })
            }
        }
    }

    pub fn next_request_id(&self) -> u64 {
        self.next_id
    }
}

impl<T: Real> Evaluator<T> for ExternalEvaluator {
    fn evaluate(&mut self, cand: &Candidate<T>) -> Result<EvalResult<T>, EvalError> {
        if let Some(why) = &self.poisoned {
            return Err(EvalError::Other(format!("evaluator connection unusable: {why}")));
        }
        let id = self.next_id;
        self.next_id += 1;
        let request = serde_json::to_string(&Request::from_candidate(id, cand)).expect("request serializes");
        self.send_line(&request)?;
        let line = self.recv_line(id)?;
        let response = protocol::parse_response(id, &line).inspect_err(|_| {
            self.poisoned = Some("protocol error".into());
        })?;
        Ok(EvalResult { reward: T::lit(response.reward), metrics: response.metrics.unwrap_or_default(), source: Source::External })
    }

    fn describe(&self) -> EvaluatorInfo {
        let mut details = BTreeMap::new();
        details.insert("command".into(), self.cfg.command.join(" "));
        details.insert("timeout_secs".into(), self.cfg.timeout_secs.to_string());
        EvaluatorInfo { name: "external".into(), details }
    }
}

impl Drop for ExternalEvaluator {
    fn drop(&mut self) {
        // Closing stdin lets a well-behaved child exit on its own.
        drop(self.stdin.take());
        for _ in 0..20 {
            if let Ok(Some(_)) = self.child.try_wait() {
                return;
            }
            thread::sleep(Duration::from_millis(5));
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
