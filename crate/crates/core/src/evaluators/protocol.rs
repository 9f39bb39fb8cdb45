//! Line-delimited JSON protocol spoken with external evaluator processes.
//!
//! ```text
//! engine -> child   {"hello":{"protocol":1}}
//! child  -> engine  {"ready":{"protocol":1}}
//! engine -> child   {"id":1,"arch_index":2,"macro":[1,1,0],"params":{"lr":0.01}}
//! child  -> engine  {"id":1,"reward":0.83,"metrics":{"loss":0.41}}
//! ```
//!
//! One request is in flight at a time. A response carrying `"error"` instead
//! of `"reward"` is reported as a protocol error.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::EvalError;
use crate::scalar::Real;
use crate::space::{Candidate, MacroVector};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Version {
    pub protocol: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hello {
    pub hello: Version,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ready {
    pub ready: Version,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    pub arch_index: u32,
    #[serde(rename = "macro")]
    pub macro_bits: Vec<u8>,
    pub params: BTreeMap<String, f64>,
}

impl Request {
    pub fn from_candidate<T: Real>(id: u64, cand: &Candidate<T>) -> Self {
        Self {
            id,
            arch_index: cand.arch_index as u32,
            macro_bits: cand.macro_vector.bits(),
            params: cand.micro_values.iter().map(|(k, v)| (k.clone(), v.as_f64())).collect(),
        }
    }

    /// Rebuilds the candidate on the evaluator side.
    pub fn to_candidate<T: Real>(&self) -> Candidate<T> {
        Candidate {
            macro_vector: MacroVector::from_bits(&self.macro_bits),
            arch_index: self.arch_index as usize,
            micro_values: self.params.iter().map(|(k, &v)| (k.clone(), T::lit(v))).collect(),
            iteration: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub id: u64,
    pub reward: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<BTreeMap<String, f64>>,
}

fn protocol_error(reason: impl Into<String>, payload: &str) -> EvalError {
    EvalError::Protocol { reason: reason.into(), payload: payload.to_string() }
}

pub fn hello_line() -> String {
    serde_json::to_string(&Hello { hello: Version { protocol: PROTOCOL_VERSION } }).expect("serializable")
}

pub fn parse_ready(line: &str) -> Result<(), EvalError> {
    let ready: Ready = serde_json::from_str(line).map_err(|e| protocol_error(format!("expected ready: {e}"), line))?;
    if ready.ready.protocol != PROTOCOL_VERSION {
        return Err(protocol_error(
            format!("evaluator speaks protocol {}, engine speaks {PROTOCOL_VERSION}", ready.ready.protocol),
            line,
        ));
    }
    Ok(())
}

/// Parses one response line and checks it answers request `expected_id`.
pub fn parse_response(expected_id: u64, line: &str) -> Result<Response, EvalError> {
    let value: Value = serde_json::from_str(line).map_err(|e| protocol_error(format!("malformed JSON: {e}"), line))?;
    if let Some(err) = value.get("error") {
        return Err(protocol_error(format!("evaluator reported error: {err}"), line));
    }
    let response: Response =
        serde_json::from_value(value).map_err(|e| protocol_error(format!("malformed response: {e}"), line))?;
    if response.id != expected_id {
        return Err(protocol_error(format!("response id {} does not match request {expected_id}", response.id), line));
    }
    if !response.reward.is_finite() {
        return Err(protocol_error("reward is not finite", line));
    }
    Ok(response)
}

/// Evaluator-side loop: answers the handshake, then one response per
/// request until the input closes. Handler errors are sent as
/// `{"id": .., "error": ..}` and the loop continues.
pub fn serve<R, W, F>(reader: R, mut writer: W, mut handler: F) -> io::Result<()>
where
    R: BufRead,
    W: Write,
    F: FnMut(&Request) -> Result<Response, String>,
{
    let mut lines = reader.lines();
    let Some(first) = lines.next() else { return Ok(()) };
    let first = first?;
    match serde_json::from_str::<Hello>(&first) {
        Ok(h) if h.hello.protocol == PROTOCOL_VERSION => {}
        _ => {
            writeln!(writer, "{}", serde_json::json!({"id": null, "error": format!("bad handshake: {first}")}))?;
            writer.flush()?;
            return Ok(());
        }
    }
    writeln!(writer, "{}", serde_json::to_string(&Ready { ready: Version { protocol: PROTOCOL_VERSION } })?)?;
    writer.flush()?;
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let out = match serde_json::from_str::<Request>(&line) {
            Ok(req) => match handler(&req) {
                Ok(resp) => serde_json::to_string(&resp)?,
                Err(msg) => serde_json::json!({"id": req.id, "error": msg}).to_string(),
            },
            Err(e) => serde_json::json!({"id": null, "error": format!("malformed request: {e}")}).to_string(),
        };
        writeln!(writer, "{out}")?;
        writer.flush()?;
    }
    Ok(())
}
