//! Protocol server that scores requests on a synthetic landscape.
//!
//! Usage: `hhnas-loopback <landscape.json> [--mode MODE]`
//!
//! Modes other than `echo` misbehave on purpose, to exercise the engine's
//! error handling: `wrong-id`, `malformed`, `silent`, `exit`, `error`.

use std::io::{self, BufRead, Write};
use std::process::ExitCode;

use hhnas_core::evaluators::protocol::{self, Request, Response};
use hhnas_core::evaluators::SyntheticLandscape;

#[derive(Clone, Copy, PartialEq)]
enum Mode {
    Echo,
    WrongId,
    Malformed,
    Silent,
    Exit,
    Error,
}

fn parse_args() -> Result<(String, Mode), String> {
    let mut args = std::env::args().skip(1);
    let mut path = None;
    let mut mode = Mode::Echo;
    while let Some(arg) = args.next() {
        if arg == "--mode" {
            mode = match args.next().as_deref() {
                Some("echo") => Mode::Echo,
                Some("wrong-id") => Mode::WrongId,
                Some("malformed") => Mode::Malformed,
                Some("silent") => Mode::Silent,
                Some("exit") => Mode::Exit,
                Some("error") => Mode::Error,
                other => return Err(format!("unknown mode {other:?}")),
            };
        } else {
            path = Some(arg);
        }
    }
    Ok((path.ok_or("usage: hhnas-loopback <landscape.json> [--mode MODE]")?, mode))
}

fn main() -> ExitCode {
    let (path, mode) = match parse_args() {
        Ok(v) => v,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    let landscape = match SyntheticLandscape::<f64>::load(&path) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    let stdin = io::stdin();
    let stdout = io::stdout();
    let score = |req: &Request| -> Result<Response, String> {
        let result = landscape.evaluate(&req.to_candidate::<f64>(), None).map_err(|e| e.to_string())?;
        Ok(Response { id: req.id, reward: result.reward, metrics: None })
    };

    if mode == Mode::Echo || mode == Mode::Error {
        let res = protocol::serve(stdin.lock(), stdout.lock(), |req| {
            if mode == Mode::Error {
                return Err("evaluation failed".into());
            }
            score(req)
        });
        return if res.is_ok() { ExitCode::SUCCESS } else { ExitCode::FAILURE };
    }

    // Misbehaving modes: correct handshake, then a broken first response.
    let mut out = stdout.lock();
    let mut lines = stdin.lock().lines();
    if lines.next().is_none() {
        return ExitCode::SUCCESS;
    }
    let _ = writeln!(out, r#"{{"ready":{{"protocol":{}}}}}"#, protocol::PROTOCOL_VERSION);
    let _ = out.flush();
    for line in lines {
        let Ok(line) = line else { break };
        let Ok(req) = serde_json::from_str::<Request>(&line) else { continue };
        match mode {
            Mode::WrongId => {
                let mut resp = score(&req).unwrap_or(Response { id: 0, reward: 0.0, metrics: None });
                resp.id = req.id + 1;
                let _ = writeln!(out, "{}", serde_json::to_string(&resp).unwrap());
            }
            Mode::Malformed => {
                let _ = writeln!(out, "{{\"id\":{},\"reward\":", req.id);
            }
            Mode::Silent => {
                std::thread::sleep(std::time::Duration::from_secs(30));
            }
            Mode::Exit => return ExitCode::from(7),
            Mode::Echo | Mode::Error => unreachable!(),
        }
        let _ = out.flush();
    }
    ExitCode::SUCCESS
}
