//! Run-directory artifacts: trajectory log, summary, plot-ready CSVs.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::bench::BenchReport;
use crate::engine::{IterationRecord, RunResult};
use crate::scalar::Real;

pub const TRAJECTORY_FILE: &str = "trajectory.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const TRAJECTORY_CSV: &str = "trajectory.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.json";
pub const REPORT_DIR: &str = "report";

fn invalid_data(msg: String) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg)
}

/// Writes one JSON object line.
pub fn write_record<T: Real>(w: &mut impl Write, record: &IterationRecord<T>) -> io::Result<()> {
    serde_json::to_writer(&mut *w, record)?;
    w.write_all(b"\n")
}

pub fn write_trajectory<T: Real>(path: &Path, history: &[IterationRecord<T>]) -> io::Result<()> {
    let mut w = io::BufWriter::new(File::create(path)?);
    for rec in history {
        write_record(&mut w, rec)?;
    }
    w.flush()
}

pub fn read_trajectory<T: Real>(path: &Path) -> io::Result<Vec<IterationRecord<T>>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| invalid_data(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_summary<T: Real>(path: &Path, result: &RunResult<T>) -> io::Result<()> {
    let mut w = io::BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, result)?;
    w.write_all(b"\n")?;
    w.flush()
}

pub fn read_summary<T: Real>(path: &Path) -> io::Result<RunResult<T>> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| invalid_data(format!("{}: {e}", path.display())))
}

/// `iteration,reward,best_so_far,arch_index` per iteration.
pub fn write_trajectory_csv<T: Real>(path: &Path, history: &[IterationRecord<T>]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "reward", "best_so_far", "arch_index"])?;
    let mut best = f64::NEG_INFINITY;
    for rec in history {
        let r = rec.reward.as_f64();
        best = best.max(r);
        w.write_record([rec.iteration.to_string(), r.to_string(), best.to_string(), rec.candidate.arch_index.to_string()])?;
    }
    w.flush()
}

#[derive(Debug, Default, PartialEq)]
pub struct ReportOutcome {
    pub written: Vec<PathBuf>,
    /// Architectures of the space that the run never evaluated.
    pub unvisited: Vec<usize>,
}

/// Per-architecture reward trends (`report/arch_<k>.csv`, one row per
/// visit) and mutation-probability trajectories
/// (`report/mutation_probs.csv`).
pub fn write_report<T: Real>(history: &[IterationRecord<T>], arch_count: usize, out_dir: &Path) -> io::Result<ReportOutcome> {
    std::fs::create_dir_all(out_dir)?;
    let mut outcome = ReportOutcome::default();
    for arch in 0..arch_count {
        let visits: Vec<_> = history.iter().filter(|r| r.candidate.arch_index == arch).collect();
        if visits.is_empty() {
            outcome.unvisited.push(arch);
            continue;
        }
        let path = out_dir.join(format!("arch_{arch}.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["iteration", "reward", "arch_best_so_far", "accepted"])?;
        let mut best = f64::NEG_INFINITY;
        for rec in visits {
            let r = rec.reward.as_f64();
            best = best.max(r);
            w.write_record([rec.iteration.to_string(), r.to_string(), best.to_string(), rec.accepted.to_string()])?;
        }
        w.flush()?;
        outcome.written.push(path);
    }

    let features: BTreeSet<_> = history.iter().flat_map(|r| r.mutation_probs.keys().cloned()).collect();
    let path = out_dir.join("mutation_probs.csv");
    let mut w = csv::Writer::from_path(&path)?;
    let mut header = vec!["iteration".to_string()];
    header.extend(features.iter().map(|f| f.to_string()));
    w.write_record(&header)?;
    for rec in history {
        let mut row = vec![rec.iteration.to_string()];
        row.extend(features.iter().map(|f| rec.mutation_probs.get(f).map_or(String::new(), |p| p.to_string())));
        w.write_record(&row)?;
    }
    w.flush()?;
    outcome.written.push(path);
    Ok(outcome)
}

/// One row per (policy, iteration) with the best-so-far spread, plus the
/// iterations-to-threshold columns repeated per policy.
pub fn write_bench_csv(path: &Path, report: &BenchReport) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["policy", "iteration", "best_median", "best_q1", "best_q3", "iters_to_threshold_median", "iters_to_threshold_iqr"])?;
    for p in &report.policies {
        let (med, iqr) = match p.iterations_to_threshold_spread {
            Some(s) if s.median.is_finite() => (s.median.to_string(), if s.iqr().is_finite() { s.iqr().to_string() } else { "inf".into() }),
            _ => (format!("not reached ({})", report.iterations), String::new()),
        };
        for (i, s) in p.best_curve.iter().enumerate() {
            w.write_record([p.label.clone(), (i + 1).to_string(), s.median.to_string(), s.q1.to_string(), s.q3.to_string(), med.clone(), iqr.clone()])?;
        }
    }
    w.flush()
}
