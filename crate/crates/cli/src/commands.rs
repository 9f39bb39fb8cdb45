use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::json;

use hhnas_core::bench::compare_policies;
use hhnas_core::engine::config_digest;
use hhnas_core::evaluators::{ExternalEvaluator, SyntheticEvaluator};
use hhnas_core::output::{self, write_record};
use hhnas_core::{Engine, EvalError, Evaluator, IterationRecord, RunResult};

use crate::config::{EvaluatorConfig, RunConfig};
use crate::error::CliError;

pub const OUT_DIR_ENV: &str = "HHNAS_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "runs";

pub struct Common {
    pub config: PathBuf,
    pub overrides: Vec<String>,
    pub out: Option<PathBuf>,
    pub quiet: bool,
}

fn build_evaluator(cfg: &EvaluatorConfig, seed_offset: u64) -> Result<Box<dyn Evaluator<f64>>, EvalError> {
    Ok(match cfg {
        EvaluatorConfig::Synthetic(land) => {
            let mut land = land.clone();
            land.noise_seed = land.noise_seed.wrapping_add(seed_offset);
            Box::new(SyntheticEvaluator::new(land))
        }
        EvaluatorConfig::External(ext) => Box::new(ExternalEvaluator::spawn(ext.clone())?),
    })
}

fn out_root(flag: Option<PathBuf>, cfg: &RunConfig) -> PathBuf {
    flag.or_else(|| cfg.output_dir.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

/// Creates `<root>/<timestamp>-<label>`, adding a counter on collision.
fn create_run_dir(root: &Path, label: &str) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(root).map_err(|e| CliError::Config(format!("cannot create output directory {}: {e}", root.display())))?;
    let stamp = chrono::Utc::now().format("%Y%m%d-%H%M%S");
    let base = format!("{stamp}-{label}");
    for n in 1.. {
        let name = if n == 1 { base.clone() } else { format!("{base}-{n}") };
        let dir = root.join(name);
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e.into()),
        }
    }
    unreachable!()
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Internal(e.to_string()))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn write_manifest(dir: &Path, command: &str, cfg: &RunConfig, evaluator: Option<&dyn Evaluator<f64>>) -> Result<(), CliError> {
    let manifest = json!({
        "tool": "hhnas",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "created": chrono::Utc::now().to_rfc3339(),
        "config_digest": config_digest(&cfg.engine, &cfg.space),
        "seed": cfg.engine.seed,
        "evaluator": evaluator.map(|e| e.describe()),
    });
    write_json(&dir.join(output::MANIFEST_FILE), &manifest)
}

fn progress(rec: &IterationRecord<f64>, best: f64) {
    eprintln!(
        "iter {:>4}  reward {:.6}  best {:.6}  arch {}  mutated {}",
        rec.iteration,
        rec.reward,
        best,
        rec.candidate.arch_index,
        rec.mutation_record.len()
    );
}

/// Drives the engine to completion, appending every record to the log.
fn drive(engine: &mut Engine<f64>, evaluator: &mut dyn Evaluator<f64>, dir: &Path, quiet: bool) -> Result<RunResult<f64>, CliError> {
    let log = OpenOptions::new().create(true).append(true).open(dir.join(output::TRAJECTORY_FILE))?;
    let mut log = BufWriter::new(log);
    let mut best = engine.history().iter().map(|r| r.reward).fold(f64::NEG_INFINITY, f64::max);
    let outcome = engine.run(evaluator, |rec| {
        write_record(&mut log, rec)?;
        log.flush()?;
        best = best.max(rec.reward);
        if !quiet {
            progress(rec, best);
        }
        Ok(())
    });
    log.flush()?;
    let result = match outcome {
        Ok(r) => r,
        Err(e) => {
            let err = CliError::from(e);
            if matches!(err, CliError::Evaluator(_)) {
                eprintln!("checkpoint kept; continue with: hhnas resume {}", dir.display());
            }
            return Err(err);
        }
    };
    output::write_summary(&dir.join(output::SUMMARY_FILE), &result)?;
    output::write_trajectory_csv(&dir.join(output::TRAJECTORY_CSV), &result.history)?;
    Ok(result)
}

fn print_best(result: &RunResult<f64>, dir: &Path) {
    let c = &result.best_candidate;
    println!("best reward {} at iteration {} (architecture {}, macro {})", result.best_reward, c.iteration, c.arch_index, c.macro_vector);
    for (name, value) in &c.micro_values {
        println!("  {name} = {value}");
    }
    println!("run directory: {}", dir.display());
}

pub fn run(common: Common, seed: Option<u64>) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(&common.config, &common.overrides)?;
    if let Some(seed) = seed {
        cfg.engine.seed = seed;
    }
    let root = out_root(common.out, &cfg);
    let mut engine = Engine::new(cfg.space.clone(), cfg.engine.clone())?;
    let mut evaluator = build_evaluator(&cfg.evaluator, 0).map_err(|e| CliError::Evaluator(e.to_string()))?;
    let dir = create_run_dir(&root, &format!("seed{}", cfg.engine.seed))?;
    write_json(&dir.join(output::CONFIG_FILE), &cfg)?;
    write_manifest(&dir, "run", &cfg, Some(evaluator.as_ref()))?;
    engine = engine.with_checkpoint_path(dir.join(output::CHECKPOINT_FILE));
    let result = drive(&mut engine, evaluator.as_mut(), &dir, common.quiet)?;
    print_best(&result, &dir);
    Ok(())
}

/// Accepts a run directory or the checkpoint file inside one.
pub fn resume(path: &Path, quiet: bool) -> Result<(), CliError> {
    let (dir, ckpt) = if path.is_dir() {
        (path.to_path_buf(), path.join(output::CHECKPOINT_FILE))
    } else {
        (path.parent().unwrap_or(Path::new(".")).to_path_buf(), path.to_path_buf())
    };
    if !ckpt.is_file() {
        return Err(CliError::Config(format!("no checkpoint at {}", ckpt.display())));
    }
    let mut engine = Engine::<f64>::load_checkpoint(&ckpt)?;
    if engine.is_complete() {
        println!("already complete: {} of {} iterations in {}", engine.iteration(), engine.config().iterations, dir.display());
        return Ok(());
    }
    let cfg = RunConfig::load_resolved(&dir.join(output::CONFIG_FILE))?;
    if config_digest(&cfg.engine, &cfg.space) != engine.config_digest() {
        return Err(CliError::Config(format!("{} does not match the checkpoint's configuration", dir.join(output::CONFIG_FILE).display())));
    }
    // The log may hold records past the checkpoint; rebuild it from the
    // checkpoint's own history before continuing.
    output::write_trajectory(&dir.join(output::TRAJECTORY_FILE), engine.history())?;
    let mut evaluator = build_evaluator(&cfg.evaluator, 0).map_err(|e| CliError::Evaluator(e.to_string()))?;
    if !quiet {
        eprintln!("resuming at iteration {} of {}", engine.iteration(), engine.config().iterations);
    }
    let result = drive(&mut engine, evaluator.as_mut(), &dir, quiet)?;
    print_best(&result, &dir);
    Ok(())
}

pub fn bench(common: Common) -> Result<(), CliError> {
    let cfg = RunConfig::load(&common.config, &common.overrides)?;
    let bench = cfg.bench.clone().ok_or_else(|| CliError::Config("`bench` section missing from config".into()))?;
    let root = out_root(common.out, &cfg);
    let dir = create_run_dir(&root, "bench")?;
    write_json(&dir.join(output::CONFIG_FILE), &cfg)?;
    write_manifest(&dir, "bench", &cfg, None)?;
    if !common.quiet {
        eprintln!("running {} policies x {} seeds, {} iterations each", bench.policies.len(), bench.seeds.len(), cfg.engine.iterations);
    }
    let factory = |seed: u64| build_evaluator(&cfg.evaluator, seed);
    let report = compare_policies(&cfg.space, factory, &cfg.engine, &bench)?;
    output::write_bench_csv(&dir.join("bench.csv"), &report)?;
    write_json(&dir.join("bench.json"), &report)?;
    let table = report.render();
    std::fs::write(dir.join("bench.txt"), &table)?;
    print!("{table}");
    println!("bench directory: {}", dir.display());
    if report.policies.iter().all(|p| p.failures.len() == p.seeds.len()) {
        return Err(CliError::Evaluator("every bench cell failed".into()));
    }
    Ok(())
}

pub fn report(dir: &Path, quiet: bool) -> Result<(), CliError> {
    let log = dir.join(output::TRAJECTORY_FILE);
    if !log.is_file() {
        return Err(CliError::Config(format!("no {} in {}", output::TRAJECTORY_FILE, dir.display())));
    }
    let history = output::read_trajectory::<f64>(&log).map_err(|e| CliError::Config(e.to_string()))?;
    if history.is_empty() {
        return Err(CliError::Config(format!("{} is empty", log.display())));
    }
    let arch_count = match RunConfig::load_resolved(&dir.join(output::CONFIG_FILE)) {
        Ok(cfg) => cfg.space.arch_count(),
        Err(_) => history.iter().map(|r| r.candidate.arch_index + 1).max().unwrap_or(0),
    };
    let outcome = output::write_report(&history, arch_count, &dir.join(output::REPORT_DIR))?;
    if !quiet {
        for path in &outcome.written {
            println!("wrote {}", path.display());
        }
    }
    for arch in &outcome.unvisited {
        println!("architecture {arch} was never visited; no arch_{arch}.csv written");
    }
    Ok(())
}
