//! Config-driven experiment runner for `qhist-core`.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod random;

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

pub use config::{ExperimentConfig, KINDS};
pub use error::CliError;
pub use experiments::Plan;
pub use output::Report;

/// Files written by a run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub files: Vec<String>,
    pub elapsed: Duration,
}

/// Parses and validates a config without computing anything.
pub fn prepare(path: &Path, out: Option<&Path>) -> Result<(ExperimentConfig, Plan), CliError> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(dir) = out {
        cfg.common.output_dir = dir.to_path_buf();
    }
    let plan = Plan::build(&cfg)?;
    Ok((cfg, plan))
}

/// Runs a validated plan on the configured number of workers and renders its
/// outputs in memory. Exceeding `limits.max_seconds` discards everything.
pub fn compute(cfg: &ExperimentConfig, plan: &Plan) -> Result<(Report, Vec<(String, String)>, Duration), CliError> {
    let c = &cfg.common;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(c.workers)
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let start = Instant::now();
    let mut report = pool.install(|| plan.execute(c))?;
    let elapsed = start.elapsed();
    if elapsed.as_secs_f64() > c.limits.max_seconds {
        return Err(CliError::Cap(format!(
            "run took {:.1} s, limit is {} s",
            elapsed.as_secs_f64(),
            c.limits.max_seconds
        )));
    }
    report.meta("workers", c.workers);
    report.meta("size_cap_limit", c.limits.size_cap);
    let files = report.render(c)?;
    Ok((report, files, elapsed))
}

pub fn run(path: &Path, out: Option<&Path>) -> Result<RunOutcome, CliError> {
    let (cfg, plan) = prepare(path, out)?;
    let (_, files, elapsed) = compute(&cfg, &plan)?;
    output::write_all(&cfg.common.output_dir, &files)?;
    Ok(RunOutcome {
        dir: cfg.common.output_dir.clone(),
        files: files.into_iter().map(|(n, _)| n).collect(),
        elapsed,
    })
}

pub fn list_experiments() -> String {
    let width = KINDS.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    KINDS.iter().map(|(k, d)| format!("{k:width$}  {d}\n")).collect()
}
