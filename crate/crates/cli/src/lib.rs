//! Experiment runner: TOML scenarios in, CSV tables and a JSON summary out.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod battery;
pub mod config;
pub mod error;
pub mod run;

use std::path::{Path, PathBuf};

pub use config::ScenarioConfig;
pub use error::CliError;
pub use run::{execute, Outcome};

/// Writes every table and file, then `summary.json` last.
pub fn write_outputs(out: &Path, outcome: &Outcome, seed: u64) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(out)?;
    let mut written = Vec::new();
    for t in &outcome.tables {
        let p = out.join(&t.file);
        std::fs::write(&p, t.to_csv()?)?;
        written.push(p);
    }
    for (name, text) in &outcome.files {
        let p = out.join(name);
        std::fs::write(&p, text)?;
        written.push(p);
    }
    let summary = serde_json::to_string_pretty(&outcome.summary(seed)).map_err(|e| CliError::Numerical(e.to_string()))?;
    let p = out.join("summary.json");
    std::fs::write(&p, summary + "\n")?;
    written.push(p);
    Ok(written)
}

/// Loads, validates and runs a configuration on a pool of `threads`
/// workers (all cores when None), writing outputs to `out` or the
/// configured directory.
pub fn run_config(path: &Path, out: Option<&Path>, seed: Option<u64>, threads: Option<usize>) -> Result<Outcome, CliError> {
    let mut cfg = ScenarioConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(cfg.experiment.name()));
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = threads {
        if k == 0 {
            return Err(CliError::Validation("--threads must be positive".into()));
        }
        builder = builder.num_threads(k);
    }
    let pool = builder.build().map_err(|e| CliError::Numerical(e.to_string()))?;
    let outcome = pool.install(|| execute(&cfg));
    let outcome = match outcome {
        Ok(o) => o,
        Err(e) => {
            let _ = std::fs::create_dir_all(&dir).and_then(|_| std::fs::write(dir.join("error.json"), e.to_json() + "\n"));
            return Err(e);
        }
    };
    write_outputs(&dir, &outcome, cfg.seed)?;
    Ok(outcome)
}
