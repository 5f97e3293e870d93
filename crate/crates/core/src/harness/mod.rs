//! Configuration, experiment orchestration and report emission.

pub mod config;
mod experiments;
mod martingale;
pub mod report;
mod uniqueness;

pub use config::{ExperimentConfig, ExperimentKind, NumericsConfig, ProblemConfig};
pub use martingale::run_martingale_test;
pub use report::{Metadata, Recorder, Report, Status, Table, TableRef, Verdict};
pub use uniqueness::run_uniqueness_fingerprint;

use crate::error::{Error, Result};
use serde::Serialize;
use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Runs one experiment, writing its tables and `report.json` into `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Report> {
    cfg.validate()?;
    let start = Instant::now();
    let mut rec = Recorder::new(out_dir.to_path_buf())?;
    match cfg.experiment {
        ExperimentKind::Simulate => experiments::simulate(cfg, &mut rec)?,
        ExperimentKind::Density => experiments::density(cfg, &mut rec)?,
        ExperimentKind::Resolvent => experiments::resolvent(cfg, &mut rec)?,
        ExperimentKind::Generator => experiments::generator(cfg, &mut rec)?,
        ExperimentKind::Multiplier => experiments::multiplier(cfg, &mut rec)?,
        ExperimentKind::Transience => experiments::transience(cfg, &mut rec)?,
        ExperimentKind::Maximal => experiments::maximal(cfg, &mut rec)?,
        ExperimentKind::Martingale => martingale::run(cfg, &mut rec)?,
        ExperimentKind::Uniqueness => uniqueness::run(cfg, &mut rec)?,
    }
    let report = Report {
        metadata: Metadata {
            name: cfg.name(),
            experiment: cfg.experiment.subcommand().to_string(),
            config_hash: cfg.hash(),
            seed: cfg.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            threads: rayon::current_num_threads(),
            wall_time_s: start.elapsed().as_secs_f64(),
        },
        tables: rec.tables,
        verdicts: rec.verdicts,
        error: None,
    };
    report.save(&out_dir.join("report.json"))?;
    Ok(report)
}

/// Output directory: `out` when given, else the config's `output_dir`, else
/// `out/<name>`.
pub fn output_dir(cfg: &ExperimentConfig, out: Option<&Path>) -> PathBuf {
    match (out, &cfg.output_dir) {
        (Some(o), _) => o.to_path_buf(),
        (None, Some(o)) => o.clone(),
        (None, None) => PathBuf::from("out").join(cfg.name()),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteEntry {
    pub config: PathBuf,
    pub passed: bool,
    /// Set when the config failed validation.
    pub config_error: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<Report>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub passed: bool,
    pub experiments: BTreeMap<String, SuiteEntry>,
}

impl SuiteReport {
    /// 0 on success, 2 if any config was rejected, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.experiments.values().any(|e| e.config_error) {
            2
        } else if self.passed {
            0
        } else {
            1
        }
    }
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".to_string())
}

/// Runs every `*.toml` in `config_dir` (sorted by file name) into
/// `out/<name>/`. A failing experiment does not stop the others.
pub fn run_full_suite(config_dir: &Path, out: &Path, seed: Option<u64>) -> Result<SuiteReport> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(config_dir)
        .map_err(|e| Error::Config(format!("{}: {e}", config_dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    files.sort();
    std::fs::create_dir_all(out)?;
    let mut experiments = BTreeMap::new();
    for path in files {
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let entry = match ExperimentConfig::load(&path) {
            Err(e) => SuiteEntry { config: path.clone(), passed: false, config_error: true, error: Some(e.to_string()), report: None },
            Ok(mut cfg) => {
                if let Some(s) = seed {
                    cfg.seed = s;
                }
                let dir = out.join(cfg.name());
                match catch_unwind(AssertUnwindSafe(|| run_experiment(&cfg, &dir))) {
                    Ok(Ok(rep)) => SuiteEntry { config: path.clone(), passed: rep.passed(), config_error: false, error: None, report: Some(rep) },
                    Ok(Err(e)) => SuiteEntry {
                        config: path.clone(),
                        passed: false,
                        config_error: matches!(e, Error::Config(_)),
                        error: Some(e.to_string()),
                        report: None,
                    },
                    Err(p) => SuiteEntry { config: path.clone(), passed: false, config_error: false, error: Some(panic_message(p)), report: None },
                }
            }
        };
        let key = entry.report.as_ref().map(|r| r.metadata.name.clone()).unwrap_or(stem);
        experiments.insert(key, entry);
    }
    let passed = experiments.values().all(|e| e.passed);
    let suite = SuiteReport { passed, experiments };
    let f = std::fs::File::create(out.join("suite.json"))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(f), &suite)?;
    Ok(suite)
}
