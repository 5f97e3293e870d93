use anisostable::harness::{output_dir, run_experiment, run_full_suite, ExperimentConfig, Report, Status};
use anisostable::Error;
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Experiments for diagonal SDEs driven by anisotropic stable noise.
///
/// Exit status: 0 when every hard verdict passes, 1 on a failed verdict or a
/// runtime error, 2 on a configuration or usage error.
#[derive(Parser)]
#[command(name = "anisostable", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML); for `suite`, a directory of configs.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    Simulate(Common),
    Density(Common),
    Resolvent(Common),
    Generator(Common),
    Multiplier(Common),
    Transience(Common),
    VerifyMartingale(Common),
    VerifyUniqueness(Common),
    Maximal(Common),
    Suite(Common),
}

impl Command {
    fn parts(&self) -> (&'static str, &Common) {
        match self {
            Command::Simulate(c) => ("simulate", c),
            Command::Density(c) => ("density", c),
            Command::Resolvent(c) => ("resolvent", c),
            Command::Generator(c) => ("generator", c),
            Command::Multiplier(c) => ("multiplier", c),
            Command::Transience(c) => ("transience", c),
            Command::VerifyMartingale(c) => ("verify-martingale", c),
            Command::VerifyUniqueness(c) => ("verify-uniqueness", c),
            Command::Maximal(c) => ("maximal", c),
            Command::Suite(c) => ("suite", c),
        }
    }
}

fn print_report(r: &Report) {
    println!("{} ({}) hash={} wall={:.2}s", r.metadata.name, r.metadata.experiment, r.metadata.config_hash, r.metadata.wall_time_s);
    for v in &r.verdicts {
        let tag = match v.status {
            Status::Pass => "pass",
            Status::Fail => "FAIL",
            Status::Inconclusive => "inconclusive",
            Status::Flagged => "flagged",
        };
        println!("  [{tag}] {} value={:e} bound={:e}", v.check, v.value, v.bound);
    }
}

fn error_code(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        Error::Config(_) => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn run_single(kind: &str, c: &Common) -> ExitCode {
    let mut cfg = match ExperimentConfig::load(&c.config) {
        Ok(cfg) => cfg,
        Err(e) => return error_code(&e),
    };
    if cfg.experiment.subcommand() != kind {
        eprintln!("error: `experiment`: config is for `{}`, not `{kind}`", cfg.experiment.subcommand());
        return ExitCode::from(2);
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    let dir = output_dir(&cfg, c.out.as_deref());
    match run_experiment(&cfg, &dir) {
        Ok(r) => {
            print_report(&r);
            println!("report: {}", dir.join("report.json").display());
            if r.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => error_code(&e),
    }
}

fn run_suite(c: &Common) -> ExitCode {
    let out = c.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    match run_full_suite(&c.config, Path::new(&out), c.seed) {
        Ok(s) => {
            for (name, e) in &s.experiments {
                match (&e.report, &e.error) {
                    (Some(r), _) => print_report(r),
                    (None, Some(err)) => println!("{name}: error: {err}"),
                    (None, None) => println!("{name}: no report"),
                }
            }
            println!("suite: {} ({} experiments) -> {}", if s.passed { "pass" } else { "FAIL" }, s.experiments.len(), out.join("suite.json").display());
            ExitCode::from(s.exit_code() as u8)
        }
        Err(e) => error_code(&e),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, common) = cli.command.parts();
    if let Some(n) = common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    if kind == "suite" {
        run_suite(common)
    } else {
        run_single(kind, common)
    }
}
