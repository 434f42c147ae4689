use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use sigprop_cli::commands::{self, RunMode};
use sigprop_cli::config::{Config, Overrides, UsageError, DATA_DIR_ENV};
use sigprop_cli::verify::{self, VerifyOptions, KEYS};
use sigprop_core::data::MnistFiles;

/// Signal propagation experiments for Gaussian-binary surrogate networks.
///
/// Settings resolve as built-in defaults, then the `--config` TOML file,
/// then `--set` assignments and the dedicated flags.
#[derive(Debug, Parser)]
#[command(name = "sigprop", version)]
struct Cli {
    #[command(flatten)]
    shared: Shared,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Shared {
    /// TOML configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,
    /// Print the resolved configuration and grid, run nothing.
    #[arg(long, global = true)]
    dry_run: bool,
    /// Skip grid cells whose output file already exists.
    #[arg(long, global = true)]
    resume: bool,
    /// Directory holding the four MNIST IDX files.
    #[arg(long, global = true, env = DATA_DIR_ENV, value_name = "DIR")]
    data_dir: Option<PathBuf>,
    /// Reduced training grid: depths 5, 15, 25 and sigma_m2 0.1, 0.5, 0.95.
    #[arg(long, global = true)]
    smoke: bool,
    /// Override any config key, e.g. `--set propagate.width=200`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Depth scales over a (sigma_m2, sigma_b2) grid.
    Theory,
    /// Variance and correlation propagation, theory against simulation.
    Propagate,
    /// Mean squared singular value of single-layer Jacobians by width.
    Jacobian,
    /// Trains the surrogate over a depth × sigma_m2 grid.
    Train,
    /// Runs the acceptance checks and exits nonzero on failure.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Run only these checks (comma separated).
    #[arg(long, value_delimiter = ',', value_parser = clap::builder::PossibleValuesParser::new(KEYS))]
    only: Vec<String>,
    /// Full training grid instead of the smoke grid.
    #[arg(long)]
    full_grid: bool,
    /// Include the full-MNIST test accuracy report.
    #[arg(long)]
    tension: bool,
    /// Report the training checks as skipped.
    #[arg(long)]
    skip_training: bool,
}

fn run(cli: Cli) -> Result<bool> {
    let s = cli.shared;
    let overrides = Overrides {
        seed: s.seed,
        out: s.out,
        workers: s.workers,
        data_dir: s.data_dir,
        set: s.set,
        smoke: s.smoke,
    };
    let cfg = Config::resolve(s.config.as_deref(), &overrides)?;
    let mode = RunMode {
        dry_run: s.dry_run,
        resume: s.resume,
    };
    match cli.command {
        Command::Theory => commands::theory(&cfg, mode).map(|_| true),
        Command::Propagate => commands::propagate(&cfg, mode).map(|_| true),
        Command::Jacobian => commands::jacobian(&cfg, mode).map(|_| true),
        Command::Train => commands::train(&cfg, mode).map(|_| true),
        Command::Verify(args) => run_verify(&cfg, mode, args),
    }
}

fn run_verify(cfg: &Config, mode: RunMode, args: VerifyArgs) -> Result<bool> {
    let keys: Vec<&str> = if args.only.is_empty() {
        KEYS.to_vec()
    } else {
        KEYS.iter()
            .copied()
            .filter(|k| args.only.iter().any(|o| o == k))
            .collect()
    };
    let data_dir = (!args.skip_training && MnistFiles::locate(&cfg.data_dir).is_some()).then(|| cfg.data_dir.clone());
    if mode.dry_run {
        println!("checks: {}", keys.join(", "));
        println!("seed {}, {} quadrature nodes", cfg.seed, cfg.quadrature_nodes);
        match &data_dir {
            Some(d) => println!("MNIST: {}", d.display()),
            None => println!("MNIST: unavailable, training checks skipped"),
        }
        return Ok(true);
    }
    let opts = VerifyOptions {
        seed: cfg.seed,
        rule: commands::quadrature(cfg)?,
        data_dir,
        full_grid: args.full_grid,
        tension: args.tension,
        workers: cfg.workers,
    };
    let results = verify::run_all(&keys, &opts, |c| println!("{c}"));
    let failed = results.iter().filter(|c| c.failed()).count();
    println!("{} checks, {failed} failed", results.len());
    Ok(failed == 0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
