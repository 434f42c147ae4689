//! Runs every acceptance criterion and prints one line per criterion.
//!
//! Training criteria need MNIST (`SIGPROP_DATA_DIR`, default
//! `/root/data/mnist`) and report SKIPPED without it. `SIGPROP_FULL_GRID=1`
//! trains the full depth × σ_m² grid instead of the smoke grid and
//! `SIGPROP_TENSION=1` adds the full-MNIST test accuracy report.

use std::path::PathBuf;
use std::process::ExitCode;

use sigprop_cli::config::{DATA_DIR_ENV, DEFAULT_DATA_DIR};
use sigprop_cli::verify::{run_all, Status, VerifyOptions};
use sigprop_core::data::MnistFiles;

const CRITERIA: [&str; 10] = [
    "agreement",
    "fixed-point",
    "divergence",
    "chi",
    "rate",
    "jacobian",
    "gradient",
    "clt",
    "trainability",
    "tension",
];

fn flag(name: &str) -> bool {
    std::env::var(name).is_ok_and(|v| v == "1")
}

fn main() -> ExitCode {
    let dir = PathBuf::from(std::env::var(DATA_DIR_ENV).unwrap_or_else(|_| DEFAULT_DATA_DIR.into()));
    let opts = VerifyOptions {
        data_dir: MnistFiles::locate(&dir).is_some().then_some(dir),
        full_grid: flag("SIGPROP_FULL_GRID"),
        tension: flag("SIGPROP_TENSION"),
        ..VerifyOptions::default()
    };
    println!("acceptance: {} criteria", CRITERIA.len());
    let results = run_all(&CRITERIA, &opts, |c| println!("acceptance {c}"));
    let count = |s: Status| results.iter().filter(|c| c.status == s).count();
    println!(
        "acceptance summary: {} pass, {} fail, {} skipped, {} report",
        count(Status::Pass),
        count(Status::Fail),
        count(Status::Skipped),
        count(Status::Report)
    );
    if count(Status::Fail) == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
