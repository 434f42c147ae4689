//! The `theory`, `propagate`, `jacobian` and `train` subcommands.
//!
//! Grid cells may run in parallel, but every file is assembled in grid
//! order after the cells finish, so output bytes do not depend on the
//! worker count.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;

use sigprop_core::data::{load_mnist, make_blobs, subsample, Dataset};
use sigprop_core::ensemble::{msv_experiment, run_ensemble, EnsembleConfig};
use sigprop_core::surrogate::{save_checkpoint, train_with, EpochMetrics, TrainConfig, TrainOutcome};
use sigprop_core::theory::depth_scales;
use sigprop_core::{MfParams, QuadratureRule, Scalar};

use crate::config::{Config, TrainGridConfig};
use crate::output::{fmt_f64, parse_f64, read_rows, render, write_atomic};

pub const THEORY_HEADER: [&str; 9] = [
    "sigma_m2",
    "sigma_b2",
    "q_star",
    "c_star",
    "chi_cstar",
    "chi1",
    "xi_q",
    "xi_c",
    "error",
];
pub const PROPAGATE_HEADER: [&str; 10] = [
    "layer",
    "q_theory",
    "q_emp_mean",
    "q_emp_std",
    "c_theory",
    "c_emp_mean",
    "c_emp_std",
    "q_bb_theory",
    "q_bb_emp_mean",
    "q_bb_emp_std",
];
pub const JACOBIAN_HEADER: [&str; 6] = [
    "width",
    "chi_theory",
    "msv_mean",
    "msv_std",
    "n_networks",
    "mean_abs_error",
];
pub const RUN_HEADER: [&str; 4] = ["epoch", "train_loss", "train_acc", "test_acc"];
pub const SUMMARY_HEADER: [&str; 6] = [
    "depth",
    "sigma_m2",
    "final_train_acc",
    "final_test_acc",
    "xi_c_theory",
    "error",
];

/// Flags that change how a command executes rather than what it computes.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunMode {
    pub dry_run: bool,
    pub resume: bool,
}

/// Runs `f` on a rayon pool with `workers` threads (0 = all cores).
pub fn with_pool<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
    Ok(pool.install(f))
}

pub fn quadrature(cfg: &Config) -> Result<QuadratureRule<f64>> {
    Ok(QuadratureRule::gauss_hermite(cfg.quadrature_nodes)?)
}

fn params(sigma_m2: f64, sigma_b2: f64, kappa: f64) -> sigprop_core::Result<MfParams<f64>> {
    MfParams::new(sigma_m2, sigma_b2)?.with_kappa(kappa)
}

fn skip(mode: RunMode, path: &Path) -> bool {
    if mode.resume && path.is_file() {
        eprintln!("skipping {} (exists)", path.display());
        return true;
    }
    false
}

fn print_plan(cfg: &Config, command: &str, cells: &[String]) -> Result<()> {
    print!("{}", cfg.echo(command)?);
    println!("{} cell(s), output under {}:", cells.len(), cfg.out.display());
    for c in cells {
        println!("  {c}");
    }
    Ok(())
}

pub fn theory(cfg: &Config, mode: RunMode) -> Result<Vec<PathBuf>> {
    cfg.validate_theory()?;
    let t = &cfg.theory;
    let grid: Vec<(f64, f64)> = t
        .sigma_m2
        .iter()
        .flat_map(|&m| t.sigma_b2.iter().map(move |&b| (m, b)))
        .collect();
    let path = cfg.out.join("theory.csv");
    if mode.dry_run {
        let cells: Vec<String> = grid.iter().map(|(m, b)| format!("sigma_m2={m} sigma_b2={b}")).collect();
        return print_plan(cfg, "theory", &cells).map(|_| vec![]);
    }
    if skip(mode, &path) {
        return Ok(vec![]);
    }
    let rule = quadrature(cfg)?;
    let rows: Vec<Vec<String>> = with_pool(cfg.workers, || {
        grid.par_iter()
            .map(|&(m, b)| {
                let mut row = vec![fmt_f64(m), fmt_f64(b)];
                match params(m, b, cfg.kappa).and_then(|p| depth_scales(&p, &rule)) {
                    Ok(s) => {
                        row.extend([s.q_star, s.c_star, s.chi_cstar, s.chi1, s.xi_q, s.xi_c].map(fmt_f64));
                        row.push(String::new());
                    }
                    Err(e) => {
                        row.extend(std::iter::repeat_n("nan".to_string(), 6));
                        row.push(e.to_string());
                    }
                }
                row
            })
            .collect()
    })?;
    write_atomic(&path, &render(&cfg.echo("theory")?, &THEORY_HEADER, &rows)?)?;
    eprintln!("theory: {} rows -> {}", rows.len(), path.display());
    Ok(vec![path])
}

fn propagate_path(out: &Path, m: f64, b: f64) -> PathBuf {
    out.join("propagate").join(format!("m{m}_b{b}.csv"))
}

pub fn propagate(cfg: &Config, mode: RunMode) -> Result<Vec<PathBuf>> {
    cfg.validate_propagate()?;
    let p = &cfg.propagate;
    let grid: Vec<(f64, f64)> = p
        .sigma_m2
        .iter()
        .flat_map(|&m| p.sigma_b2.iter().map(move |&b| (m, b)))
        .collect();
    if mode.dry_run {
        let cells: Vec<String> = grid
            .iter()
            .map(|&(m, b)| format!("{}", propagate_path(&cfg.out, m, b).display()))
            .collect();
        return print_plan(cfg, "propagate", &cells).map(|_| vec![]);
    }
    let rule = quadrature(cfg)?;
    let echo = cfg.echo("propagate")?;
    let mut written = Vec::new();
    for (m, b) in grid {
        let path = propagate_path(&cfg.out, m, b);
        if skip(mode, &path) {
            continue;
        }
        let config = EnsembleConfig {
            width: p.width,
            depth: p.depth,
            n_realizations: p.n_realizations,
            params: params(m, b, cfg.kappa)?,
            mean_init: p.mean_init()?,
            q0_aa: p.q0_aa,
            q0_bb: p.q0_bb,
            c0_ab: p.c0,
            seed: cfg.seed,
        };
        let stats = with_pool(cfg.workers, || run_ensemble(&config, &rule))?
            .with_context(|| format!("sigma_m2={m}, sigma_b2={b}"))?;
        let th = &stats.theory;
        let rows: Vec<Vec<String>> = (0..=stats.depth())
            .map(|l| {
                let mut row = vec![l.to_string()];
                row.extend(
                    [
                        th.q_aa[l],
                        stats.q_aa_mean[l],
                        stats.q_aa_std[l],
                        th.c_ab[l],
                        stats.c_ab_mean[l],
                        stats.c_ab_std[l],
                        th.q_bb[l],
                        stats.q_bb_mean[l],
                        stats.q_bb_std[l],
                    ]
                    .map(fmt_f64),
                );
                row
            })
            .collect();
        write_atomic(&path, &render(&echo, &PROPAGATE_HEADER, &rows)?)?;
        eprintln!("propagate: {}", path.display());
        written.push(path);
    }
    Ok(written)
}

pub fn jacobian(cfg: &Config, mode: RunMode) -> Result<Vec<PathBuf>> {
    cfg.validate_jacobian()?;
    let j = &cfg.jacobian;
    let path = cfg.out.join("jacobian.csv");
    if mode.dry_run {
        let cells: Vec<String> = j.widths.iter().map(|w| format!("width={w}")).collect();
        return print_plan(cfg, "jacobian", &cells).map(|_| vec![]);
    }
    if skip(mode, &path) {
        return Ok(vec![]);
    }
    let rule = quadrature(cfg)?;
    let p = params(j.sigma_m2, j.sigma_b2, cfg.kappa)?;
    let mut rows = Vec::with_capacity(j.widths.len());
    for &w in &j.widths {
        let s = with_pool(cfg.workers, || {
            msv_experiment(w, &p, j.n_networks, j.n_probes, cfg.seed, &rule)
        })??;
        rows.push(vec![
            w.to_string(),
            fmt_f64(s.chi_theory),
            fmt_f64(s.msv_mean),
            fmt_f64(s.msv_std),
            s.n_networks.to_string(),
            fmt_f64(s.mean_abs_error),
        ]);
    }
    write_atomic(&path, &render(&cfg.echo("jacobian")?, &JACOBIAN_HEADER, &rows)?)?;
    eprintln!("jacobian: {} widths -> {}", rows.len(), path.display());
    Ok(vec![path])
}

/// Training and optional test data at the precision of the run.
#[derive(Debug, Clone)]
pub struct TrainData<T> {
    pub train: Dataset<T>,
    pub test: Option<Dataset<T>>,
}

pub fn load_train_data<T: Scalar>(t: &TrainGridConfig, data_dir: &Path, seed: u64) -> Result<TrainData<T>> {
    let (train, test) = match t.dataset.as_str() {
        "blobs" => (
            make_blobs(t.blob_samples, t.blob_dim, t.blob_margin, seed)?,
            make_blobs(t.blob_samples, t.blob_dim, t.blob_margin, seed.wrapping_add(1))?,
        ),
        _ => load_mnist(data_dir)?,
    };
    Ok(TrainData {
        train: subsample(&train, t.fraction, seed)?,
        test: t.evaluate_test.then_some(test),
    })
}

/// The core training configuration of one grid cell.
pub fn cell_config<T: Scalar>(
    t: &TrainGridConfig,
    depth: usize,
    sigma_m2: f64,
    kappa: f64,
    seed: u64,
) -> Result<TrainConfig<T>> {
    Ok(TrainConfig {
        depth,
        width: t.width,
        sigma_m2: T::lit(sigma_m2),
        sigma_b2: T::lit(t.sigma_b2),
        mean_init: t.mean_init()?,
        kappa: T::lit(kappa),
        head: t.head()?,
        optimizer: t.optimizer()?,
        constraint: t.constraint()?,
        learning_rate: T::lit(t.learning_rate),
        batch_size: t.batch_size,
        epochs: t.epochs,
        seed,
        variance_path: true,
        eval_every: t.eval_every,
    })
}

pub fn run_cell<T: Scalar>(config: &TrainConfig<T>, data: &TrainData<T>, label: &str) -> Result<TrainOutcome<T>> {
    let out = train_with(config, &data.train, data.test.as_ref(), |m| {
        if !m.train_acc.is_nan() {
            eprintln!(
                "{label} epoch {}: loss {:.4} train {:.4} test {:.4}",
                m.epoch, m.train_loss, m.train_acc, m.test_acc
            );
        }
    })?;
    Ok(out)
}

fn run_rows(history: &[EpochMetrics]) -> Vec<Vec<String>> {
    history
        .iter()
        .map(|m| {
            vec![
                m.epoch.to_string(),
                fmt_f64(m.train_loss),
                fmt_f64(m.train_acc),
                fmt_f64(m.test_acc),
            ]
        })
        .collect()
}

fn run_path(out: &Path, depth: usize, m: f64) -> PathBuf {
    out.join("train").join(format!("depth{depth}_m{m}.csv"))
}

/// Final `(train_acc, test_acc)` of a finished run.
fn final_accuracies(path: &Path) -> Result<(f64, f64)> {
    let (_, rows) = read_rows(path)?;
    let last = rows.last().with_context(|| format!("{} has no rows", path.display()))?;
    Ok((parse_f64(&last[2]), parse_f64(&last[3])))
}

pub fn train(cfg: &Config, mode: RunMode) -> Result<Vec<PathBuf>> {
    cfg.validate_train()?;
    match cfg.train.precision.as_str() {
        "f64" => train_grid::<f64>(cfg, mode),
        _ => train_grid::<f32>(cfg, mode),
    }
}

fn train_grid<T: Scalar>(cfg: &Config, mode: RunMode) -> Result<Vec<PathBuf>> {
    let t = &cfg.train;
    let grid: Vec<(usize, f64)> = t
        .depths
        .iter()
        .flat_map(|&d| t.sigma_m2.iter().map(move |&m| (d, m)))
        .collect();
    if mode.dry_run {
        let cells: Vec<String> = grid
            .iter()
            .map(|&(d, m)| format!("{}", run_path(&cfg.out, d, m).display()))
            .collect();
        return print_plan(cfg, "train", &cells).map(|_| vec![]);
    }
    let pending: Vec<bool> = grid
        .iter()
        .map(|&(d, m)| !(mode.resume && run_path(&cfg.out, d, m).is_file()))
        .collect();
    let data = if pending.iter().any(|&p| p) {
        Some(load_train_data::<T>(t, &cfg.data_dir, cfg.seed)?)
    } else {
        None
    };
    let echo = cfg.echo("train")?;
    let rule = quadrature(cfg)?;
    let mean_init = t.mean_init()?;

    let results: Vec<Result<(f64, f64)>> = with_pool(cfg.workers, || {
        grid.par_iter()
            .zip(&pending)
            .map(|(&(d, m), &todo)| {
                let path = run_path(&cfg.out, d, m);
                if !todo {
                    eprintln!("skipping {} (exists)", path.display());
                    return final_accuracies(&path);
                }
                let data = data.as_ref().expect("loaded when a cell is pending");
                let config = cell_config::<T>(t, d, m, cfg.kappa, cfg.seed)?;
                let outcome = run_cell(&config, data, &format!("depth {d} sigma_m2 {m}"))?;
                write_atomic(&path, &render(&echo, &RUN_HEADER, &run_rows(&outcome.history))?)?;
                if t.checkpoints {
                    save_checkpoint(&outcome.network, &path.with_extension("bnmf"))?;
                }
                let last = outcome.history.last().expect("history holds epoch 0");
                Ok((last.train_acc, last.test_acc))
            })
            .collect()
    })?;

    let mut rows = Vec::with_capacity(grid.len());
    for (&(d, m), res) in grid.iter().zip(results) {
        let xi_c = params(mean_init.effective_variance(m), t.sigma_b2, cfg.kappa)
            .and_then(|p| depth_scales(&p, &rule))
            .map(|s| s.xi_c)
            .unwrap_or(f64::NAN);
        let (acc, err) = match res {
            Ok(a) => (a, String::new()),
            Err(e) => {
                eprintln!("depth {d} sigma_m2 {m} failed: {e:#}");
                ((f64::NAN, f64::NAN), format!("{e:#}"))
            }
        };
        rows.push(vec![
            d.to_string(),
            fmt_f64(m),
            fmt_f64(acc.0),
            fmt_f64(acc.1),
            fmt_f64(xi_c),
            err,
        ]);
    }
    let path = cfg.out.join("train_summary.csv");
    write_atomic(&path, &render(&echo, &SUMMARY_HEADER, &rows)?)?;
    eprintln!("train: {} cells -> {}", rows.len(), path.display());
    let mut written: Vec<PathBuf> = grid
        .iter()
        .zip(&pending)
        .filter(|(_, &p)| p)
        .map(|(&(d, m), _)| run_path(&cfg.out, d, m))
        .filter(|p| p.is_file())
        .collect();
    written.push(path);
    Ok(written)
}
