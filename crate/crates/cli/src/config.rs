//! Experiment configuration.
//!
//! Values are resolved in three layers: built-in defaults, then a TOML file
//! (`--config`), then command line overrides (`--set key=value` and the
//! dedicated flags). Missing keys keep their defaults.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use sigprop_core::init::MeanInit;
use sigprop_core::quadrature::DEFAULT_NODES;
use sigprop_core::surrogate::{Head, MeanConstraint, OptimizerKind};

pub const DEFAULT_DATA_DIR: &str = "/root/data/mnist";
pub const DATA_DIR_ENV: &str = "SIGPROP_DATA_DIR";

pub const SMOKE_DEPTHS: [usize; 3] = [5, 15, 25];
pub const SMOKE_SIGMA_M2: [f64; 3] = [0.1, 0.5, 0.95];

/// A configuration problem the user has to fix (exit status 2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub out: PathBuf,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    pub data_dir: PathBuf,
    pub kappa: f64,
    pub quadrature_nodes: usize,
    pub theory: TheoryConfig,
    pub propagate: PropagateConfig,
    pub jacobian: JacobianConfig,
    pub train: TrainGridConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            workers: 0,
            data_dir: PathBuf::from(DEFAULT_DATA_DIR),
            kappa: 1.0,
            quadrature_nodes: DEFAULT_NODES,
            theory: TheoryConfig::default(),
            propagate: PropagateConfig::default(),
            jacobian: JacobianConfig::default(),
            train: TrainGridConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoryConfig {
    pub sigma_m2: Vec<f64>,
    pub sigma_b2: Vec<f64>,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        Self {
            sigma_m2: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99, 0.999],
            sigma_b2: vec![1e-5, 1e-3, 1e-1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagateConfig {
    pub sigma_m2: Vec<f64>,
    pub sigma_b2: Vec<f64>,
    pub width: usize,
    pub depth: usize,
    pub n_realizations: usize,
    pub q0_aa: f64,
    pub q0_bb: f64,
    pub c0: f64,
    pub mean_init: String,
}

impl Default for PropagateConfig {
    fn default() -> Self {
        Self {
            sigma_m2: vec![0.2, 0.5, 0.99],
            sigma_b2: vec![1e-3],
            width: 1000,
            depth: 20,
            n_realizations: 50,
            q0_aa: 1.0,
            q0_bb: 1.0,
            c0: 0.5,
            mean_init: MeanInit::SymmetricBernoulli.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JacobianConfig {
    pub widths: Vec<usize>,
    pub sigma_m2: f64,
    pub sigma_b2: f64,
    pub n_networks: usize,
    /// Random probes per network; absent means the exact trace.
    pub n_probes: Option<usize>,
}

impl Default for JacobianConfig {
    fn default() -> Self {
        Self {
            widths: vec![50, 100, 200, 400, 800],
            sigma_m2: 0.5,
            sigma_b2: 1e-3,
            n_networks: 20,
            n_probes: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainGridConfig {
    /// `mnist` or `blobs`.
    pub dataset: String,
    pub depths: Vec<usize>,
    pub sigma_m2: Vec<f64>,
    pub sigma_b2: f64,
    pub width: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: String,
    pub constraint: String,
    pub mean_init: String,
    pub head: String,
    /// Stratified fraction of the training set.
    pub fraction: f64,
    pub eval_every: usize,
    pub evaluate_test: bool,
    pub checkpoints: bool,
    /// `f32` or `f64`.
    pub precision: String,
    pub blob_samples: usize,
    pub blob_dim: usize,
    pub blob_margin: f64,
}

impl Default for TrainGridConfig {
    fn default() -> Self {
        Self {
            dataset: "mnist".into(),
            depths: (1..=8).map(|k| 5 * k).collect(),
            sigma_m2: vec![0.1, 0.3, 0.5, 0.7, 0.9, 0.95, 0.99],
            sigma_b2: 1e-3,
            width: 256,
            epochs: 20,
            batch_size: 64,
            learning_rate: 2e-4,
            optimizer: OptimizerKind::Adam.to_string(),
            constraint: MeanConstraint::Projection.to_string(),
            mean_init: MeanInit::SymmetricBernoulli.to_string(),
            head: Head::Softmax.to_string(),
            fraction: 0.25,
            eval_every: 1,
            evaluate_test: true,
            checkpoints: false,
            precision: "f32".into(),
            blob_samples: 2000,
            blob_dim: 20,
            blob_margin: 0.5,
        }
    }
}

impl TrainGridConfig {
    pub fn mean_init(&self) -> Result<MeanInit> {
        MeanInit::from_str(&self.mean_init).map_err(usage)
    }

    pub fn optimizer(&self) -> Result<OptimizerKind> {
        OptimizerKind::from_str(&self.optimizer).map_err(usage)
    }

    pub fn constraint(&self) -> Result<MeanConstraint> {
        MeanConstraint::from_str(&self.constraint).map_err(usage)
    }

    pub fn head(&self) -> Result<Head> {
        Head::from_str(&self.head).map_err(usage)
    }

    /// Replaces the grid with the reduced smoke grid and evaluates only the
    /// final epoch.
    pub fn make_smoke(&mut self) {
        self.depths = SMOKE_DEPTHS.to_vec();
        self.sigma_m2 = SMOKE_SIGMA_M2.to_vec();
        self.eval_every = self.epochs.max(1);
    }
}

impl PropagateConfig {
    pub fn mean_init(&self) -> Result<MeanInit> {
        MeanInit::from_str(&self.mean_init).map_err(usage)
    }
}

/// Command line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub data_dir: Option<PathBuf>,
    /// `section.key=value` assignments, values in TOML syntax (bare words
    /// are taken as strings).
    pub set: Vec<String>,
    pub smoke: bool,
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn assign(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| usage(format!("--set expects key=value, got '{assignment}'")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    let (last, parents) = path.split_last().expect("split yields one part");
    let mut cursor = table;
    for p in parents {
        cursor = cursor
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| usage(format!("'{p}' in '{key}' is not a section")))?;
    }
    cursor.insert(last.to_string(), parse_value(raw.trim()));
    Ok(())
}

impl Config {
    /// Defaults, then `file`, then `overrides`.
    pub fn resolve(file: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let toml::Value::Table(mut table) = toml::Value::try_from(Config::default()).context("serializing defaults")?
        else {
            unreachable!("a struct serializes to a table")
        };
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let parsed: toml::Table = toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            merge(&mut table, parsed);
        }
        for a in &overrides.set {
            assign(&mut table, a)?;
        }
        let mut cfg: Config = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| usage(e.to_string()))?;
        if let Some(seed) = overrides.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &overrides.out {
            cfg.out = out.clone();
        }
        if let Some(w) = overrides.workers {
            cfg.workers = w;
        }
        if let Some(d) = &overrides.data_dir {
            cfg.data_dir = d.clone();
        }
        if overrides.smoke {
            cfg.train.make_smoke();
        }
        Ok(cfg)
    }

    fn check_shared(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            bail!(usage(format!("kappa must be > 0, got {}", self.kappa)));
        }
        if self.quadrature_nodes < 2 {
            bail!(usage("quadrature_nodes must be >= 2"));
        }
        Ok(())
    }

    pub fn validate_theory(&self) -> Result<()> {
        self.check_shared()?;
        check_grid("theory.sigma_m2", &self.theory.sigma_m2, sigma_m2_ok)?;
        check_grid("theory.sigma_b2", &self.theory.sigma_b2, sigma_b2_ok)
    }

    pub fn validate_propagate(&self) -> Result<()> {
        self.check_shared()?;
        let p = &self.propagate;
        check_grid("propagate.sigma_m2", &p.sigma_m2, sigma_m2_ok)?;
        check_grid("propagate.sigma_b2", &p.sigma_b2, sigma_b2_ok)?;
        positive("propagate.width", p.width)?;
        positive("propagate.depth", p.depth)?;
        positive("propagate.n_realizations", p.n_realizations)?;
        if !(p.q0_aa > 0.0 && p.q0_bb > 0.0) || !(p.c0.abs() <= 1.0) {
            bail!(usage("propagate needs q0_aa, q0_bb > 0 and |c0| <= 1"));
        }
        p.mean_init().map(|_| ())
    }

    pub fn validate_jacobian(&self) -> Result<()> {
        self.check_shared()?;
        let j = &self.jacobian;
        check_grid("jacobian.widths", &j.widths, |&w| w > 0)?;
        positive("jacobian.n_networks", j.n_networks)?;
        if j.n_probes == Some(0) {
            bail!(usage("jacobian.n_probes must be >= 1 when given"));
        }
        if !sigma_m2_ok(&j.sigma_m2) || !sigma_b2_ok(&j.sigma_b2) {
            bail!(usage("jacobian needs sigma_m2 in [0, 1) and sigma_b2 >= 0"));
        }
        Ok(())
    }

    pub fn validate_train(&self) -> Result<()> {
        self.check_shared()?;
        let t = &self.train;
        check_grid("train.depths", &t.depths, |_| true)?;
        check_grid("train.sigma_m2", &t.sigma_m2, sigma_m2_ok)?;
        if !sigma_b2_ok(&t.sigma_b2) {
            bail!(usage("train.sigma_b2 must be >= 0"));
        }
        positive("train.width", t.width)?;
        positive("train.batch_size", t.batch_size)?;
        positive("train.eval_every", t.eval_every)?;
        if !(t.learning_rate >= 0.0 && t.learning_rate.is_finite()) {
            bail!(usage(format!(
                "train.learning_rate must be >= 0, got {}",
                t.learning_rate
            )));
        }
        if !(t.fraction > 0.0 && t.fraction <= 1.0) {
            bail!(usage(format!("train.fraction must lie in (0, 1], got {}", t.fraction)));
        }
        if !matches!(t.dataset.as_str(), "mnist" | "blobs") {
            bail!(usage(format!(
                "train.dataset must be mnist or blobs, got '{}'",
                t.dataset
            )));
        }
        if !matches!(t.precision.as_str(), "f32" | "f64") {
            bail!(usage(format!(
                "train.precision must be f32 or f64, got '{}'",
                t.precision
            )));
        }
        t.mean_init()?;
        t.optimizer()?;
        t.constraint()?;
        t.head()?;
        Ok(())
    }

    /// `# `-prefixed TOML describing everything that determines the output
    /// of `command`. The output directory and worker count are left out
    /// since they do not change results.
    pub fn echo(&self, command: &str) -> Result<String> {
        let mut table = toml::Table::new();
        table.insert("command".into(), toml::Value::String(command.into()));
        table.insert("seed".into(), toml::Value::Integer(self.seed as i64));
        table.insert("kappa".into(), toml::Value::Float(self.kappa));
        table.insert(
            "quadrature_nodes".into(),
            toml::Value::Integer(self.quadrature_nodes as i64),
        );
        let section = match command {
            "theory" => toml::Value::try_from(&self.theory)?,
            "propagate" => toml::Value::try_from(&self.propagate)?,
            "jacobian" => toml::Value::try_from(&self.jacobian)?,
            "train" => {
                table.insert(
                    "data_dir".into(),
                    toml::Value::String(self.data_dir.display().to_string()),
                );
                toml::Value::try_from(&self.train)?
            }
            other => return Err(anyhow!("no config section for '{other}'")),
        };
        table.insert(command.into(), section);
        let text = toml::to_string(&table)?;
        Ok(text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| format!("# {l}\n"))
            .collect())
    }
}

fn sigma_m2_ok(v: &f64) -> bool {
    (0.0..1.0).contains(v)
}

fn sigma_b2_ok(v: &f64) -> bool {
    *v >= 0.0 && v.is_finite()
}

fn positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        bail!(usage(format!("{name} must be >= 1")));
    }
    Ok(())
}

fn check_grid<V: std::fmt::Debug>(name: &str, values: &[V], ok: impl Fn(&V) -> bool) -> Result<()> {
    if values.is_empty() {
        bail!(usage(format!("{name} is empty")));
    }
    if let Some(bad) = values.iter().find(|v| !ok(v)) {
        bail!(usage(format!("{name} contains invalid value {bad:?}")));
    }
    Ok(())
}
