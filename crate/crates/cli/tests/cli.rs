use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sigprop_cli::output::{parse_f64, read_rows};
use sigprop_core::data::MnistFiles;

fn sigprop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sigprop"))
        .args(args)
        .env_remove("SIGPROP_DATA_DIR")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = sigprop(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let (header, rows) = read_rows(path).unwrap();
    let k = header
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("no column {name}"));
    rows.iter().map(|r| parse_f64(&r[k])).collect()
}

const SMALL_PROPAGATE: [&str; 8] = [
    "--set",
    "propagate.width=40",
    "--set",
    "propagate.depth=4",
    "--set",
    "propagate.n_realizations=6",
    "--set",
    "propagate.sigma_m2=[0.5, 0.9]",
];

fn propagate_into(dir: &Path, extra: &[&str]) {
    let mut args = vec!["propagate", "--out", dir.to_str().unwrap()];
    args.extend(SMALL_PROPAGATE);
    args.extend(extra);
    ok(&args);
}

#[test]
fn propagate_is_byte_for_byte_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    propagate_into(a.path(), &[]);
    propagate_into(b.path(), &["--workers", "1"]);
    for name in ["m0.5_b0.001.csv", "m0.9_b0.001.csv"] {
        let (x, y) = (
            a.path().join("propagate").join(name),
            b.path().join("propagate").join(name),
        );
        assert_eq!(fs::read(&x).unwrap(), fs::read(&y).unwrap(), "{name}");
        assert_eq!(column(&x, "layer").len(), 5);
    }
    let c = tempfile::tempdir().unwrap();
    propagate_into(c.path(), &["--seed", "1"]);
    let name = "propagate/m0.5_b0.001.csv";
    assert_ne!(
        fs::read(a.path().join(name)).unwrap(),
        fs::read(c.path().join(name)).unwrap()
    );
}

#[test]
fn single_realization_has_zero_spread() {
    let dir = tempfile::tempdir().unwrap();
    propagate_into(dir.path(), &["--set", "propagate.n_realizations=1"]);
    let path = dir.path().join("propagate/m0.5_b0.001.csv");
    for col in ["q_emp_std", "c_emp_std", "q_bb_emp_std"] {
        assert!(column(&path, col).iter().all(|&v| v == 0.0), "{col}");
    }
}

#[test]
fn outputs_echo_the_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("run.toml");
    fs::write(
        &file,
        "seed = 5\n[propagate]\nwidth = 30\ndepth = 2\nn_realizations = 3\nsigma_m2 = [0.5]\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    ok(&[
        "propagate",
        "--config",
        file.to_str().unwrap(),
        "--seed",
        "7",
        "--set",
        "propagate.depth=3",
        "--out",
        out.to_str().unwrap(),
    ]);
    let text = fs::read_to_string(out.join("propagate/m0.5_b0.001.csv")).unwrap();
    let comments: Vec<&str> = text.lines().take_while(|l| l.starts_with('#')).collect();
    assert!(comments.contains(&"# seed = 7"), "{comments:?}");
    assert!(comments.contains(&"# width = 30"), "{comments:?}");
    assert!(comments.contains(&"# depth = 3"), "{comments:?}");
    assert!(comments.contains(&"# n_realizations = 3"), "{comments:?}");
    assert_eq!(column(&out.join("propagate/m0.5_b0.001.csv"), "layer").len(), 4);
}

#[test]
fn dry_run_prints_the_grid_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let res = ok(&["train", "--dry-run", "--smoke", "--out", out.to_str().unwrap()]);
    let text = String::from_utf8(res.stdout).unwrap();
    assert!(text.contains("9 cell(s)"), "{text}");
    assert!(text.contains("depth25_m0.95.csv"), "{text}");
    assert!(text.contains("# depths = [5, 15, 25]"), "{text}");
    assert!(!out.exists());
}

#[test]
fn empty_grid_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let res = sigprop(&[
        "theory",
        "--set",
        "theory.sigma_m2=[]",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("theory.sigma_m2 is empty"));
    let res = sigprop(&["theory", "--set", "theory.sigma_m2=[1.5]"]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn theory_rows_follow_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "theory",
        "--set",
        "theory.sigma_m2=[0.0, 0.2, 0.5, 0.99]",
        "--set",
        "theory.sigma_b2=[0.001]",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let path = dir.path().join("theory.csv");
    assert_eq!(column(&path, "sigma_m2"), vec![0.0, 0.2, 0.5, 0.99]);
    let xi_c = column(&path, "xi_c");
    assert_eq!(xi_c[0], 0.0);
    assert!(xi_c.windows(2).all(|w| w[1] > w[0]), "{xi_c:?}");
    assert!(xi_c.iter().all(|v| v.is_finite()));
}

#[test]
fn resume_skips_existing_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let args = ["theory", "--set", "theory.sigma_m2=[0.3]", "--out", d];
    ok(&args);
    let path = dir.path().join("theory.csv");
    fs::write(&path, "sentinel\n").unwrap();
    ok(&[&args[..], &["--resume"]].concat());
    assert_eq!(fs::read_to_string(&path).unwrap(), "sentinel\n");
    ok(&args);
    assert_ne!(fs::read_to_string(&path).unwrap(), "sentinel\n");
}

#[test]
fn jacobian_rows_per_width() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    ok(&["jacobian", "--set", "jacobian.widths=[30]", "--out", d]);
    let path = dir.path().join("jacobian.csv");
    assert_eq!(column(&path, "width"), vec![30.0]);
    assert_eq!(column(&path, "n_networks"), vec![20.0]);

    ok(&[
        "jacobian",
        "--set",
        "jacobian.widths=[10, 40]",
        "--set",
        "jacobian.sigma_m2=0.0",
        "--out",
        d,
    ]);
    assert_eq!(column(&path, "msv_mean"), vec![0.0, 0.0]);
    assert_eq!(column(&path, "chi_theory"), vec![0.0, 0.0]);
}

const BLOB_TRAIN: [&str; 16] = [
    "--set",
    "train.dataset=blobs",
    "--set",
    "train.depths=[1, 2]",
    "--set",
    "train.sigma_m2=[0.3, 0.9]",
    "--set",
    "train.width=8",
    "--set",
    "train.epochs=3",
    "--set",
    "train.blob_samples=200",
    "--set",
    "train.blob_dim=4",
    "--set",
    "train.learning_rate=0.01",
];

#[test]
fn blob_training_grid_writes_runs_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let mut args = vec!["train", "--out", d, "--set", "train.checkpoints=true"];
    args.extend(BLOB_TRAIN);
    ok(&args);
    let summary = dir.path().join("train_summary.csv");
    assert_eq!(column(&summary, "depth"), vec![1.0, 1.0, 2.0, 2.0]);
    assert_eq!(column(&summary, "sigma_m2"), vec![0.3, 0.9, 0.3, 0.9]);
    let xi = column(&summary, "xi_c_theory");
    assert!(xi[1] > xi[0] && xi[0] > 0.0);
    for (depth, m) in [(1, 0.3), (2, 0.9)] {
        let run = dir.path().join(format!("train/depth{depth}_m{m}.csv"));
        assert_eq!(column(&run, "epoch"), vec![0.0, 1.0, 2.0, 3.0]);
        assert!(run.with_extension("bnmf").is_file());
    }
    let finals = column(&summary, "final_train_acc");
    let direct: Vec<f64> = [(1, 0.3), (1, 0.9), (2, 0.3), (2, 0.9)]
        .iter()
        .map(|(d, m)| {
            *column(&dir.path().join(format!("train/depth{d}_m{m}.csv")), "train_acc")
                .last()
                .unwrap()
        })
        .collect();
    assert_eq!(finals, direct);
}

#[test]
fn failed_cells_are_recorded_and_the_grid_continues() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let mut args = vec!["train", "--out", d];
    args.extend(BLOB_TRAIN);
    ok(&args);
    let bad = dir.path().join("train/depth1_m0.9.csv");
    fs::write(&bad, "epoch,train_loss,train_acc,test_acc\n").unwrap();
    let before = fs::read(dir.path().join("train/depth2_m0.3.csv")).unwrap();
    args.push("--resume");
    ok(&args);
    let (_, rows) = read_rows(&dir.path().join("train_summary.csv")).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows[1][5].contains("no rows"), "{:?}", rows[1]);
    assert!(rows[0][5].is_empty() && rows[2][5].is_empty() && rows[3][5].is_empty());
    assert_eq!(fs::read(dir.path().join("train/depth2_m0.3.csv")).unwrap(), before);
}

#[test]
fn sabotaged_quadrature_fails_verification() {
    let good = sigprop(&["verify", "--only", "quadrature"]);
    assert!(good.status.success(), "{}", String::from_utf8_lossy(&good.stdout));
    let bad = sigprop(&["verify", "--only", "quadrature", "--set", "quadrature_nodes=2"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stdout).contains("[FAIL] quadrature consistency"));
}

#[test]
fn missing_mnist_skips_training_checks() {
    let dir = tempfile::tempdir().unwrap();
    let res = sigprop(&[
        "verify",
        "--only",
        "trainability,tension,fixed-point",
        "--data-dir",
        dir.path().to_str().unwrap(),
    ]);
    let text = String::from_utf8(res.stdout).unwrap();
    assert!(res.status.success(), "{text}");
    assert!(
        text.contains("[SKIPPED] trainability vs initialization: MNIST files not found"),
        "{text}"
    );
    assert!(text.contains("[SKIPPED] train/test tension"), "{text}");
    assert!(text.contains("[PASS] fixed-point identity"), "{text}");
}

#[test]
fn missing_mnist_is_an_error_for_train() {
    let dir = tempfile::tempdir().unwrap();
    let res = sigprop(&[
        "train",
        "--set",
        "train.depths=[1]",
        "--set",
        "train.sigma_m2=[0.5]",
        "--data-dir",
        dir.path().to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("MNIST files not found"));
}

/// Shallow networks train on reduced MNIST whatever the initialization.
#[test]
fn depth_two_mnist_cells_train() {
    let data = Path::new(sigprop_cli::config::DEFAULT_DATA_DIR);
    if MnistFiles::locate(data).is_none() {
        eprintln!("SKIPPED: MNIST not found in {}", data.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "train",
        "--set",
        "train.depths=[2]",
        "--set",
        "train.sigma_m2=[0.3, 0.6, 0.99]",
        "--set",
        "train.evaluate_test=false",
        "--set",
        "train.eval_every=20",
        "--data-dir",
        data.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let acc = column(&dir.path().join("train_summary.csv"), "final_train_acc");
    assert!(acc.iter().all(|&a| a > 0.9), "{acc:?}");
}
