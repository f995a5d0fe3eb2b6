use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = "\
[world]
num_users = 30
num_items = 40
impressions_per_user = 20

[train.hcr]
max_epochs = 3
batch_size = 128

[train.hcr_ns]
max_epochs = 3
batch_size = 128
share_embeddings = false

[train.ct]
max_epochs = 3
batch_size = 128
mode = CT

[eval]
ks = 5, 10

[experiment]
seeds = 1, 2
";

fn hcr(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hcr"))
        .args(args)
        .current_dir(dir)
        .env_remove("HCR_SEED")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = hcr(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn workspace(config: &str) -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("exp.ini"), config).unwrap();
    dir
}

#[test]
fn simulate_writes_one_row_per_impression() {
    let dir = workspace(SMALL);
    let stdout = ok(dir.path(), &["simulate", "--config", "exp.ini", "--seed", "1", "--out", "d"]);
    assert!(stdout.contains("records = 600"));
    let csv = fs::read_to_string(dir.path().join("d/interactions.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("user_id,item_id,timestamp,click,like"));
    assert_eq!(lines.count(), 30 * 20);
    assert!(dir.path().join("d/ground_truth.csv").exists());
    assert!(dir.path().join("d/item_exposure.csv").exists());
}

#[test]
fn default_config_simulates_full_log() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--seed", "1", "--out", "d"]);
    let csv = fs::read_to_string(dir.path().join("d/interactions.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 200 * 150);
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let dir = workspace(SMALL);
    ok(dir.path(), &["simulate", "--config", "exp.ini", "--seed", "4", "--out", "a"]);
    ok(dir.path(), &["simulate", "--config", "exp.ini", "--seed", "4", "--out", "b"]);
    for f in ["interactions.csv", "ground_truth.csv", "item_exposure.csv"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        let b = fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
}

#[test]
fn unconfounded_world_reports_zero_identity_gap() {
    let dir = workspace(&SMALL.replace("[world]\n", "[world]\nconfounder_like_strength = 0\n"));
    let stdout = ok(dir.path(), &["simulate", "--config", "exp.ini", "--out", "d"]);
    let gap = stdout
        .lines()
        .find_map(|l| l.strip_prefix("max_abs_pdo_minus_pobs = "))
        .unwrap()
        .parse::<f64>()
        .unwrap();
    assert!(gap < 1e-12, "gap {gap}");
}

#[test]
fn seed_env_overrides_config() {
    let dir = workspace(SMALL);
    let out = Command::new(env!("CARGO_BIN_EXE_hcr"))
        .args(["simulate", "--config", "exp.ini", "--out", "d"])
        .current_dir(dir.path())
        .env("HCR_SEED", "9")
        .output()
        .unwrap();
    assert!(String::from_utf8_lossy(&out.stdout).contains("seed = 9"));
}

#[test]
fn train_smoke_and_replay() {
    let dir = workspace(SMALL);
    ok(dir.path(), &["simulate", "--config", "exp.ini", "--out", "d"]);
    let stdout = ok(dir.path(), &["train", "--config", "exp.ini", "--data", "d", "--out", "m1", "--seed", "3"]);
    assert!(stdout.starts_with("epoch=1 loss="));
    ok(dir.path(), &["train", "--config", "exp.ini", "--data", "d", "--out", "m2", "--seed", "3"]);
    let a = fs::read(dir.path().join("m1/hcr.ckpt")).unwrap();
    let b = fs::read(dir.path().join("m2/hcr.ckpt")).unwrap();
    assert_eq!(&a[..4], b"HCR1");
    assert_eq!(a, b);
    let log = fs::read_to_string(dir.path().join("m1/hcr.log")).unwrap();
    assert!(log.lines().all(|l| l.starts_with("epoch=") && l.contains(" valid_ndcg@50=")));
    let manifest = fs::read_to_string(dir.path().join("m1/hcr.manifest")).unwrap();
    assert!(manifest.contains("seed = 3"));
    assert!(manifest.contains("file.checkpoint = m1/hcr.ckpt"));
}

#[test]
fn evaluate_counts_and_fidelity() {
    let dir = workspace(SMALL);
    ok(dir.path(), &["simulate", "--config", "exp.ini", "--out", "d"]);
    ok(dir.path(), &["train", "--config", "exp.ini", "--data", "d", "--out", "m"]);

    let plain = ok(
        dir.path(),
        &["evaluate", "--config", "exp.ini", "--checkpoint", "m/hcr.ckpt", "--data", "d", "--variant", "HCR,HCR_T,HCR_S1"],
    );
    // variants x splits x Ks x metrics
    assert_eq!(plain.lines().count(), 3 * 2 * 2 * 2);
    assert!(!plain.contains("fidelity"));

    let with_truth = ok(
        dir.path(),
        &[
            "evaluate", "--config", "exp.ini", "--checkpoint", "m/hcr.ckpt", "--data", "d", "--variant", "HCR,HCR_S2",
            "--k", "10", "--ground-truth", "d/ground_truth.csv", "--output", "r",
        ],
    );
    assert_eq!(with_truth.lines().count(), 2 * 2 * 2 + 2);
    assert!(with_truth.contains("HCR_S2.test.all.fidelity = "));
    assert_eq!(fs::read_to_string(dir.path().join("r/report.txt")).unwrap(), with_truth);
    let csv = fs::read_to_string(dir.path().join("r/report.csv")).unwrap();
    assert!(csv.starts_with("metric,variant,split,group,k,value\n"));
    let ranked = fs::read_to_string(dir.path().join("r/ranked_HCR.csv")).unwrap();
    assert!(ranked.starts_with("user_id,rank,item_id,score\n"));
}

#[test]
fn evaluate_groups_and_figure_data() {
    let dir = workspace(SMALL);
    ok(dir.path(), &["simulate", "--config", "exp.ini", "--out", "d"]);
    ok(dir.path(), &["train", "--config", "exp.ini", "--data", "d", "--out", "m"]);
    let out = ok(
        dir.path(),
        &["evaluate", "--config", "exp.ini", "--checkpoint", "m/hcr.ckpt", "--data", "d", "--groups", "--output", "r", "--emit-gnuplot-data"],
    );
    assert!(out.contains("HCR.test.active.recall@5"));
    assert!(out.contains("HCR.test.chrono1.recall@5"));
    let fig = fs::read_to_string(dir.path().join("r/figure_groups.csv")).unwrap();
    assert!(fig.starts_with("variant,group,metric,k,value\n"));
    assert!(fig.lines().count() > 1);
}

#[test]
fn ct_checkpoint_rejects_hcr_variants() {
    let dir = workspace(SMALL);
    ok(dir.path(), &["simulate", "--config", "exp.ini", "--out", "d"]);
    ok(dir.path(), &["train", "--config", "exp.ini", "--run", "ct", "--data", "d", "--out", "m"]);
    let ckpt = fs::read(dir.path().join("m/ct.ckpt")).unwrap();
    let flags = u64::from_le_bytes(ckpt[28..36].try_into().unwrap());
    assert_ne!(flags & 4, 0, "CT flag missing");

    let bad = hcr(dir.path(), &["evaluate", "--checkpoint", "m/ct.ckpt", "--data", "d", "--variant", "HCR_T"]);
    assert_eq!(bad.status.code(), Some(1));
    ok(dir.path(), &["evaluate", "--checkpoint", "m/ct.ckpt", "--data", "d", "--variant", "CT"]);
}

#[test]
fn evaluate_rejects_mismatched_checkpoint() {
    let dir = workspace(SMALL);
    ok(dir.path(), &["simulate", "--config", "exp.ini", "--out", "d"]);
    ok(dir.path(), &["train", "--config", "exp.ini", "--data", "d", "--out", "m"]);
    ok(dir.path(), &["simulate", "--out", "big"]);
    let out = hcr(dir.path(), &["evaluate", "--checkpoint", "m/hcr.ckpt", "--data", "big"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn ablate_table_has_six_rows_per_seed_and_replays() {
    let dir = workspace(SMALL);
    let first = ok(dir.path(), &["ablate", "--config", "exp.ini", "--out", "a"]);
    ok(dir.path(), &["ablate", "--config", "exp.ini", "--out", "b"]);
    let table = fs::read_to_string(dir.path().join("a/ablation.csv")).unwrap();
    assert_eq!(table, fs::read_to_string(dir.path().join("b/ablation.csv")).unwrap());
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert_eq!(rows.len(), 6 * 2 + 6);
    for seed in ["1", "2", "mean"] {
        assert_eq!(rows.iter().filter(|r| r.split(',').nth(1) == Some(seed)).count(), 6);
    }
    assert_eq!(first.lines().count(), 1 + rows.len());
    let manifest = fs::read_to_string(dir.path().join("a/ablate.manifest")).unwrap();
    assert!(manifest.contains("file.seed_2.ct = a/seed_2/ct.ckpt"));
}

#[test]
fn oracle_check_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let pass = hcr(dir.path(), &["oracle-check"]);
    assert_eq!(pass.status.code(), Some(0));
    let stdout = String::from_utf8(pass.stdout).unwrap();
    let worst: f64 = stdout.lines().find_map(|l| l.strip_prefix("worst_error = ")).unwrap().parse().unwrap();
    assert!(worst <= 1e-10);

    assert_eq!(hcr(dir.path(), &["oracle-check", "--inject-fault"]).status.code(), Some(2));
    let none = hcr(dir.path(), &["oracle-check", "--seeds", "0"]);
    assert_eq!(none.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&none.stderr).contains("warning"));
    assert_eq!(hcr(dir.path(), &["oracle-check", "--dims", "9,2,2,2"]).status.code(), Some(1));
    assert_eq!(hcr(dir.path(), &["oracle-check", "--dims", "2,2"]).status.code(), Some(1));
}

#[test]
fn config_and_usage_errors_exit_one() {
    let dir = workspace("[world]\nnum_user = 3\n");
    assert_eq!(hcr(dir.path(), &["simulate", "--config", "exp.ini", "--out", "d"]).status.code(), Some(1));
    assert_eq!(hcr(dir.path(), &["simulate", "--config", "missing.ini", "--out", "d"]).status.code(), Some(1));
    assert_eq!(hcr(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(hcr(dir.path(), &["train", "--data", "nowhere", "--out", "m"]).status.code(), Some(1));
    assert_eq!(hcr(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn shipped_example_config_parses() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/small.ini");
    let cfg = hcr_core::config::ExperimentConfig::load(&path).unwrap();
    assert_eq!(cfg.runs.len(), 3);
    assert_eq!(cfg.seeds, vec![1, 2]);
}
