//! End-to-end tests of the `gaitmixer` binary: every subcommand, exit code
//! classes, determinism of written artifacts, and resume behavior.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_gaitmixer"));
    // Keep the env-var fallback from leaking between tests.
    c.env_remove("GAITMIXER_OUT");
    c
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("spawn gaitmixer");
    assert!(
        out.status.success(),
        "gaitmixer {args:?} failed:\n{}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn run_err(args: &[&str]) -> (i32, String) {
    let out = bin().args(args).output().expect("spawn gaitmixer");
    assert!(!out.status.success(), "gaitmixer {args:?} unexpectedly passed");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

const TINY_CONFIG: &str = r#"
seed = 7

[model]
frames = 60
d_model = 16
heads = 2
spatial_blocks = 1
temporal_blocks = 1
kernel_size = 9
mlp_ratio = 2.0
embedding_dim = 8

[data.synth]
subjects = 3
nm_seqs = 6
bg_seqs = 1
cl_seqs = 1
frames = 66

[train]
p = 2
k = 2
steps = 12
checkpoint_interval = 6
"#;

/// Shared fixture: one synthesized dataset and one trained checkpoint.
struct Fixture {
    _dir: tempfile::TempDir,
    config: PathBuf,
    train_out: PathBuf,
}

fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let dir = tempfile::tempdir().expect("tempdir");
        let config = dir.path().join("tiny.toml");
        std::fs::write(&config, TINY_CONFIG).unwrap();
        let synth_out = dir.path().join("synth");
        run_ok(&[
            "synth",
            "--config",
            config.to_str().unwrap(),
            "--out",
            synth_out.to_str().unwrap(),
        ]);
        let train_out = dir.path().join("train");
        run_ok(&[
            "train",
            "--config",
            synth_out.join("resolved.toml").to_str().unwrap(),
            "--out",
            train_out.to_str().unwrap(),
        ]);
        Fixture {
            _dir: dir,
            config,
            train_out,
        }
    })
}

fn dir_snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut entries: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().into_string().unwrap(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    entries.sort_by(|a, b| a.0.cmp(&b.0));
    entries
}

#[test]
fn synth_counts_and_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        run_ok(&[
            "synth",
            "--subjects",
            "10",
            "--seqs",
            "10",
            "--frames",
            "64",
            "--seed",
            "3",
            "--out",
            out.to_str().unwrap(),
        ]);
    }
    let files = dir_snapshot(&a.join("data"));
    // 100 sequence files plus the manifest.
    assert_eq!(files.len(), 101);
    assert!(files.iter().any(|(n, _)| n == "manifest.jsonl"));
    assert_eq!(files, dir_snapshot(&b.join("data")));

    // The resolved config alone reproduces the dataset byte for byte.
    let c = dir.path().join("c");
    run_ok(&[
        "synth",
        "--config",
        a.join("resolved.toml").to_str().unwrap(),
        "--out",
        c.to_str().unwrap(),
    ]);
    assert_eq!(files, dir_snapshot(&c.join("data")));
}

#[test]
fn synth_rejects_single_subject_with_config_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stderr) = run_err(&[
        "synth",
        "--subjects",
        "1",
        "--out",
        dir.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(code, 2, "{stderr}");
}

#[test]
fn env_var_provides_the_output_root() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .env("GAITMIXER_OUT", dir.path())
        .args(["synth", "--subjects", "2", "--seqs", "2", "--frames", "62"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("synth/data/manifest.jsonl").exists());
}

#[test]
fn train_writes_logs_and_checkpoints() {
    let fx = fixture();
    assert!(fx.train_out.join("model.ckpt").exists());
    assert!(fx.train_out.join("ckpt-000006.ckpt").exists());
    assert!(fx.train_out.join("resolved.toml").exists());
    let log = std::fs::read_to_string(fx.train_out.join("train_log.jsonl")).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines.len(), 12);
    let first: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
    assert_eq!(first["step"], 0);
    assert!(first["loss"].as_f64().unwrap().is_finite());
}

#[test]
fn resume_replays_the_uninterrupted_run_bitwise() {
    let fx = fixture();
    let dir = tempfile::tempdir().unwrap();
    let resumed = dir.path().join("resumed");
    run_ok(&[
        "train",
        "--config",
        fx.train_out.join("resolved.toml").to_str().unwrap(),
        "--out",
        resumed.to_str().unwrap(),
        "--resume",
        fx.train_out.join("ckpt-000006.ckpt").to_str().unwrap(),
    ]);
    let full = std::fs::read_to_string(fx.train_out.join("train_log.jsonl")).unwrap();
    let tail: Vec<&str> = full.lines().skip(6).collect();
    let resumed_log = std::fs::read_to_string(resumed.join("train_log.jsonl")).unwrap();
    let resumed_lines: Vec<&str> = resumed_log.lines().collect();
    assert_eq!(tail, resumed_lines);
    assert_eq!(
        std::fs::read(fx.train_out.join("model.ckpt")).unwrap(),
        std::fs::read(resumed.join("model.ckpt")).unwrap()
    );
}

#[test]
fn resume_under_a_conflicting_model_config_is_a_hard_error() {
    let fx = fixture();
    let dir = tempfile::tempdir().unwrap();
    let (code, stderr) = run_err(&[
        "train",
        "--config",
        fx.train_out.join("resolved.toml").to_str().unwrap(),
        "--out",
        dir.path().join("x").to_str().unwrap(),
        "--variant",
        "gaitformer",
        "--resume",
        fx.train_out.join("ckpt-000006.ckpt").to_str().unwrap(),
    ]);
    assert_eq!(code, 1, "{stderr}");
    assert!(stderr.contains("different model config"), "{stderr}");
}

#[test]
fn eval_is_deterministic_and_consistent_with_its_records() {
    let fx = fixture();
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        run_ok(&[
            "eval",
            "--config",
            fx.train_out.join("resolved.toml").to_str().unwrap(),
            "--checkpoint",
            fx.train_out.join("model.ckpt").to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
    }
    assert_eq!(
        std::fs::read(a.join("eval_records.jsonl")).unwrap(),
        std::fs::read(b.join("eval_records.jsonl")).unwrap()
    );
    assert_eq!(
        std::fs::read(a.join("eval_table.txt")).unwrap(),
        std::fs::read(b.join("eval_table.txt")).unwrap()
    );

    // Recompute a condition mean from the records file and find it printed
    // in the table.
    let records = std::fs::read_to_string(a.join("eval_records.jsonl")).unwrap();
    let mut by_view: std::collections::BTreeMap<u64, Vec<f64>> = Default::default();
    for line in records.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        if v["condition"] == "NM" {
            by_view
                .entry(v["probe_view"].as_u64().unwrap())
                .or_default()
                .push(v["accuracy"].as_f64().unwrap());
        }
    }
    assert!(!by_view.is_empty());
    let row_means: Vec<f64> = by_view
        .values()
        .map(|cells| cells.iter().sum::<f64>() / cells.len() as f64)
        .collect();
    let nm_mean = row_means.iter().sum::<f64>() / row_means.len() as f64;
    let table = std::fs::read_to_string(a.join("eval_table.txt")).unwrap();
    let printed = format!("{:.2}", nm_mean * 100.0);
    assert!(table.contains(&printed), "mean {printed} not in:\n{table}");
}

#[test]
fn eval_condition_flag_restricts_rows() {
    let fx = fixture();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nm_only");
    run_ok(&[
        "eval",
        "--config",
        fx.train_out.join("resolved.toml").to_str().unwrap(),
        "--checkpoint",
        fx.train_out.join("model.ckpt").to_str().unwrap(),
        "--conditions",
        "NM",
        "--out",
        out.to_str().unwrap(),
    ]);
    let table = std::fs::read_to_string(out.join("eval_table.txt")).unwrap();
    assert!(table.contains("NM"));
    assert!(!table.contains("BG"));
    assert!(!table.contains("CL"));
    let records = std::fs::read_to_string(out.join("eval_records.jsonl")).unwrap();
    for line in records.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["condition"], "NM");
    }
}

#[test]
fn analyze_writes_figures_with_sidecars_deterministically() {
    let fx = fixture();
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        run_ok(&[
            "analyze",
            "--config",
            fx.train_out.join("resolved.toml").to_str().unwrap(),
            "--checkpoint",
            fx.train_out.join("model.ckpt").to_str().unwrap(),
            "--samples",
            "0",
            "--channel-count",
            "3",
            "--out",
            out.to_str().unwrap(),
        ]);
    }
    // resolved.toml records its own out_dir, so it differs by construction;
    // every analysis artifact must match byte for byte.
    let artifacts = |dir: &Path| {
        let mut files = dir_snapshot(dir);
        files.retain(|(n, _)| n != "resolved.toml");
        files
    };
    let files = artifacts(&a);
    let pngs: Vec<&str> = files
        .iter()
        .filter(|(n, _)| n.ends_with(".png"))
        .map(|(n, _)| n.as_str())
        .collect();
    // 3 spectra + 1 attribution map, each with a JSON sidecar.
    assert_eq!(pngs.len(), 4, "{pngs:?}");
    for (name, _) in &files {
        if let Some(stem) = name.strip_suffix(".png") {
            assert!(
                files.iter().any(|(n, _)| n == &format!("{stem}.json")),
                "{name} lacks a sidecar"
            );
        }
    }
    assert!(files.iter().any(|(n, _)| n == "highfreq.json"));
    assert_eq!(files, artifacts(&b));
}

#[test]
fn analyze_rejects_unknown_layers_listing_valid_hooks() {
    let fx = fixture();
    let dir = tempfile::tempdir().unwrap();
    let (code, stderr) = run_err(&[
        "analyze",
        "--config",
        fx.train_out.join("resolved.toml").to_str().unwrap(),
        "--checkpoint",
        fx.train_out.join("model.ckpt").to_str().unwrap(),
        "--layer",
        "bogus.layer",
        "--out",
        dir.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(code, 2, "{stderr}");
    assert!(stderr.contains("spatial.block0.out"), "{stderr}");
    assert!(stderr.contains("temporal.block0.out"), "{stderr}");
}

#[test]
fn inspect_checkpoint_prints_the_header() {
    let fx = fixture();
    let out = run_ok(&[
        "inspect-checkpoint",
        "--checkpoint",
        fx.train_out.join("model.ckpt").to_str().unwrap(),
    ]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("variant: gaitmixer"), "{text}");
    assert!(text.contains("step: 12"), "{text}");
    assert!(text.contains("spatial.token_proj.weight"), "{text}");
}

#[test]
fn unknown_config_keys_fail_with_config_exit_code() {
    let fx = fixture();
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "definitely_not_a_key = 1\n").unwrap();
    let (code, stderr) = run_err(&[
        "synth",
        "--config",
        bad.to_str().unwrap(),
        "--out",
        dir.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(code, 2, "{stderr}");
    // And the fixture config (known good) parses: sanity-check the harness.
    assert!(fx.config.exists());
}
