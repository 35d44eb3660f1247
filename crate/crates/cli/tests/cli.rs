use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn forge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_forge"))
        .args(args)
        .env_remove("FORGE_SEED")
        .output()
        .expect("forge runs")
}

fn ok(args: &[&str]) -> String {
    let out = forge(args);
    assert!(
        out.status.success(),
        "forge {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, extra: &[&str]) -> String {
    let data = dir.join("data");
    let mut args = vec!["synth", "--out", s(&data), "--seed", "4", "--preset", "planted"];
    args.extend_from_slice(extra);
    ok(&args).trim().to_string()
}

fn small_synth(dir: &Path) -> String {
    synth(dir, &["--participants", "16", "--days", "12"])
}

#[test]
fn stage_by_stage_commands_chain() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = small_synth(dir.path());
    assert!(Path::new(&manifest).exists());

    let merged = dir.path().join("merged.csv");
    let report = ok(&["ingest", "--manifest", &manifest, "--out", s(&merged)]);
    let report: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(report["participants"], 16);

    let clean = dir.path().join("clean.csv");
    let log = ok(&["preprocess", "--input", s(&merged), "--out", s(&clean), "--variant", "without"]);
    assert!(log.contains("impute"), "{log}");

    let balanced = dir.path().join("balanced.csv");
    let text = ok(&["balance", "--input", s(&clean), "--out", s(&balanced), "--seed", "1", "--k", "3"]);
    assert!(text.contains("synthetic rows"));

    let model = dir.path().join("model.json");
    ok(&["train", "--input", s(&balanced), "--model", s(&model), "--seed", "1", "--trees", "10"]);
    let ranked = ok(&["rank", "--model", s(&model), "--input", s(&clean), "--k", "5"]);
    assert!(ranked.starts_with("rank,feature,modality,importance"));
    assert_eq!(ranked.lines().filter(|l| l.starts_with(|c: char| c.is_ascii_digit())).count(), 5);

    let out = dir.path().join("eval");
    let text = ok(&["evaluate", "--model", s(&model), "--input", s(&clean), "--out", s(&out)]);
    assert!(text.contains("accuracy"));
    assert!(out.join("report.json").exists());
}

#[test]
fn run_is_reproducible_and_matrix_writes_comparison() {
    let dir = tempfile::tempdir().unwrap();
    // Full preset size so the rarest class has enough rows for k = 5.
    let manifest = synth(dir.path(), &[]);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        ok(&["run", "--manifest", &manifest, "--out", s(out), "--seed", "3", "--trees", "10", "--smote", "after"]);
    }
    for f in ["report.json", "ranking.csv", "provenance.json", "config.toml"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let m = dir.path().join("m");
    let table = ok(&["matrix", "--manifest", &manifest, "--out", s(&m), "--seed", "3", "--trees", "10"]);
    assert!(table.starts_with("scenario,accuracy"));
    assert!(m.join("comparison.csv").exists());
}

#[test]
fn seed_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_forge"))
        .args(["synth", "--out", s(&dir.path().join("d")), "--preset", "planted", "--participants", "3", "--days", "4"])
        .env("FORGE_SEED", "9")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    // No seed anywhere: usage error.
    let out = forge(&["synth", "--out", s(&dir.path().join("d"))]);
    assert_eq!(out.status.code(), Some(2));
    // Unknown flag: clap usage error.
    assert_eq!(forge(&["run", "--bogus"]).status.code(), Some(2));
    // Invalid config value: configuration error before any work.
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "seed = 1\ntest_fraction = 0.0\n").unwrap();
    let out = forge(&["run", "--manifest", "missing.json", "--out", s(&dir.path().join("o")), "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("test_fraction"));
    // Missing input data: stage error.
    let out = forge(&["run", "--manifest", "missing.json", "--out", s(&dir.path().join("o")), "--seed", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ingest"));
}
