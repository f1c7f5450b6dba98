use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn linkfdr(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_linkfdr")).current_dir(dir).args(args).output().expect("spawn linkfdr")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = linkfdr(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn output_hashes(manifest: &Path) -> serde_json::Value {
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(manifest).unwrap()).unwrap();
    m["outputs"].clone()
}

#[test]
fn simulate_is_reproducible_and_refuses_overwrite() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["--seed", "4", "--out", "a", "simulate", "-n", "2000"]);
    ok(d, &["--seed", "4", "--out", "b", "simulate", "-n", "2000"]);
    assert_eq!(fs::read(d.join("a/calibrated.fdr")).unwrap(), fs::read(d.join("b/calibrated.fdr")).unwrap());
    let strip = |v: serde_json::Value| v.as_array().unwrap().iter().map(|f| f["sha256"].clone()).collect::<Vec<_>>();
    assert_eq!(
        strip(output_hashes(&d.join("a/simulate.manifest.json"))),
        strip(output_hashes(&d.join("b/simulate.manifest.json")))
    );

    let before = fs::read(d.join("a/calibrated.csv")).unwrap();
    let refused = linkfdr(d, &["--seed", "5", "--out", "a", "simulate", "-n", "2000"]);
    assert!(!refused.status.success());
    assert!(String::from_utf8_lossy(&refused.stderr).contains("--force"));
    assert_eq!(fs::read(d.join("a/calibrated.csv")).unwrap(), before);
    ok(d, &["--seed", "5", "--out", "a", "--force", "simulate", "-n", "2000"]);
    assert_ne!(fs::read(d.join("a/calibrated.csv")).unwrap(), before);
}

#[test]
fn simulate_all_writes_every_preset() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["--out", "s", "simulate", "--preset", "all", "-n", "1000"]);
    for name in ["synth-ch1", "synth-ch5", "synth-ch9", "synth-ch13"] {
        assert!(dir.path().join(format!("s/{name}.fdr")).is_file(), "{name}");
    }
    let all: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("s/all.json")).unwrap()).unwrap();
    assert_eq!(all["samples"], 4000);
    assert_eq!(all["parts"].as_array().unwrap().len(), 4);
}

#[test]
fn prepare_rejects_a_short_trace() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["--out", "s", "simulate", "-n", "300"]);
    let out = linkfdr(dir.path(), &["--desk-scale", "--out", "d", "prepare", "s/calibrated.fdr"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("calibrated.fdr") && err.contains("400"), "{err}");
    assert!(!dir.path().join("d").exists());
}

#[test]
fn import_normalises_a_text_trace() {
    let dir = tempfile::tempdir().unwrap();
    let rows: String = (0..300).map(|i| format!("{i},{}\n", u8::from(i % 7 != 0))).collect();
    fs::write(dir.path().join("link.csv"), format!("idx,outcome\n{rows}")).unwrap();
    ok(dir.path(), &["--out", "i", "import", "link.csv", "--channel", "13"]);
    let stats: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("i/link.stats.json")).unwrap()).unwrap();
    assert!(stats.is_object());
    assert!(dir.path().join("i/link.fdr").is_file());
}

#[test]
fn train_evaluate_profile() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["--seed", "1", "--out", "s", "simulate", "-n", "3000"]);
    let data = ["--window", "24", "--horizon", "30", "--stride", "4"];
    ok(d, &[&["--desk-scale", "--out", "d", "prepare", "s/calibrated.fdr"], &data[..]].concat());

    let mismatch = linkfdr(d, &["--desk-scale", "--out", "r", "train", "--dataset", "d/dataset.json"]);
    assert!(!mismatch.status.success());
    assert!(String::from_utf8_lossy(&mismatch.stderr).contains("--window 24"));

    let train = ["--desk-scale", "--out", "r", "train", "--dataset", "d/dataset.json", "--window", "24", "--epochs", "4", "--filters", "4"];
    ok(d, &train);
    let ckpt = "r/cnn-ch/checkpoint.json";
    assert!(d.join(ckpt).is_file());
    assert_eq!(fs::read_to_string(d.join("r/cnn-ch/history.csv")).unwrap().lines().count(), 5);

    let table = ok(d, &["--out", "e", "evaluate", "--dataset", "d/dataset.json", "--checkpoint", ckpt]);
    assert!(table.contains("clamped") && table.contains("raw"));
    let csv = fs::read_to_string(d.join("e/metrics.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    assert_eq!(header[..4], ["test_channel", "condition", "model", "prediction"]);
    assert_eq!(header.len(), 19);
    assert_eq!(csv.lines().count(), 3);

    ok(d, &["--out", "p", "profile", "--checkpoint", ckpt, "--repetitions", "100"]);
    let profile = fs::read_to_string(d.join("p/profile.csv")).unwrap();
    assert!(profile.starts_with("model,condition,mean_ms,mem_mb,peak_mb\n"));
    assert_eq!(profile.lines().count(), 2);
    let too_few = linkfdr(d, &["--out", "p2", "profile", "--checkpoint", ckpt, "--repetitions", "10"]);
    assert!(!too_few.status.success());
}

#[test]
fn config_file_values_sit_below_flags() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "seed = 11\n[simulate]\nsamples = 1500\n").unwrap();
    ok(dir.path(), &["--config", "c.toml", "--out", "a", "simulate"]);
    ok(dir.path(), &["--config", "c.toml", "--seed", "11", "--out", "b", "simulate", "-n", "1500"]);
    assert_eq!(fs::read(dir.path().join("a/calibrated.fdr")).unwrap(), fs::read(dir.path().join("b/calibrated.fdr")).unwrap());
    ok(dir.path(), &["--config", "c.toml", "--out", "c", "simulate", "-n", "900"]);
    let text = fs::read_to_string(dir.path().join("c/calibrated.csv")).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with(|c: char| c.is_ascii_digit())).count(), 900);

    fs::write(dir.path().join("bad.toml"), "[model]\nunknown = 1\n").unwrap();
    let out = linkfdr(dir.path(), &["--config", "bad.toml", "simulate"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.toml"));
}
