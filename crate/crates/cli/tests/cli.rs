use std::path::Path;
use std::process::{Command, Output};

fn hoidet(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hoidet"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn synth(dir: &Path) {
    let o = hoidet(dir, &["synth", "--out", "data", "--seed", "3", "--n-train", "20", "--n-test", "10"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn help_and_version_succeed() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&hoidet(dir.path(), &["--help"])), 0);
    assert_eq!(code(&hoidet(dir.path(), &["eval", "--help"])), 0);
    let v = hoidet(dir.path(), &["--version"]);
    assert_eq!(code(&v), 0);
    assert!(String::from_utf8_lossy(&v.stdout).contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["frobnicate"][..],
        &["synth"],
        &["synth", "--out", "x", "--bogus"],
        &["--threads", "0", "stats", "x"],
        &["stats", "does-not-exist"],
        &["train", "--dataset", "x", "--proposals", "y", "--preset", "nope", "--out", "m"],
    ] {
        let o = hoidet(dir.path(), args);
        assert_eq!(code(&o), 2, "{args:?}: {}", stderr(&o));
        assert!(stderr(&o).starts_with("hoidet: error[usage]:"), "{}", stderr(&o));
        assert_eq!(stderr(&o).lines().count(), 1);
    }
}

#[test]
fn synth_then_stats_matches_declaration() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let root = dir.path().join("data");
    for f in ["manifest.json", "declared.json", "train/annotations.jsonl", "test/detections.txt"] {
        assert!(root.join(f).is_file(), "missing {f}");
    }
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(root.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "synth");
    assert_eq!(manifest["seeds"]["synth"], 3);
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);

    let o = hoidet(dir.path(), &["stats", "data"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    // a declaration that disagrees with the data is a validation failure
    let mut declared: serde_json::Value =
        serde_json::from_slice(&std::fs::read(root.join("declared.json")).unwrap()).unwrap();
    declared["train"]["images"] = 999.into();
    std::fs::write(root.join("declared.json"), declared.to_string()).unwrap();
    let o = hoidet(dir.path(), &["stats", "data"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).starts_with("hoidet: error[validation]:"));
}

#[test]
fn malformed_inputs_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    std::fs::write(dir.path().join("bad.props"), "# HOIDET-PROPOSALS v1\nnot a proposal line\n").unwrap();
    let o = hoidet(
        dir.path(),
        &["score", "--dataset", "data/test", "--proposals", "bad.props", "--random", "1", "--out", "s.txt"],
    );
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(!dir.path().join("s.txt").exists());
}

#[test]
fn random_baseline_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let run = |args: &[&str]| {
        let o = hoidet(dir.path(), args);
        assert_eq!(code(&o), 0, "{args:?}: {}", stderr(&o));
        String::from_utf8(o.stdout).unwrap()
    };
    run(&["propose", "--dataset", "data/test", "--detections", "data/test/detections.txt", "--out", "p.txt"]);
    run(&["score", "--dataset", "data/test", "--proposals", "p.txt", "--random", "5", "--out", "s.txt"]);
    for (setting, out) in [("default", "d.json"), ("known-object", "k.json")] {
        run(&[
            "eval", "--dataset", "data/test", "--scores", "s.txt", "--rare-from", "data/train", "--setting", setting,
            "--out", out,
        ]);
    }
    let full = |f: &str| {
        let v: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join(f)).unwrap()).unwrap();
        v["full"].as_f64().unwrap()
    };
    assert!(full("d.json") <= full("k.json"));
    assert!(dir.path().join("s.txt.manifest.json").is_file());
    let table = run(&["ttest", "k.json", "d.json"]);
    assert!(table.contains("k-d"), "{table}");
}
