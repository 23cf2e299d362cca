use std::path::Path;
use std::process::{Command, Output};

fn hilp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hilp")).args(args).output().expect("binary runs")
}

fn tree_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn synth_twice_is_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let out = hilp(&["synth", "--counties", "5", "--hours", "2000", "--seed", "7", "--out-dir", d.path().to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let (ta, tb) = (tree_bytes(a.path()), tree_bytes(b.path()));
    assert_eq!(ta.len(), 6);
    assert!(ta == tb);
}

#[test]
fn evaluate_before_train_asks_for_train() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    assert!(hilp(&["synth", "--counties", "3", "--hours", "600", "--out-dir", d]).status.success());
    let cfg = dir.path().join("config.toml");
    let out = hilp(&["evaluate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("run train first"), "{err}");
}

#[test]
fn stages_chain_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    assert!(hilp(&["synth", "--counties", "3", "--hours", "600", "--out-dir", d]).status.success());
    let cfg = dir.path().join("config.toml");
    let cfg = cfg.to_str().unwrap();
    let out_dir = dir.path().join("run");
    let out_dir = out_dir.to_str().unwrap();
    let steps: [&[&str]; 5] = [
        &["ingest"],
        &["impute", "--k", "5", "--impute-targets=false"],
        &["hilp", "--alpha", "0.7", "--analogs-per-seed", "10", "--season-window", "1"],
        &["features"],
        &["rebalance", "--tau", "380", "--k", "5", "--oversample", "1", "--undersample", "0.5", "--noise", "0.02"],
    ];
    for step in steps {
        let stage = step[0];
        let mut args = step.to_vec();
        args.extend(["--config", cfg, "--out-dir", out_dir]);
        let out = hilp(&args);
        assert!(out.status.success(), "{stage}: {}", String::from_utf8_lossy(&out.stderr));
    }
    assert!(dir.path().join("run/manifests/rebalance.json").exists());
    assert!(dir.path().join("run/rebalance/train.csv").exists());
}

#[test]
fn bad_usage_is_a_user_error() {
    assert_eq!(hilp(&["ingest"]).status.code(), Some(1));
    assert_eq!(hilp(&["ingest", "--config", "/nonexistent/config.toml"]).status.code(), Some(1));
    assert_eq!(hilp(&["--help"]).status.code(), Some(0));
}
