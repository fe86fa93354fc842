//! End-to-end runs of the `mkdvlab` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use mkdvlab::config::{ExperimentConfig, Kind};
use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mkdvlab"))
}

fn run(args: &[&str]) -> (i32, String) {
    let out = bin().args(args).output().expect("spawn mkdvlab");
    (out.status.code().expect("exit code"), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn run_config(cfg: &ExperimentConfig, dir: &Path) -> i32 {
    let path = dir.join(format!("{}.json", cfg.kind.name()));
    fs::write(&path, cfg.to_json()).unwrap();
    let out = cfg.out.to_str().unwrap().to_owned();
    run(&[cfg.kind.name(), "--config", path.to_str().unwrap(), "--out", &out]).0
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))).unwrap()
}

fn check<'a>(summary: &'a Value, name: &str) -> &'a Value {
    summary["checks"].as_array().unwrap().iter().find(|c| c["name"] == name).unwrap_or_else(|| panic!("no check {name}"))
}

#[test]
fn verify_passes_and_corrupted_profile_is_caught() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = ExperimentConfig::default_for(Kind::Verify);
    cfg.verify.samples = 3;
    cfg.out = tmp.path().join("clean");
    assert_eq!(run_config(&cfg, tmp.path()), 0);
    let s = json(cfg.out.join("summary.json"));
    assert!(s["checks"].as_array().unwrap().iter().all(|c| c["pass"] == true));

    cfg.verify.corrupt_amplitude = 1.01;
    cfg.out = tmp.path().join("corrupt");
    assert_eq!(run_config(&cfg, tmp.path()), 2);
    let s = json(cfg.out.join("summary.json"));
    assert_eq!(check(&s, "identity: flow")["pass"], false);
    assert_eq!(check(&s, "critical point H_c'(q)")["pass"], false);
    // Checks that do not see the profile are unaffected.
    assert_eq!(check(&s, "symplectic gram matrix")["pass"], true);
    assert!(json(cfg.out.join("manifest.json"))["checks_failed"].as_u64().unwrap() > 0);
}

#[test]
fn spectrum_reports_one_negative_direction() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("spec");
    let (code, err) = run(&["spectrum", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let s = json(out.join("summary.json"));
    assert_eq!(s["summary"]["n_negative"], 1);
    assert_eq!(s["summary"]["kernel_dim"], 2);
    assert!(s["summary"]["coercivity"]["constrained"].as_f64().unwrap() > 0.0);
    assert!(out.join("spectrum.csv").exists() && out.join("spectrum.svg").exists());
}

#[test]
fn manifest_records_config_and_outputs() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = ExperimentConfig::default_for(Kind::Effective);
    cfg.horizon = 0.3;
    cfg.seed = 7;
    cfg.out = tmp.path().join("eff");
    assert_eq!(run_config(&cfg, tmp.path()), 0);
    let m = json(cfg.out.join("manifest.json"));
    assert_eq!(m["schema"], 1);
    assert_eq!(m["tool"], "mkdvlab");
    assert_eq!(m["kind"], "effective");
    assert_eq!(m["status"], "complete");
    assert_eq!(m["config"]["seed"], 7);
    assert_eq!(m["config_sha256"].as_str().unwrap(), mkdvlab::config_hash(&cfg));
    let outputs = m["outputs"].as_array().unwrap();
    assert!(outputs.iter().any(|o| o == "trajectory.csv"));
    for o in outputs {
        assert!(cfg.out.join(o.as_str().unwrap()).exists(), "{o} listed but missing");
    }
    assert!(m["total_seconds"].as_f64().unwrap() >= 0.0);
    assert!(m.get("error").is_none());
}

#[test]
fn identical_configs_give_identical_bytes() {
    let tmp = TempDir::new().unwrap();
    for kind in [Kind::Effective, Kind::Spectrum] {
        let mut cfg = ExperimentConfig::default_for(kind);
        cfg.horizon = 0.3;
        let mut dirs = Vec::new();
        for i in 0..2 {
            cfg.out = tmp.path().join(format!("{}{i}", kind.name()));
            assert_eq!(run_config(&cfg, tmp.path()), 0);
            dirs.push(cfg.out.clone());
        }
        let mut names: Vec<_> = fs::read_dir(&dirs[0]).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        let mut compared = 0;
        for name in names {
            let n = name.to_str().unwrap();
            if n.ends_with(".csv") || n.ends_with(".svg") {
                assert_eq!(fs::read(dirs[0].join(n)).unwrap(), fs::read(dirs[1].join(n)).unwrap(), "{n} differs");
                compared += 1;
            }
        }
        assert!(compared >= 2);
    }
}

#[test]
fn binary_snapshots_read_back() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("sim");
    let mut cfg = ExperimentConfig::default_for(Kind::Simulate);
    cfg.horizon = 0.2;
    cfg.grid.n_points = Some(256);
    cfg.grid.snapshots = 4;
    cfg.out = out.clone();
    let path = tmp.path().join("sim.json");
    fs::write(&path, cfg.to_json()).unwrap();
    let (code, err) = run(&["simulate", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap(), "--format", "binary"]);
    assert_eq!(code, 0, "{err}");
    let snaps = mkdv_core::io::read_snapshots_binary(fs::File::open(out.join("snapshots.bin")).unwrap()).unwrap();
    assert!(snaps.len() >= 2);
    assert!(snaps.iter().all(|s| s.values.len() == 256));
}

#[test]
fn invalid_input_exits_one() {
    let tmp = TempDir::new().unwrap();
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"kind":"effective","horizon":1.0,"bogus":3}"#).unwrap();
    let (code, err) = run(&["effective", "--config", bad.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(err.contains("bogus"), "{err}");

    let out = tmp.path().join("neg");
    let (code, err) = run(&["effective", "--h=-0.5", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(err.contains("positive"), "{err}");

    let (code, _) = run(&["effective", "--potential", "listex9", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 1);

    fs::write(&bad, ExperimentConfig::default_for(Kind::Spectrum).to_json()).unwrap();
    let (code, err) = run(&["effective", "--config", bad.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(err.contains("does not match"), "{err}");
}

#[test]
fn failed_run_leaves_marker_and_a_rerun_clears_it() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = ExperimentConfig::default_for(Kind::Simulate);
    cfg.horizon = 0.5;
    cfg.grid.n_points = Some(256);
    // Far above the stability limit of the explicit stages.
    cfg.grid.dt = Some(0.5);
    cfg.out = tmp.path().join("run");
    assert_eq!(run_config(&cfg, tmp.path()), 1);
    let marker = cfg.out.join(mkdvlab::FAILURE_MARKER);
    assert!(fs::read_to_string(&marker).unwrap().contains("blew up"));
    let m = json(cfg.out.join("manifest.json"));
    assert_eq!(m["status"], "failed");
    assert!(m["error"].as_str().unwrap().contains("blew up"));

    cfg.grid.dt = None;
    cfg.horizon = 0.1;
    assert_eq!(run_config(&cfg, tmp.path()), 0);
    assert!(!marker.exists());
    assert_eq!(json(cfg.out.join("manifest.json"))["status"], "complete");
}

#[test]
fn printed_config_parses_back() {
    for kind in [Kind::Simulate, Kind::Effective, Kind::Compare, Kind::Spectrum, Kind::Verify, Kind::Crossing] {
        let out = bin().args([kind.name(), "--print-config", "--h", "0.25", "--seed", "3"]).output().unwrap();
        assert!(out.status.success());
        let cfg = ExperimentConfig::from_json(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
        assert_eq!(cfg.kind, kind);
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.scales(), vec![0.25]);
    }
}
