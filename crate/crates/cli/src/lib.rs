//! Experiment runner for the mKdV double-soliton laboratory.
//!
//! [`execute`] runs one experiment into its output directory and always
//! leaves a `manifest.json` behind; a failed run also leaves a `FAILED`
//! marker next to whatever partial output it produced.

pub mod config;
pub mod experiments;
pub mod svg;

use std::fs;
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use config::ExperimentConfig;
use experiments::{CheckResult, RunDir};

pub const MANIFEST_SCHEMA: u32 = 1;
pub const FAILURE_MARKER: &str = "FAILED";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    /// Run complete and every check passed.
    Ok,
    /// Run complete with at least one failing check.
    ChecksFailed,
}

impl Status {
    pub fn exit_code(self) -> u8 {
        match self {
            Status::Ok => 0,
            Status::ChecksFailed => 2,
        }
    }
}

#[derive(Debug, Serialize)]
struct Stage {
    name: String,
    seconds: f64,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    schema: u32,
    tool: &'static str,
    version: &'static str,
    core_version: &'static str,
    kind: &'static str,
    status: &'static str,
    config_sha256: String,
    config: &'a ExperimentConfig,
    outputs: Vec<String>,
    checks_total: usize,
    checks_failed: usize,
    total_seconds: f64,
    stages: Vec<Stage>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

/// SHA-256 of the compact JSON serialisation.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let bytes = serde_json::to_vec(cfg).expect("config serialises");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    kind: &'static str,
    checks: &'a [CheckResult],
    summary: &'a Value,
}

/// Runs `cfg`, writing artifacts, `summary.json` and `manifest.json` into `cfg.out`.
pub fn execute(cfg: &ExperimentConfig) -> Result<Status> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    let marker = cfg.out.join(FAILURE_MARKER);
    if marker.exists() {
        fs::remove_file(&marker)?;
    }
    let start = Instant::now();
    let mut dir = RunDir::new(cfg.out.clone());
    let result = experiments::run(cfg, &mut dir);
    let mut manifest = Manifest {
        schema: MANIFEST_SCHEMA,
        tool: "mkdvlab",
        version: env!("CARGO_PKG_VERSION"),
        core_version: mkdv_core::VERSION,
        kind: cfg.kind.name(),
        status: "complete",
        config_sha256: config_hash(cfg),
        config: cfg,
        outputs: Vec::new(),
        checks_total: 0,
        checks_failed: 0,
        total_seconds: 0.0,
        stages: Vec::new(),
        error: None,
    };
    let status = match &result {
        Ok(outcome) => {
            let s = Summary { kind: cfg.kind.name(), checks: &outcome.checks, summary: &outcome.summary };
            let mut w = dir.create("summary.json")?;
            serde_json::to_writer_pretty(&mut w, &s)?;
            std::io::Write::flush(&mut w)?;
            manifest.checks_total = outcome.checks.len();
            manifest.checks_failed = outcome.checks.iter().filter(|c| !c.pass).count();
            if manifest.checks_failed == 0 {
                Status::Ok
            } else {
                Status::ChecksFailed
            }
        }
        Err(e) => {
            let message = format!("{e:#}");
            fs::write(&marker, format!("{message}\n"))?;
            manifest.status = "failed";
            manifest.error = Some(message);
            Status::ChecksFailed
        }
    };
    manifest.outputs = dir.files.clone();
    manifest.stages = dir.stages.iter().map(|(n, s)| Stage { name: n.clone(), seconds: *s }).collect();
    manifest.total_seconds = start.elapsed().as_secs_f64();
    fs::write(cfg.out.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    result.map(|_| status)
}
