#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Scenario runner for the chemotaxis experiments: configuration, batch execution
//! and artifact manifests.

use std::collections::HashSet;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

pub mod config;
pub mod output;
pub mod plot;
pub mod scenarios;

pub use config::{BatchConfig, ScenarioConfig, ScenarioKind};
pub use output::{verify_manifest, RunManifest, Status, Verdict};

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] chemotaxis_core::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

fn check_label(label: &str) -> Result<(), LabError> {
    if label.is_empty() || label == "." || label == ".." || label.contains(['/', '\\']) {
        return Err(LabError::Config(format!("label '{label}' cannot name a directory")));
    }
    Ok(())
}

/// Runs one scenario into `out_root/<label>`. Failures end up in the manifest's
/// `error` field; an error is returned only when not even the manifest can be written.
pub fn run_scenario(cfg: &ScenarioConfig, out_root: &Path) -> Result<RunManifest, LabError> {
    let cfg = &cfg.resolved();
    let label = cfg.label();
    check_label(&label)?;
    let config = cfg.to_toml();
    let mut manifest = RunManifest {
        scenario: cfg.scenario.id().to_string(),
        label: label.clone(),
        tool_version: TOOL_VERSION.to_string(),
        input_hash: output::sha256_hex(config.as_bytes()),
        config,
        files: Vec::new(),
        wall_seconds: 0.0,
        verdicts: Vec::new(),
        error: None,
    };
    let mut artifacts = output::Artifacts::create(&out_root.join(&label))?;
    let start = Instant::now();
    let result = cfg.validate().and_then(|()| scenarios::dispatch(cfg, &mut artifacts));
    manifest.wall_seconds = start.elapsed().as_secs_f64();
    match result {
        Ok(v) => manifest.verdicts = v,
        Err(e) => manifest.error = Some(format!("{}: {e}", cfg.scenario)),
    }
    artifacts.finish(manifest)
}

/// Runs independent scenarios on up to `parallel` threads, in input order.
pub fn run_batch(configs: &[ScenarioConfig], out_root: &Path, parallel: usize) -> Result<Vec<RunManifest>, LabError> {
    let mut seen = HashSet::new();
    for c in configs {
        let label = c.label();
        check_label(&label)?;
        if !seen.insert(label.clone()) {
            return Err(LabError::Config(format!("duplicate label '{label}' in batch")));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel.max(1))
        .build()
        .map_err(|e| LabError::Config(e.to_string()))?;
    pool.install(|| configs.par_iter().map(|c| run_scenario(c, out_root)).collect())
}

/// One configuration per desk experiment.
pub fn catalogue() -> Vec<ScenarioConfig> {
    let with = |kind, label: &str, f: &dyn Fn(&mut ScenarioConfig)| {
        let mut c = ScenarioConfig::new(kind);
        c.label = Some(label.to_string());
        f(&mut c);
        c
    };
    let mut out = vec![with(ScenarioKind::Shoot, "shoot-d13", &|_| {})];
    for d in 5..=13 {
        out.push(with(ScenarioKind::Dichotomy, &format!("dichotomy-d{d}"), &|c| c.dim = Some(d)));
    }
    out.push(with(ScenarioKind::StationaryVerify, "stationary-verify", &|_| {}));
    out.push(with(ScenarioKind::EvolveLambda, "evolve-lambda-0.5", &|c| c.lambda = Some(0.5)));
    out.push(with(ScenarioKind::EvolveLambda, "evolve-lambda-1.5", &|c| c.lambda = Some(1.5)));
    out.push(with(ScenarioKind::EvolveLambda, "evolve-lambda-1.6-1.2", &|c| {
        c.lambda = Some(1.6);
        c.lambda_w = Some(1.2);
    }));
    for kind in [
        ScenarioKind::Theorem2Containment,
        ScenarioKind::BarrierResiduals,
        ScenarioKind::ComparisonSuite,
        ScenarioKind::EnvelopeCheck,
    ] {
        out.push(with(kind, kind.id(), &|_| {}));
    }
    out
}
