use std::fs;
use std::path::Path;
use std::process::Command;

use chemolab::config::ScenarioConfig;
use chemolab::{run_batch, run_scenario, verify_manifest, BatchConfig, ScenarioKind, Status};

const BIN: &str = env!("CARGO_BIN_EXE_chemolab");

fn quick(kind: ScenarioKind) -> ScenarioConfig {
    let mut c = ScenarioConfig::new(kind);
    c.comparison.pairs = 3;
    c.blowup.bundles = 4;
    c.blowup.n_r = 20;
    c.blowup.n_t = 20;
    c
}

fn read_csvs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn every_file_is_in_the_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    for kind in [ScenarioKind::EnvelopeCheck, ScenarioKind::BarrierResiduals, ScenarioKind::Shoot] {
        let m = run_scenario(&quick(kind), tmp.path()).unwrap();
        assert!(m.error.is_none(), "{kind}: {:?}", m.error);
        assert!(!m.files.is_empty());
        let problems = verify_manifest(&tmp.path().join(kind.id())).unwrap();
        assert!(problems.is_empty(), "{kind}: {problems:?}");
        assert_eq!(m.input_hash.len(), 64);
        let echoed = ScenarioConfig::from_toml(&m.config).unwrap();
        assert_eq!(echoed, quick(kind).resolved());
        assert_eq!(echoed.resolved(), echoed);
    }
}

#[test]
fn tampering_is_detected() {
    let tmp = tempfile::tempdir().unwrap();
    run_scenario(&quick(ScenarioKind::EnvelopeCheck), tmp.path()).unwrap();
    let dir = tmp.path().join("envelope-check");
    fs::write(dir.join("envelope.csv"), "t\n").unwrap();
    fs::write(dir.join("stray.txt"), "x").unwrap();
    let problems = verify_manifest(&dir).unwrap();
    assert_eq!(problems.len(), 2, "{problems:?}");
}

#[test]
fn same_seed_gives_identical_csvs() {
    let mut cfg = quick(ScenarioKind::ComparisonSuite);
    cfg.seed = 7;
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ma = run_scenario(&cfg, a.path()).unwrap();
    let mb = run_scenario(&cfg, b.path()).unwrap();
    let (ca, cb) = (read_csvs(&a.path().join(cfg.label())), read_csvs(&b.path().join(cfg.label())));
    assert!(!ca.is_empty());
    assert_eq!(ca, cb);
    let hashes = |m: &chemolab::RunManifest| m.files.iter().map(|f| f.sha256.clone()).collect::<Vec<_>>();
    assert_eq!(hashes(&ma), hashes(&mb));

    cfg.seed = 8;
    let c = tempfile::tempdir().unwrap();
    run_scenario(&cfg, c.path()).unwrap();
    assert_ne!(ca, read_csvs(&c.path().join(cfg.label())));
}

#[test]
fn empty_batch_is_empty() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(run_batch(&[], tmp.path(), 4).unwrap().is_empty());
    assert!(BatchConfig::from_toml("").unwrap().run.is_empty());
}

#[test]
fn batch_rejects_duplicate_labels() {
    let tmp = tempfile::tempdir().unwrap();
    let c = quick(ScenarioKind::EnvelopeCheck);
    assert!(run_batch(&[c.clone(), c], tmp.path(), 2).is_err());
}

#[test]
fn unknown_scenario_and_missing_parameters() {
    assert!(ScenarioKind::parse("nonsense").is_err());
    assert!(ScenarioConfig::from_toml("scenario = \"nonsense\"").is_err());
    assert!(ScenarioConfig::from_toml("scenario = \"shoot\"\nbogus = 1").is_err());

    let tmp = tempfile::tempdir().unwrap();
    let m = run_scenario(&ScenarioConfig::new(ScenarioKind::EvolveLambda), tmp.path()).unwrap();
    assert!(m.error.as_deref().unwrap().contains("lambda"));
    assert!(m.verdicts.is_empty() && !m.passed());
    assert!(verify_manifest(&tmp.path().join("evolve-lambda")).unwrap().is_empty());

    let mut bad = quick(ScenarioKind::EnvelopeCheck);
    bad.label = Some("../escape".into());
    assert!(run_scenario(&bad, tmp.path()).is_err());
}

#[test]
fn dichotomy_batch_splits_at_thirteen() {
    let tmp = tempfile::tempdir().unwrap();
    let configs: Vec<ScenarioConfig> =
        chemolab::catalogue().into_iter().filter(|c| c.scenario == ScenarioKind::Dichotomy).collect();
    assert_eq!(configs.len(), 9);
    let manifests = run_batch(&configs, tmp.path(), 4).unwrap();
    for m in &manifests {
        let v = &m.verdicts[0];
        let dominated = v.reason.starts_with("Dominated");
        assert_eq!(dominated, m.label == "dichotomy-d13", "{}: {}", m.label, v.reason);
        assert_ne!(v.status, Status::Fail, "{}: {}", m.label, v.reason);
    }
}

#[test]
fn cli_exit_codes_and_output_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let env_dir = tmp.path().join("from-env");
    let out = Command::new(BIN).args(["envelope-check"]).env("CHEMOLAB_OUT_DIR", &env_dir).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().all(|l| l.starts_with("PASS ")), "{stdout}");
    assert!(env_dir.join("envelope-check").join("manifest.json").exists());

    let flag_dir = tmp.path().join("from-flag");
    let cfg_path = tmp.path().join("residuals.toml");
    fs::write(&cfg_path, "scenario = \"barrier-residuals\"\n[blowup]\nbundles = 2\nn_r = 10\nn_t = 10\n").unwrap();
    let out = Command::new(BIN)
        .args(["barrier-residuals", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(&flag_dir)
        .env("CHEMOLAB_OUT_DIR", &env_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL barrier-residuals/subsolution"));
    assert!(flag_dir.join("barrier-residuals").exists());
    assert!(!env_dir.join("barrier-residuals").exists());

    let out = Command::new(BIN).args(["shoot", "--config"]).arg(&cfg_path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn cli_batch_file() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("batch.toml");
    fs::write(
        &path,
        "[[run]]\nscenario = \"envelope-check\"\nlabel = \"env-a\"\n\n[[run]]\nscenario = \"envelope-check\"\nlabel = \"env-b\"\nplots = false\n",
    )
    .unwrap();
    let out = Command::new(BIN)
        .args(["batch", "--parallel", "2", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(tmp.path().join("env-a/manifest.json").exists() && tmp.path().join("env-b/manifest.json").exists());
}
