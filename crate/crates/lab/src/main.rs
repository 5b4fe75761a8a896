use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chemolab::{catalogue, run_batch, BatchConfig, LabError, RunManifest, ScenarioConfig, ScenarioKind, Status};
use clap::{Args, Parser, Subcommand};

/// Overrides the output directory (and nothing else).
const OUT_ENV: &str = "CHEMOLAB_OUT_DIR";
const DEFAULT_OUT: &str = "chemolab-out";

#[derive(Parser)]
#[command(name = "chemolab", version, about = "Desk-scale experiments for chemotaxis with indirect signal production")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Find the critical shooting parameter and check the tail asymptotics.
    Shoot(ScenarioArgs),
    /// Classify the regular steady state against the singular one.
    Dichotomy(ScenarioArgs),
    /// Residuals and flux sign of the stationary triples.
    StationaryVerify(ScenarioArgs),
    /// Evolve lambda times the stationary masses and classify the outcome.
    EvolveLambda(ScenarioArgs),
    /// Morrey barrier containment for small data.
    Theorem2Containment(ScenarioArgs),
    /// Randomized residual scans of the blow-up subsolution.
    BarrierResiduals(ScenarioArgs),
    /// Randomized comparison-principle and monotonicity checks.
    ComparisonSuite(ScenarioArgs),
    /// ODE envelope against a run.
    EnvelopeCheck(ScenarioArgs),
    /// Run a batch file of `[[run]]` tables, or the whole catalogue without one.
    Batch(BatchArgs),
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output root; each scenario writes into `<out>/<label>`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ScenarioArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Scaling factor for both masses, or for M when --lambda-w is given.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    lambda_w: Option<f64>,
    #[arg(long)]
    label: Option<String>,
    #[arg(long)]
    no_plots: bool,
}

#[derive(Args)]
struct BatchArgs {
    #[command(flatten)]
    common: Common,
    /// Number of scenarios run concurrently.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
}

fn out_root(flag: Option<PathBuf>, config: Option<&Path>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .or_else(|| config.map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn single(kind: ScenarioKind, args: ScenarioArgs) -> Result<Vec<RunManifest>, LabError> {
    let mut cfg = match &args.common.config {
        Some(path) => {
            let cfg = ScenarioConfig::load(path)?;
            if cfg.scenario != kind {
                return Err(LabError::Config(format!(
                    "{} describes scenario '{}', not '{kind}'",
                    path.display(),
                    cfg.scenario
                )));
            }
            cfg
        }
        None => ScenarioConfig::new(kind),
    };
    if let Some(seed) = args.common.seed {
        cfg.seed = seed;
    }
    cfg.dim = args.dim.or(cfg.dim);
    cfg.alpha = args.alpha.unwrap_or(cfg.alpha);
    cfg.lambda = args.lambda.or(cfg.lambda);
    cfg.lambda_w = args.lambda_w.or(cfg.lambda_w);
    cfg.label = args.label.or(cfg.label);
    cfg.plots &= !args.no_plots;
    let root = out_root(args.common.out, cfg.out_dir.as_deref());
    Ok(vec![chemolab::run_scenario(&cfg, &root)?])
}

fn batch(args: BatchArgs) -> Result<Vec<RunManifest>, LabError> {
    let mut configs = match &args.common.config {
        Some(path) => BatchConfig::load(path)?.run,
        None => catalogue(),
    };
    if let Some(seed) = args.common.seed {
        configs.iter_mut().for_each(|c| c.seed = seed);
    }
    let root = out_root(args.common.out, None);
    run_batch(&configs, &root, args.parallel)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Shoot(a) => single(ScenarioKind::Shoot, a),
        Command::Dichotomy(a) => single(ScenarioKind::Dichotomy, a),
        Command::StationaryVerify(a) => single(ScenarioKind::StationaryVerify, a),
        Command::EvolveLambda(a) => single(ScenarioKind::EvolveLambda, a),
        Command::Theorem2Containment(a) => single(ScenarioKind::Theorem2Containment, a),
        Command::BarrierResiduals(a) => single(ScenarioKind::BarrierResiduals, a),
        Command::ComparisonSuite(a) => single(ScenarioKind::ComparisonSuite, a),
        Command::EnvelopeCheck(a) => single(ScenarioKind::EnvelopeCheck, a),
        Command::Batch(a) => batch(a),
    };
    let manifests = match result {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let mut all_pass = true;
    for m in &manifests {
        if let Some(err) = &m.error {
            println!("FAIL {}/error: {err}", m.label);
        }
        for v in &m.verdicts {
            let tag = match v.status {
                Status::Pass => "PASS",
                Status::Fail => "FAIL",
                Status::Inconclusive => "INCONCLUSIVE",
            };
            println!("{tag} {}/{}: {}", m.label, v.name, v.reason);
        }
        all_pass &= m.passed();
    }
    if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
