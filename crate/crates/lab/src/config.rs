//! Scenario configuration, read from TOML.

use std::fmt;
use std::path::{Path, PathBuf};

use chemotaxis_core::dynamics::{EvolveConfig, SnapshotSchedule};
use chemotaxis_core::gelfand::ShootingConfig;
use chemotaxis_core::steady::DichotomyConfig;
use serde::{Deserialize, Serialize};

use crate::LabError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Shoot,
    Dichotomy,
    StationaryVerify,
    EvolveLambda,
    Theorem2Containment,
    BarrierResiduals,
    ComparisonSuite,
    EnvelopeCheck,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 8] = [
        ScenarioKind::Shoot,
        ScenarioKind::Dichotomy,
        ScenarioKind::StationaryVerify,
        ScenarioKind::EvolveLambda,
        ScenarioKind::Theorem2Containment,
        ScenarioKind::BarrierResiduals,
        ScenarioKind::ComparisonSuite,
        ScenarioKind::EnvelopeCheck,
    ];

    pub fn id(self) -> &'static str {
        match self {
            ScenarioKind::Shoot => "shoot",
            ScenarioKind::Dichotomy => "dichotomy",
            ScenarioKind::StationaryVerify => "stationary-verify",
            ScenarioKind::EvolveLambda => "evolve-lambda",
            ScenarioKind::Theorem2Containment => "theorem2-containment",
            ScenarioKind::BarrierResiduals => "barrier-residuals",
            ScenarioKind::ComparisonSuite => "comparison-suite",
            ScenarioKind::EnvelopeCheck => "envelope-check",
        }
    }

    pub fn parse(id: &str) -> Result<Self, LabError> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.id() == id)
            .ok_or_else(|| LabError::Config(format!("unknown scenario '{id}'")))
    }

    fn default_dim(self) -> usize {
        match self {
            ScenarioKind::Shoot | ScenarioKind::Dichotomy | ScenarioKind::StationaryVerify => 13,
            ScenarioKind::BarrierResiduals => 5,
            _ => 7,
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub intervals: usize,
    pub r_max: f64,
    /// Ratio of the largest to the smallest spacing of the stretched grid.
    pub refinement: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { intervals: 1024, r_max: 100.0, refinement: 100.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShootSpec {
    /// Radii over which `r⁴e^φ` and `-r²Δφ` are averaged.
    pub tail_window: (f64, f64),
    pub tail_tol: f64,
    /// Relative tolerance of the fitted decay rate.
    pub fit_tol: f64,
}

impl Default for ShootSpec {
    fn default() -> Self {
        ShootSpec { tail_window: (1e2, 1e3), tail_tol: 0.02, fit_tol: 0.15 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StationarySpec {
    /// The singular triple is checked in its own dimension, which must be at least 7.
    pub singular_dim: usize,
    pub singular_window: (f64, f64),
    pub singular_tol: f64,
    pub window: (f64, f64),
    /// Coarse grid of the refinement study; the fine grid doubles `intervals`.
    pub grid: GridSpec,
    pub min_order: f64,
}

impl Default for StationarySpec {
    fn default() -> Self {
        StationarySpec {
            singular_dim: 7,
            singular_window: (0.5, 5.0),
            singular_tol: 1e-10,
            window: (0.1, 100.0),
            grid: GridSpec { intervals: 512, r_max: 200.0, refinement: 100.0 },
            min_order: 1.8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LambdaSpec {
    /// Bound `M <= λ M_stat (1 + tol)` for subcritical runs.
    pub bound_tol: f64,
    /// Radius beyond which a blow-up must stay bounded.
    pub r_far: f64,
    /// Repeat blow-up runs with doubled `R_max` and `N`.
    pub doubling: bool,
}

impl Default for LambdaSpec {
    fn default() -> Self {
        LambdaSpec { bound_tol: 1e-3, r_far: 0.5, doubling: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MorreySpec {
    /// Morrey norms of the data as fractions of `6(d-2)σ_d` and `3σ_d`.
    pub fraction: f64,
    pub p: f64,
    pub eps: f64,
    pub eps_prime: f64,
    /// `K` as a multiple of the smallest value for which the data fit under the inner branches.
    pub k_factor: f64,
}

impl Default for MorreySpec {
    fn default() -> Self {
        MorreySpec { fraction: 0.9, p: 2.4, eps: 0.69, eps_prime: 0.72, k_factor: 1.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlowupScanSpec {
    pub bundles: usize,
    pub r0: f64,
    pub n_r: usize,
    pub n_t: usize,
    /// Distance of the last lattice time from the singular time `t₀ + 1`.
    pub t_gap: f64,
}

impl Default for BlowupScanSpec {
    fn default() -> Self {
        BlowupScanSpec { bundles: 100, r0: 5.0, n_r: 200, n_t: 200, t_gap: 1e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComparisonSpec {
    pub pairs: usize,
    pub t_end: f64,
    /// Upper data stay below this fraction of the stationary masses.
    pub envelope_fraction: f64,
}

impl Default for ComparisonSpec {
    fn default() -> Self {
        ComparisonSpec { pairs: 20, t_end: 0.5, envelope_fraction: 0.9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvelopeSpec {
    pub m0: f64,
    pub t_max: f64,
    pub identity_samples: usize,
    pub identity_tol: f64,
}

impl Default for EnvelopeSpec {
    fn default() -> Self {
        EnvelopeSpec { m0: 2.0, t_max: 0.25, identity_samples: 1000, identity_tol: 1e-12 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    /// Names the output subdirectory; defaults to the scenario id.
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Separate factor for `W`; defaults to `lambda`.
    #[serde(default)]
    pub lambda_w: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default = "yes")]
    pub plots: bool,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub evolve: Option<EvolveConfig>,
    /// Defaults to machine-resolution bisection except for `shoot`.
    #[serde(default)]
    pub shooting: Option<ShootingConfig>,
    #[serde(default)]
    pub dichotomy: Option<DichotomyConfig>,
    #[serde(default)]
    pub shoot: ShootSpec,
    #[serde(default)]
    pub stationary: StationarySpec,
    #[serde(default)]
    pub lambda_run: LambdaSpec,
    #[serde(default)]
    pub morrey: MorreySpec,
    #[serde(default)]
    pub blowup: BlowupScanSpec,
    #[serde(default)]
    pub comparison: ComparisonSpec,
    #[serde(default)]
    pub envelope: EnvelopeSpec,
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

impl ScenarioConfig {
    pub fn new(scenario: ScenarioKind) -> Self {
        ScenarioConfig {
            scenario,
            label: None,
            dim: None,
            alpha: 1.0,
            lambda: None,
            lambda_w: None,
            seed: 0,
            out_dir: None,
            plots: true,
            grid: GridSpec::default(),
            evolve: None,
            shooting: None,
            dichotomy: None,
            shoot: ShootSpec::default(),
            stationary: StationarySpec::default(),
            lambda_run: LambdaSpec::default(),
            morrey: MorreySpec::default(),
            blowup: BlowupScanSpec::default(),
            comparison: ComparisonSpec::default(),
            envelope: EnvelopeSpec::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, LabError> {
        toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario configs always serialize")
    }

    pub fn load(path: &Path) -> Result<Self, LabError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn dim(&self) -> usize {
        self.dim.unwrap_or_else(|| self.scenario.default_dim())
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.scenario.id().to_string())
    }

    pub fn lambdas(&self) -> Option<(f64, f64)> {
        self.lambda.map(|l| (l, self.lambda_w.unwrap_or(l)))
    }

    pub fn shooting(&self) -> ShootingConfig {
        self.shooting.unwrap_or_else(|| {
            let mut cfg = ShootingConfig::default();
            if self.scenario != ScenarioKind::Shoot {
                cfg.beta_tol = ShootingConfig::finest_beta_tol(self.dim(), self.alpha);
            }
            cfg
        })
    }

    pub fn dichotomy(&self) -> DichotomyConfig {
        self.dichotomy.unwrap_or_else(|| DichotomyConfig::for_dim(self.dim(), self.alpha))
    }

    /// Evolution settings; blow-up scenarios get a long horizon by default.
    pub fn evolve(&self) -> EvolveConfig {
        self.evolve.clone().unwrap_or_else(|| match self.scenario {
            ScenarioKind::EvolveLambda if self.lambda.is_some_and(|l| l > 1.0) => {
                EvolveConfig { t_end: 50.0, ..Default::default() }
            }
            ScenarioKind::ComparisonSuite => EvolveConfig {
                t_end: self.comparison.t_end,
                snapshots: SnapshotSchedule::Every { interval: 0.05 },
                ..Default::default()
            },
            ScenarioKind::EnvelopeCheck => EvolveConfig {
                t_end: self.envelope.t_max,
                snapshots: SnapshotSchedule::Every { interval: 0.025 },
                ..Default::default()
            },
            _ => EvolveConfig::default(),
        })
    }

    /// The same configuration with every defaulted setting the scenario uses written out.
    pub fn resolved(&self) -> Self {
        use ScenarioKind::*;
        let mut c = self.clone();
        c.dim = Some(self.dim());
        c.label = Some(self.label());
        if matches!(self.scenario, Shoot | StationaryVerify | EvolveLambda | ComparisonSuite) {
            c.shooting = Some(self.shooting());
        }
        if self.scenario == Dichotomy {
            c.dichotomy = Some(self.dichotomy());
        }
        if matches!(self.scenario, EvolveLambda | Theorem2Containment | ComparisonSuite | EnvelopeCheck) {
            c.evolve = Some(self.evolve());
        }
        c
    }

    /// Checks that the scenario has everything it needs before any computation.
    pub fn validate(&self) -> Result<(), LabError> {
        let d = self.dim();
        let need = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(LabError::Config(msg.to_string())) };
        need(d >= 5, "dimension must be at least 5")?;
        need(self.alpha > 0.0 && self.alpha.is_finite(), "alpha must be positive")?;
        match self.scenario {
            ScenarioKind::EvolveLambda => {
                let (l1, l2) = self.lambdas().ok_or_else(|| LabError::Config("evolve-lambda needs lambda".into()))?;
                need(l1 > 0.0 && l2 > 0.0, "lambda factors must be positive")?;
            }
            ScenarioKind::StationaryVerify => {
                let s = &self.stationary;
                need(s.window.0 > 0.0 && s.window.0 < s.window.1, "stationary window must be (a, b) with 0 < a < b")?;
                need(s.window.1 <= s.grid.r_max, "stationary window must lie inside the grid")?;
            }
            ScenarioKind::BarrierResiduals => {
                need(self.blowup.bundles > 0 && self.blowup.n_r > 1 && self.blowup.n_t > 1, "empty residual lattice")?;
                need(self.blowup.t_gap > 0.0 && self.blowup.t_gap < 1.0, "t_gap must lie in (0, 1)")?;
            }
            ScenarioKind::ComparisonSuite => need(self.comparison.pairs > 0, "comparison suite needs pairs")?,
            ScenarioKind::EnvelopeCheck => need(self.envelope.m0 > 0.0, "envelope level must be positive")?,
            ScenarioKind::Theorem2Containment => {
                need(self.morrey.fraction > 0.0 && self.morrey.fraction < 1.0, "Morrey fraction must lie in (0, 1)")?
            }
            ScenarioKind::Shoot | ScenarioKind::Dichotomy => {}
        }
        Ok(())
    }
}

/// A batch file: `[[run]]` tables, each a scenario config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchConfig {
    #[serde(default)]
    pub run: Vec<ScenarioConfig>,
}

impl BatchConfig {
    pub fn from_toml(text: &str) -> Result<Self, LabError> {
        toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, LabError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = ScenarioConfig::from_toml("scenario = \"dichotomy\"\ndim = 9\n").unwrap();
        assert_eq!(c.scenario, ScenarioKind::Dichotomy);
        assert_eq!(c.dim(), 9);
        assert_eq!(c.grid, GridSpec::default());
        assert!(c.dichotomy().shooting.beta_tol < 1e-12);
    }

    #[test]
    fn round_trips_through_toml() {
        let mut c = ScenarioConfig::new(ScenarioKind::EvolveLambda);
        c.lambda = Some(1.5);
        c.evolve = Some(EvolveConfig::default());
        let back = ScenarioConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_unknown_scenario_and_missing_lambda() {
        assert!(ScenarioConfig::from_toml("scenario = \"nope\"").is_err());
        assert!(ScenarioKind::parse("nope").is_err());
        let c = ScenarioConfig::from_toml("scenario = \"evolve-lambda\"").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn partial_nested_tables() {
        let c = ScenarioConfig::from_toml(
            "scenario = \"shoot\"\n[shooting]\nbeta_tol = 1e-9\n[shooting.step]\nrtol = 1e-10\n",
        )
        .unwrap();
        let s = c.shooting();
        assert_eq!(s.beta_tol, 1e-9);
        assert_eq!(s.step.rtol, 1e-10);
        assert_eq!(s.r_max, ShootingConfig::default().r_max);
    }
}
