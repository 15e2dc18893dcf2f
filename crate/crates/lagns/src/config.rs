//! Scenario files: one TOML document per run.

use std::path::{Path, PathBuf};

use lagns_core::fixed_point::{Laws, Mode};
use lagns_core::{Grid, Partition};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: field `{field}`: {message}")]
    Invalid {
        path: PathBuf,
        field: String,
        message: String,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    Solve,
    VerifyLemmas,
    VerifyFlow,
    VerifyLame,
    Equivalence,
    Stability,
    Controls,
}

impl Pipeline {
    pub fn name(self) -> &'static str {
        match self {
            Pipeline::Solve => "solve",
            Pipeline::VerifyLemmas => "verify-lemmas",
            Pipeline::VerifyFlow => "verify-flow",
            Pipeline::VerifyLame => "verify-lame",
            Pipeline::Equivalence => "equivalence",
            Pipeline::Stability => "stability",
            Pipeline::Controls => "controls",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_dim")]
    pub dim: usize,
    pub n: usize,
    #[serde(default = "default_length")]
    pub length: f64,
}

fn default_dim() -> usize {
    2
}

fn default_length() -> f64 {
    std::f64::consts::TAU
}

impl GridConfig {
    pub fn grid(&self) -> lagns_core::Result<Grid> {
        Grid::new(self.dim, self.n, self.length)
    }

    pub fn with_n(&self, n: usize) -> Self {
        Self { n, ..*self }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// `rho0 = 1`, `u0 = 0`.
    Rest,
    /// `rho0 = 1 + eps cos x1`, small smooth `u0`.
    NearHomogeneous,
    /// `rho0 = 1 + 0.4 cos x1`, small smooth `u0`.
    RoughDensity,
    /// `rho0 = 1`, shear `u0 = (a sin x2, 0)`.
    ShearProbe,
    /// Manufactured variable-coefficient heat problem.
    Manufactured,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub preset: Preset,
    /// Amplitude of `rho0 - 1`; preset default when absent.
    pub density_amplitude: Option<f64>,
    /// Amplitude of `u0`; preset default when absent.
    pub velocity_amplitude: Option<f64>,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default)]
    pub laws: Option<Laws>,
    /// Partition radii `(inner, outer)`.
    #[serde(default)]
    pub partition: Option<[f64; 2]>,
}

fn default_p() -> f64 {
    2.0
}

impl ProblemConfig {
    pub fn partition(&self) -> lagns_core::Result<Partition> {
        match self.partition {
            Some([a, b]) => Partition::new(a, b),
            None => Ok(Partition::default()),
        }
    }
}

/// Exact constant-coefficient modes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExactModes {
    pub mu: Vec<f64>,
    pub mu_prime: Vec<f64>,
    /// Wavevectors `[k1, k2]` (or `[k1, k2, k3]`).
    pub wavevectors: Vec<Vec<i64>>,
    pub horizon: f64,
    pub steps: usize,
    pub tol: f64,
}

/// Spread of the fitted estimate constant over viscosities and horizons.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Universality {
    pub mu: Vec<f64>,
    pub mu_prime: Vec<f64>,
    pub horizons: Vec<f64>,
    /// Random members of the data ensemble.
    pub random_members: usize,
    /// Adds single-block potential and solenoidal data at every resolved scale.
    #[serde(default = "yes")]
    pub block_members: bool,
    #[serde(default = "default_levels")]
    pub time_levels: u32,
    #[serde(default = "default_per_level")]
    pub steps_per_level: usize,
    pub max_spread: f64,
}

fn yes() -> bool {
    true
}

fn default_levels() -> u32 {
    14
}

fn default_per_level() -> usize {
    16
}

/// Variable-coefficient heat convergence on the manufactured solution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manufactured {
    pub horizon: f64,
    /// Step counts of the refinement levels.
    pub steps: Vec<usize>,
    pub min_order: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LameConfig {
    pub exact: Option<ExactModes>,
    pub universality: Option<Universality>,
    pub manufactured: Option<Manufactured>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Soundness {
    pub fields: usize,
    pub bony_pairs: usize,
    pub interpolation_fields: usize,
    pub interpolation_s: Vec<f64>,
    pub max_wavenumber: i64,
    #[serde(default = "one")]
    pub slope: f64,
    pub partition_tol: f64,
    pub bony_tol: f64,
    pub interpolation_tol: f64,
}

fn one() -> f64 {
    1.0
}

/// `(sigma, nu, p)`.
pub type Point = [f64; 3];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LemmaHarness {
    pub trials: usize,
    pub max_wavenumber: i64,
    #[serde(default = "one")]
    pub slope: f64,
    pub product: Vec<Point>,
    pub commutator: Vec<Point>,
    pub multiplier_commutator: Vec<Point>,
    /// Grid sizes compared for the drift of the fitted constants.
    pub resolutions: Vec<usize>,
    pub max_drift: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LemmasConfig {
    pub soundness: Option<Soundness>,
    pub harness: Option<LemmaHarness>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowAlgebra {
    pub trials: usize,
    pub strain: f64,
    /// Grid size of the three-dimensional quadratic-term sweep.
    pub n3: usize,
    pub amplitudes: Vec<f64>,
    pub slope_tol: f64,
    pub identity_tol: f64,
    pub expansion_tol: f64,
    /// Step counts for the integral form of `J`.
    pub steps: Vec<usize>,
    pub min_order: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowEstimates {
    pub horizon: f64,
    pub steps: usize,
    pub trials: usize,
    pub velocity_size: f64,
    pub smallness: f64,
    pub amplitudes: Vec<f64>,
    pub slope_tol: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    pub algebra: Option<FlowAlgebra>,
    pub estimates: Option<FlowEstimates>,
}

/// `(N, steps)` of one refinement level.
pub type Level = [usize; 2];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    #[serde(default = "default_modes")]
    pub modes: Vec<Mode>,
    /// Fixed ball radius and horizon; selected when absent.
    pub radius: Option<f64>,
    pub horizon: Option<f64>,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_ratio")]
    pub max_ratio: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_smallness")]
    pub smallness: f64,
    /// Reference horizon of the ball selection.
    #[serde(default = "default_t_ref")]
    pub reference_horizon: f64,
    /// Extra `(N, steps)` levels for the residual refinement check.
    #[serde(default)]
    pub refinement: Vec<Level>,
    /// Bound on `||Phi(u) - u||_{E_p}`.
    pub residual_tol: Option<f64>,
    pub mass_tol: Option<f64>,
    /// Bound on the largest Lagrangian momentum and mass residual.
    pub lagrangian_tol: Option<f64>,
    pub min_refinement_factor: Option<f64>,
    /// Probe solve of the variable Lamé estimate.
    #[serde(default)]
    pub lame_probe: bool,
    #[serde(default)]
    pub snapshots: bool,
}

fn default_modes() -> Vec<Mode> {
    vec![Mode::General]
}
fn default_steps() -> usize {
    16
}
fn default_max_iters() -> usize {
    12
}
fn default_tol() -> f64 {
    1e-9
}
fn default_ratio() -> f64 {
    0.6
}
fn default_eta() -> f64 {
    0.05
}
fn default_smallness() -> f64 {
    0.1
}
fn default_t_ref() -> f64 {
    0.1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquivalenceConfig {
    pub radius: f64,
    pub horizon: f64,
    pub levels: Vec<Level>,
    pub target_order: f64,
    pub order_tol: f64,
    pub round_trip_tol: f64,
    #[serde(default = "default_inversion_tol")]
    pub inversion_tol: f64,
    #[serde(default)]
    pub snapshots: bool,
}

fn default_inversion_tol() -> f64 {
    1e-13
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityConfig {
    pub radius: f64,
    pub horizon: f64,
    pub steps: usize,
    pub sizes: Vec<f64>,
    pub target_slope: f64,
    pub slope_tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlsConfig {
    /// Velocity amplitude of the compressive flow; large enough to fold it.
    pub degenerate_amplitude: f64,
    pub degenerate_horizon: f64,
    pub degenerate_steps: usize,
    pub residual_samples: usize,
    pub residual_tol: f64,
    /// Gate ids that must fail.
    pub expect_failures: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub pipeline: Pipeline,
    #[serde(default)]
    pub description: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub grid: GridConfig,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub lame: Option<LameConfig>,
    #[serde(default)]
    pub lemmas: Option<LemmasConfig>,
    #[serde(default)]
    pub flow: Option<FlowConfig>,
    #[serde(default)]
    pub solve: Option<SolveConfig>,
    #[serde(default)]
    pub equivalence: Option<EquivalenceConfig>,
    #[serde(default)]
    pub stability: Option<StabilityConfig>,
    #[serde(default)]
    pub controls: Option<ControlsConfig>,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    /// Parses and validates; `path` only labels diagnostics.
    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let sc: Scenario = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        sc.validate(path)?;
        Ok(sc)
    }

    fn validate(&self, path: &Path) -> Result<(), ConfigError> {
        let bad = |field: &str, message: String| ConfigError::Invalid {
            path: path.to_path_buf(),
            field: field.into(),
            message,
        };
        self.grid.grid().map_err(|e| bad("grid", e.to_string()))?;
        self.problem.partition().map_err(|e| bad("problem.partition", e.to_string()))?;
        let block = match self.pipeline {
            Pipeline::Solve => ("solve", self.solve.is_some()),
            Pipeline::VerifyLemmas => ("lemmas", self.lemmas.is_some()),
            Pipeline::VerifyFlow => ("flow", self.flow.is_some()),
            Pipeline::VerifyLame => ("lame", self.lame.is_some()),
            Pipeline::Equivalence => ("equivalence", self.equivalence.is_some()),
            Pipeline::Stability => ("stability", self.stability.is_some()),
            Pipeline::Controls => ("controls", self.controls.is_some()),
        };
        if !block.1 {
            return Err(bad(block.0, format!("pipeline `{}` needs a [{}] table", self.pipeline.name(), block.0)));
        }
        if let Some(e) = &self.equivalence {
            if e.levels.len() < 2 {
                return Err(bad("equivalence.levels", "need at least 2 refinement levels".into()));
            }
        }
        if let Some(s) = &self.solve {
            if s.radius.is_some() != s.horizon.is_some() {
                return Err(bad("solve.radius", "give both radius and horizon, or neither".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "rest"
pipeline = "solve"
[grid]
n = 16
[problem]
preset = "rest"
[solve]
radius = 0.5
horizon = 0.05
"#;

    #[test]
    fn minimal_scenario_parses_with_defaults() {
        let s = Scenario::parse(MINIMAL, Path::new("rest.toml")).unwrap();
        assert_eq!(s.grid.dim, 2);
        assert_eq!(s.problem.p, 2.0);
        let solve = s.solve.unwrap();
        assert_eq!(solve.modes, vec![Mode::General]);
        assert_eq!(solve.max_iters, 12);
    }

    #[test]
    fn unknown_field_reports_line() {
        let text = MINIMAL.replace("n = 16", "n = 16\nsize = 3");
        let err = Scenario::parse(&text, Path::new("x.toml")).unwrap_err().to_string();
        assert!(err.contains("size") && err.contains("line"), "{err}");
    }

    #[test]
    fn missing_block_names_the_field() {
        let text = MINIMAL.replace("[solve]\nradius = 0.5\nhorizon = 0.05\n", "");
        let err = Scenario::parse(&text, Path::new("x.toml")).unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { ref field, .. } if field == "solve"));
    }

    #[test]
    fn bad_grid_is_rejected() {
        let text = MINIMAL.replace("n = 16", "n = 12");
        assert!(matches!(
            Scenario::parse(&text, Path::new("x.toml")),
            Err(ConfigError::Invalid { .. })
        ));
    }
}
