//! Experiment configuration: flat `[section]` headers with `key = value`
//! lines, parsed as TOML.

use std::path::Path;
use std::str::FromStr;

use l1bsde::claim::parse_call;
use l1bsde::rbsde::ObstacleSpec;
use l1bsde::tolerance::{depth_cap_or, DEFAULT_DEPTH_CAP};
use l1bsde::twobsde::UncertaintySet;
use l1bsde::{ClaimSpec, FrozenTerm, LabError, LipschitzDriver};
use serde::Deserialize;
use thiserror::Error;

use crate::suites;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed config: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    /// A requested depth exceeds a solver cap.
    #[error("{0}")]
    Cap(LabError),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: RawExperiment,
    #[serde(default)]
    grid: RawGrid,
    #[serde(default)]
    claim: RawSpec,
    #[serde(default)]
    driver: RawSpec,
    #[serde(default)]
    obstacle: RawSpec,
    #[serde(default)]
    uncertainty: RawUncertainty,
    #[serde(default)]
    params: RawParams,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    name: String,
    #[serde(default)]
    seed: u64,
    #[serde(default = "one")]
    instances: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawGrid {
    horizon: f64,
    steps: Vec<usize>,
}

impl Default for RawGrid {
    fn default() -> Self {
        RawGrid { horizon: 1.0, steps: vec![4] }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawSpec {
    spec: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawUncertainty {
    levels: Vec<f64>,
}

impl Default for RawUncertainty {
    fn default() -> Self {
        RawUncertainty { levels: vec![0.5, 1.0] }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawParams {
    bound: f64,
    betas: Vec<f64>,
    levels: Vec<f64>,
    pair: String,
}

impl Default for RawParams {
    fn default() -> Self {
        RawParams {
            bound: 0.5,
            betas: vec![0.25, 0.5, 0.75],
            levels: vec![2.0, 4.0, 8.0, 16.0, 32.0],
            pair: "random".into(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawOutput {
    dir: String,
}

impl Default for RawOutput {
    fn default() -> Self {
        RawOutput { dir: "out".into() }
    }
}

/// Generator choice: a fixed generator, or one drawn per instance.
#[derive(Debug, Clone, PartialEq)]
pub enum DriverSpec {
    Fixed(LipschitzDriver),
    Random,
}

impl FromStr for DriverSpec {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self, LabError> {
        let (name, a) = parse_call(s)?;
        let bad = || LabError::UnknownSpec(s.to_string());
        let d = match (name.as_str(), a.len()) {
            ("random", 0) => return Ok(DriverSpec::Random),
            ("zero", 0) => LipschitzDriver::zero(),
            ("constant", 1) => LipschitzDriver::constant(a[0]),
            ("linear", 2) => LipschitzDriver::linear(FrozenTerm::Zero, a[0], a[1]),
            ("sigma_square", 1) => LipschitzDriver::frozen_only(FrozenTerm::SigmaSquare(a[0])),
            ("lipschitz", 7) => LipschitzDriver {
                f0: FrozenTerm::Affine { c0: a[0], cb: a[1], ct: a[2] },
                y_lin: a[3],
                y_sin: a[4],
                z_lin: a[5],
                z_abs: a[6],
            },
            _ => return Err(bad()),
        };
        Ok(DriverSpec::Fixed(d))
    }
}

/// Terminal data: a payoff recipe, or leaf values drawn per instance.
#[derive(Debug, Clone, PartialEq)]
pub enum ClaimChoice {
    Spec(ClaimSpec),
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ObstacleChoice {
    Spec(ObstacleSpec),
    Random,
}

fn is_random(s: &str) -> bool {
    s.trim().eq_ignore_ascii_case("random")
}

/// Validated configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub instances: usize,
    pub horizon: f64,
    pub steps: Vec<usize>,
    pub claim: ClaimChoice,
    pub driver: DriverSpec,
    pub obstacle: ObstacleChoice,
    pub uncertainty: UncertaintySet,
    /// Drift bound `L` for instance generation.
    pub bound: f64,
    pub betas: Vec<f64>,
    pub levels: Vec<f64>,
    pub pair: String,
    pub output_dir: String,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text)?;
        let invalid = |m: String| ConfigError::Invalid(m);
        let spec_err = |e: LabError| ConfigError::Invalid(e.to_string());

        let name = raw.experiment.name.trim().to_string();
        if !suites::names().contains(&name.as_str()) {
            return Err(invalid(format!("unknown experiment `{name}`")));
        }
        if raw.experiment.instances == 0 {
            return Err(invalid("instances must be at least 1".into()));
        }
        if !(raw.grid.horizon > 0.0 && raw.grid.horizon.is_finite()) {
            return Err(invalid(format!("horizon {}", raw.grid.horizon)));
        }
        if raw.grid.steps.is_empty() || raw.grid.steps.contains(&0) {
            return Err(invalid("steps must be a nonempty list of positive integers".into()));
        }
        let claim = match raw.claim.spec.as_deref() {
            None => ClaimChoice::Random,
            Some(s) if is_random(s) => ClaimChoice::Random,
            Some(s) => ClaimChoice::Spec(s.parse().map_err(spec_err)?),
        };
        let driver = match raw.driver.spec.as_deref() {
            None => DriverSpec::Random,
            Some(s) => s.parse().map_err(spec_err)?,
        };
        let obstacle = match raw.obstacle.spec.as_deref() {
            None => ObstacleChoice::Spec(ObstacleSpec::None),
            Some(s) if is_random(s) => ObstacleChoice::Random,
            Some(s) => ObstacleChoice::Spec(s.parse().map_err(spec_err)?),
        };
        let uncertainty = UncertaintySet::new(raw.uncertainty.levels).map_err(spec_err)?;
        if !(raw.params.bound >= 0.0 && raw.params.bound.is_finite()) {
            return Err(invalid(format!("bound {}", raw.params.bound)));
        }
        if raw.params.betas.is_empty() || raw.params.betas.iter().any(|&b| !(b > 0.0 && b < 1.0)) {
            return Err(invalid(format!("betas must lie in (0, 1): {:?}", raw.params.betas)));
        }
        let levels = raw.params.levels;
        if levels.is_empty() || levels.iter().any(|&l| !(l >= 0.0 && l.is_finite())) || levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid(format!("levels must be nonnegative and strictly increasing: {levels:?}")));
        }
        if !["identical", "random"].contains(&raw.params.pair.as_str()) {
            return Err(invalid(format!("pair must be `identical` or `random`, got `{}`", raw.params.pair)));
        }

        let max_steps = *raw.grid.steps.iter().max().expect("nonempty");
        let cap = if suites::uses_regime_tree(&name) { uncertainty.depth_cap() } else { depth_cap_or(DEFAULT_DEPTH_CAP) };
        if max_steps > cap {
            return Err(ConfigError::Cap(LabError::DepthCapExceeded { steps: max_steps, cap }));
        }

        Ok(ExperimentConfig {
            name,
            seed: raw.experiment.seed,
            instances: raw.experiment.instances,
            horizon: raw.grid.horizon,
            steps: raw.grid.steps,
            claim,
            driver,
            obstacle,
            uncertainty,
            bound: raw.params.bound,
            betas: raw.params.betas,
            levels,
            pair: raw.params.pair,
            output_dir: raw.output.dir,
        })
    }

    /// Depth used by `instance`: the step list is cycled.
    pub fn steps_for(&self, instance: usize) -> usize {
        self.steps[instance % self.steps.len()]
    }

    pub fn beta_for(&self, instance: usize) -> f64 {
        self.betas[instance % self.betas.len()]
    }
}
