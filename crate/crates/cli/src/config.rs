//! Experiment configuration: TOML document, one block per concern.

use std::fmt;
use std::sync::Arc;

use asir_core::engine::InitMode;
use asir_core::markov::{grid_walk_map, MarkovError, TransitionMatrix};
use asir_core::sir::SirParams;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Sir,
    Stationary,
    Deduce,
    Asir,
    Verify,
    FailureMode,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Sir => "sir",
            Mode::Stationary => "stationary",
            Mode::Deduce => "deduce",
            Mode::Asir => "asir",
            Mode::Verify => "verify",
            Mode::FailureMode => "failure-mode",
        }
    }

    fn required_blocks(self) -> &'static [&'static str] {
        match self {
            Mode::Sir => &["sir"],
            Mode::Stationary => &["map"],
            Mode::Deduce => &["sir", "map"],
            Mode::Asir => &["sir", "map", "asir"],
            Mode::Verify => &["sir", "map", "ensemble"],
            Mode::FailureMode => &["sir", "map", "ensemble", "failure"],
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn default_substeps() -> usize {
    100
}
fn default_stay_prob() -> f64 {
    0.2
}
fn default_replicates() -> usize {
    200
}
fn default_z_threshold() -> f64 {
    3.0
}
fn default_coverage_threshold() -> f64 {
    0.95
}
fn default_failure_agents() -> usize {
    100
}
fn default_failure_infected() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SirBlock {
    pub alpha: f64,
    pub beta: f64,
    pub n: f64,
    pub s0: f64,
    pub i0: f64,
    #[serde(default)]
    pub r0: f64,
    pub horizon: usize,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
}

impl SirBlock {
    pub fn params(&self) -> SirParams {
        SirParams {
            alpha: self.alpha,
            beta: self.beta,
            n_total: self.n,
            s0: self.s0,
            i0: self.i0,
            r0: self.r0,
            horizon: self.horizon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub side: usize,
    #[serde(default = "default_stay_prob")]
    pub stay_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapBlock {
    /// Row-major transition matrix.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridBlock>,
}

impl MapBlock {
    pub fn build(&self) -> Result<TransitionMatrix, CliError> {
        match (&self.rows, &self.grid) {
            (Some(rows), None) => TransitionMatrix::new(rows).map_err(|e| {
                let key = match &e {
                    MarkovError::NonSquare { row, .. }
                    | MarkovError::NonFinite { row, .. }
                    | MarkovError::NegativeEntry { row, .. }
                    | MarkovError::RowSumViolation { row, .. } => format!("map.rows[{row}]"),
                    _ => "map.rows".to_string(),
                };
                CliError::invalid(key, e)
            }),
            (None, Some(g)) => {
                grid_walk_map(g.side, g.stay_prob).map_err(|e| CliError::invalid("map.grid", e))
            }
            _ => Err(CliError::invalid(
                "map",
                "exactly one of `rows` or `[map.grid]` must be given",
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitModeSpec {
    Stationary,
    Uniform,
    PointMass(usize),
    SplitPointMass { susceptible: usize, infected: usize },
}

impl From<InitModeSpec> for InitMode {
    fn from(spec: InitModeSpec) -> Self {
        match spec {
            InitModeSpec::Stationary => InitMode::Stationary,
            InitModeSpec::Uniform => InitMode::Uniform,
            InitModeSpec::PointMass(k) => InitMode::PointMass(k),
            InitModeSpec::SplitPointMass {
                susceptible,
                infected,
            } => InitMode::SplitPointMass {
                susceptible,
                infected,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsirBlock {
    /// Overrides the deduced value when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_prime: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_prime: Option<f64>,
    #[serde(default = "stationary")]
    pub init_mode: InitModeSpec,
    #[serde(default)]
    pub seed: u64,
}

fn stationary() -> InitModeSpec {
    InitModeSpec::Stationary
}

impl Default for AsirBlock {
    fn default() -> Self {
        AsirBlock {
            alpha_prime: None,
            beta_prime: None,
            init_mode: InitModeSpec::Stationary,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleBlock {
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_z_threshold")]
    pub z_threshold: f64,
    #[serde(default = "default_coverage_threshold")]
    pub coverage_threshold: f64,
    /// Worker threads; defaults to available parallelism.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailureBlock {
    pub side: usize,
    #[serde(default = "default_stay_prob")]
    pub stay_prob: f64,
    #[serde(default = "default_failure_agents")]
    pub agents: usize,
    #[serde(default = "default_failure_infected")]
    pub infected: usize,
    #[serde(default)]
    pub seed: u64,
    /// Skip the grid's stationary solve (several seconds for 10^4 cells).
    #[serde(default)]
    pub skip_grid_meetup: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directory: Option<String>,
    /// Write per-agent positions and health (asir mode).
    #[serde(default)]
    pub trace: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Optional; when present it must match the subcommand.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sir: Option<SirBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<MapBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asir: Option<AsirBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<FailureBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputBlock>,
}

impl ExperimentConfig {
    fn has_block(&self, block: &str) -> bool {
        match block {
            "sir" => self.sir.is_some(),
            "map" => self.map.is_some(),
            "asir" => self.asir.is_some(),
            "ensemble" => self.ensemble.is_some(),
            "failure" => self.failure.is_some(),
            _ => false,
        }
    }

    pub fn sir(&self) -> &SirBlock {
        self.sir.as_ref().expect("checked by parse_config")
    }

    pub fn map(&self) -> &MapBlock {
        self.map.as_ref().expect("checked by parse_config")
    }

    pub fn ensemble(&self) -> &EnsembleBlock {
        self.ensemble.as_ref().expect("checked by parse_config")
    }

    pub fn failure(&self) -> &FailureBlock {
        self.failure.as_ref().expect("checked by parse_config")
    }

    pub fn asir_or_default(&self) -> AsirBlock {
        self.asir.clone().unwrap_or_default()
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map_or(0, |p| p + 1) + 1;
    (line, col)
}

/// Parses `text` and checks that the blocks `mode` needs are present.
pub fn parse_config(text: &str, mode: Mode) -> Result<ExperimentConfig, CliError> {
    let config: ExperimentConfig = toml::from_str(text).map_err(|e| {
        let location = e.span().map_or_else(
            || "unknown location".to_string(),
            |span| {
                let (line, col) = line_col(text, span.start);
                format!("line {line}, column {col}")
            },
        );
        CliError::Parse {
            location,
            message: e.message().to_string(),
        }
    })?;
    if let Some(declared) = config.mode {
        if declared != mode {
            return Err(CliError::invalid(
                "mode",
                format!("config declares mode `{declared}` but `{mode}` was requested"),
            ));
        }
    }
    for block in mode.required_blocks() {
        if !config.has_block(block) {
            return Err(CliError::MissingBlock {
                mode: mode.name(),
                block,
            });
        }
    }
    validate_blocks(&config)?;
    Ok(config)
}

fn validate_blocks(config: &ExperimentConfig) -> Result<(), CliError> {
    if let Some(sir) = &config.sir {
        sir.params()
            .validate()
            .map_err(|e| CliError::invalid("sir", e))?;
        if sir.substeps == 0 {
            return Err(CliError::invalid("sir.substeps", "must be at least 1"));
        }
    }
    if let Some(ens) = &config.ensemble {
        if ens.replicates < 2 {
            return Err(CliError::invalid(
                "ensemble.replicates",
                "must be at least 2",
            ));
        }
        if ens.z_threshold.is_nan() || ens.z_threshold <= 0.0 {
            return Err(CliError::invalid(
                "ensemble.z_threshold",
                "must be positive",
            ));
        }
        if !(ens.coverage_threshold > 0.0 && ens.coverage_threshold <= 1.0) {
            return Err(CliError::invalid(
                "ensemble.coverage_threshold",
                "must lie in (0, 1]",
            ));
        }
        if ens.workers == Some(0) {
            return Err(CliError::invalid("ensemble.workers", "must be at least 1"));
        }
    }
    if let Some(asir) = &config.asir {
        for (key, value) in [
            ("asir.alpha_prime", asir.alpha_prime),
            ("asir.beta_prime", asir.beta_prime),
        ] {
            if let Some(v) = value {
                if !(0.0..=1.0).contains(&v) {
                    return Err(CliError::invalid(key, format!("{v} is not a probability")));
                }
            }
        }
    }
    if let Some(f) = &config.failure {
        if f.infected == 0 || f.infected > f.agents {
            return Err(CliError::invalid(
                "failure.infected",
                format!("need 0 < infected <= agents ({})", f.agents),
            ));
        }
    }
    Ok(())
}

/// Shared map construction; wraps it for the engines.
pub fn build_map(config: &ExperimentConfig) -> Result<Arc<TransitionMatrix>, CliError> {
    config.map().build().map(Arc::new)
}
