//! Experiment configuration: one JSON document shared by all subcommands.
//! Every field is optional; missing fields take the defaults below.

use std::path::{Path, PathBuf};

use cauchy_fde::fde::FixedPointConfig;
use cauchy_fde::loss::QuadratureGrid;
use cauchy_fde::model::{Field, ModelKind, Theta};
use cauchy_fde::optim::{AdamConfig, RunConfig, SpnInit};
use cauchy_fde::recover::{DEFAULT_DELTA, DEFAULT_XI};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCHEMA: &str = include_str!("../config.schema.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub p: usize,
    pub d: usize,
    /// Box bound `M`; `null` means 1 for CW and 1.2 for SPN.
    pub bound: Option<f64>,
    pub field: Field,
    pub gamma: f64,
    /// Optimizer steps; `null` means `400 d`.
    pub iterations: Option<usize>,
    pub seeds: Vec<u64>,
    pub output_dir: Option<PathBuf>,
    pub trace_interval: usize,
    pub failure_budget: usize,
    pub fixed_point: FixedPointConfig,
    pub adam: AdamConfig,
    pub quadrature: QuadratureGrid,
    /// Explicit model parameters; `null` means the synthetic protocol truth
    /// of each seed.
    pub theta: Option<Theta>,
    pub estimate: EstimateSection,
    pub density: DensitySection,
    pub recover: RecoverSection,
    pub gap: GapSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let run = RunConfig::default();
        ExperimentConfig {
            model: ModelKind::Cw,
            p: 50,
            d: 50,
            bound: None,
            field: Field::Real,
            gamma: run.gamma,
            iterations: None,
            seeds: vec![0],
            output_dir: None,
            trace_interval: run.trace_interval,
            failure_budget: run.failure_budget,
            fixed_point: FixedPointConfig::default(),
            adam: AdamConfig::default(),
            quadrature: QuadratureGrid::default(),
            theta: None,
            estimate: EstimateSection::default(),
            density: DensitySection::default(),
            recover: RecoverSection::default(),
            gap: GapSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateSection {
    /// Sample CSV to fit; `null` draws one per seed from the ground truth.
    pub input: Option<PathBuf>,
    /// L¹ weight; 0 fits the plain loss.
    pub xi: f64,
    pub spn_init: SpnInit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensitySection {
    pub x_min: f64,
    pub x_max: f64,
    pub points: usize,
    /// Sample CSV whose smoothed spectrum is written alongside the slice.
    pub input: Option<PathBuf>,
}

impl Default for DensitySection {
    fn default() -> Self {
        DensitySection {
            x_min: -1.0,
            x_max: 5.0,
            points: 601,
            input: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecoverSection {
    pub d_true: Vec<usize>,
    pub lambda_min: Vec<f64>,
    pub sigma_true: f64,
    pub xi: f64,
    /// Rank threshold; `null` means `xi`.
    pub xi0: Option<f64>,
    pub delta: f64,
    pub spn_init: SpnInit,
    /// Fill the `runtime_seconds` column; output is then not reproducible.
    pub record_runtime: bool,
}

impl Default for RecoverSection {
    fn default() -> Self {
        RecoverSection {
            d_true: vec![10, 20, 30, 40],
            lambda_min: vec![0.05, 0.1, 0.15, 0.2, 0.3, 0.4],
            sigma_true: 0.1,
            xi: DEFAULT_XI,
            xi0: None,
            delta: DEFAULT_DELTA,
            spn_init: SpnInit::Eigenvalues,
            record_runtime: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GapSection {
    /// Dimensions `d = p` to compare when the parameters are drawn at random.
    pub dims: Vec<usize>,
    /// Reference parameters; with `theta`, fixes a single dimension.
    pub theta0: Option<Theta>,
}

impl Default for GapSection {
    fn default() -> Self {
        GapSection {
            dims: vec![50, 200],
            theta0: None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn bound(&self) -> f64 {
        self.bound.unwrap_or(self.model.default_bound())
    }

    pub fn run_config(&self, seed: u64, xi: f64) -> RunConfig {
        RunConfig {
            gamma: self.gamma,
            iterations: self.iterations,
            xi,
            seed,
            bound: self.bound,
            fixed_point: self.fixed_point,
            adam: self.adam,
            trace_interval: self.trace_interval,
            failure_budget: self.failure_budget,
        }
    }

    /// Checks shared fields plus the section of `command`.
    pub fn validate(&self, command: &str) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.p == 0 || self.d == 0 {
            return bad("p and d must be >= 1".into());
        }
        if self.model == ModelKind::Spn && self.p < self.d {
            return bad(format!("spn needs p >= d, got p = {}, d = {}", self.p, self.d));
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        match command {
            "density" if self.density.points < 2 || !(self.density.x_max > self.density.x_min) => {
                return bad("density needs points >= 2 and x_max > x_min".into());
            }
            "recover" if self.model != ModelKind::Spn => {
                return bad("rank recovery needs model \"spn\"".into());
            }
            "recover" if self.recover.d_true.iter().any(|&k| k > self.d) => {
                return bad("recover.d_true entries must not exceed d".into());
            }
            "recover" if !(self.recover.xi > 0.0) => {
                return bad("recover.xi must be positive".into());
            }
            "gap" if self.gap.dims.is_empty() || self.gap.dims.contains(&0) => {
                return bad("gap.dims must be nonempty with entries >= 1".into());
            }
            _ => {}
        }
        for theta in [&self.theta, &self.gap.theta0].into_iter().flatten() {
            if theta.kind() != self.model {
                return bad(format!("theta is a {} parameter but model is {}", theta.kind(), self.model));
            }
            theta.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        self.quadrature.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let xi = if command == "recover" { self.recover.xi } else { self.estimate.xi };
        self.run_config(0, xi).validate().map_err(|e| CliError::Config(e.to_string()))
    }

    /// Compact JSON with every default filled in.
    pub fn materialized(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}
