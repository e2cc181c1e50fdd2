//! Experiment configuration files.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use seqdetect::risk::MAX_AGENTS;
use seqdetect::{BeliefVector, CostPair, DecisionHistory, ModelSpec, OptimizerOptions};

use crate::CliError;

/// Either an explicit list of values or an evenly spaced range with both
/// end points included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum GridSpec {
    Values { values: Vec<f64> },
    Range { start: f64, stop: f64, points: usize },
}

impl GridSpec {
    pub fn range(start: f64, stop: f64, points: usize) -> Self {
        GridSpec::Range { start, stop, points }
    }

    pub fn values(&self) -> Result<Vec<f64>, CliError> {
        match *self {
            GridSpec::Values { ref values } => {
                if values.is_empty() {
                    return Err(CliError::Config("grid has no values".into()));
                }
                Ok(values.clone())
            }
            GridSpec::Range { start, stop, points } => {
                if points == 0 {
                    return Err(CliError::Config("grid needs at least one point".into()));
                }
                if !start.is_finite() || !stop.is_finite() {
                    return Err(CliError::Config("grid end points must be finite".into()));
                }
                if points == 1 {
                    return Ok(vec![start]);
                }
                let step = (stop - start) / (points - 1) as f64;
                Ok((0..points)
                    .map(|i| if i + 1 == points { stop } else { start + step * i as f64 })
                    .collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub trials: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self { trials: 1_000_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RescalingCase {
    pub h1: f64,
    pub sigma: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppendixConfig {
    pub h1_values: Vec<f64>,
    pub lambda_min: f64,
    /// The scan stops this far below `h1 / 2`.
    pub lambda_margin: f64,
    pub lambda_points: usize,
    pub theorem_p0: GridSpec,
    pub theorem_tol: f64,
    pub rescaling: Vec<RescalingCase>,
}

impl Default for AppendixConfig {
    fn default() -> Self {
        Self {
            h1_values: vec![0.25, 0.5, 1.0, 2.0],
            lambda_min: -4.0,
            lambda_margin: 0.01,
            lambda_points: 200,
            theorem_p0: GridSpec::range(0.1, 0.9, 9),
            theorem_tol: 0.005,
            rescaling: vec![
                RescalingCase {
                    h1: 1.0,
                    sigma: 2.0,
                    lambda: 0.2,
                },
                RescalingCase {
                    h1: 1.0,
                    sigma: 0.5,
                    lambda: 0.4,
                },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub costs: CostPair,
    pub p0: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p0_grid: Option<GridSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub agents: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beliefs: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub belief_grid: Option<GridSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub histories: Option<Vec<DecisionHistory>>,
    pub optimizer: OptimizerOptions,
    pub simulation: SimulationConfig,
    pub appendix: AppendixConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelSpec::default(),
            costs: CostPair::default(),
            p0: 0.3,
            p0_grid: None,
            agents: None,
            beliefs: None,
            belief_grid: None,
            histories: None,
            optimizer: OptimizerOptions::default(),
            simulation: SimulationConfig::default(),
            appendix: AppendixConfig::default(),
            output: None,
            seed: 0,
        }
    }
}

fn interior(name: &str, p: f64) -> Result<f64, CliError> {
    if p > 0.0 && p < 1.0 {
        Ok(p)
    } else {
        Err(CliError::Config(format!(
            "{name} must lie strictly inside (0, 1), got {p}"
        )))
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let config: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Compact JSON used for the provenance echo and its hash.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.model.build().map_err(|e| CliError::Config(e.to_string()))?;
        self.costs.validate().map_err(|e| CliError::Config(e.to_string()))?;
        interior("p0", self.p0)?;
        for p in self.p0_values()? {
            interior("p0_grid value", p)?;
        }
        if let Some(b) = &self.beliefs {
            for &q in b {
                interior("belief", q)?;
            }
        }
        for q in self.belief_axis()? {
            interior("belief_grid value", q)?;
        }
        let agents = self.agents()?;
        if agents == 0 || agents > MAX_AGENTS {
            return Err(CliError::Config(format!(
                "agents must be in 1..={MAX_AGENTS}, got {agents}"
            )));
        }
        if self.simulation.trials == 0 {
            return Err(CliError::Config("simulation.trials must be at least 1".into()));
        }
        if self.optimizer.grid_points == Some(0) {
            return Err(CliError::Config("optimizer.grid_points must be at least 1".into()));
        }
        let a = &self.appendix;
        if a.lambda_points == 0 || a.h1_values.is_empty() {
            return Err(CliError::Config(
                "appendix scan needs h1 values and lambda points".into(),
            ));
        }
        if a.h1_values.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
            return Err(CliError::Config("appendix.h1_values must be positive".into()));
        }
        for p in a.theorem_p0.values()? {
            interior("appendix.theorem_p0 value", p)?;
        }
        if a.theorem_tol.is_nan() || a.theorem_tol <= 0.0 {
            return Err(CliError::Config("appendix.theorem_tol must be positive".into()));
        }
        Ok(())
    }

    /// Explicit `agents`, else the length of `beliefs`, else 2.
    pub fn agents(&self) -> Result<usize, CliError> {
        match (self.agents, &self.beliefs) {
            (Some(n), Some(b)) if b.len() != n => Err(CliError::Config(format!(
                "agents = {n} but {} beliefs were given",
                b.len()
            ))),
            (Some(n), _) => Ok(n),
            (None, Some(b)) => Ok(b.len()),
            (None, None) => Ok(2),
        }
    }

    pub fn belief_vector(&self) -> Result<BeliefVector, CliError> {
        let b = self
            .beliefs
            .clone()
            .ok_or_else(|| CliError::Config("this command needs `beliefs`".into()))?;
        self.agents()?;
        BeliefVector::new(b).map_err(|e| CliError::Config(e.to_string()))
    }

    /// `p0_grid` if given, else the single `p0`.
    pub fn p0_values(&self) -> Result<Vec<f64>, CliError> {
        match &self.p0_grid {
            Some(g) => g.values(),
            None => Ok(vec![self.p0]),
        }
    }

    /// Per-agent belief axis; defaults to 0.01, 0.02, …, 0.99.
    pub fn belief_axis(&self) -> Result<Vec<f64>, CliError> {
        match &self.belief_grid {
            Some(g) => g.values(),
            None => GridSpec::range(0.01, 0.99, 99).values(),
        }
    }
}
