//! Experiment configuration, read from TOML.
//!
//! Every table rejects unknown keys. A missing section takes its defaults, so
//! an empty file is a valid fake-flat experiment.

use std::path::{Path, PathBuf};

use dgsam_core::objectives::{DatasetConfig, FakeFlatParams};
use dgsam_core::optimizers::{OptimizerConfig, OptimizerKind};
use dgsam_core::sharpness::{SharpnessConfig, SharpnessMethod, SpectrumConfig};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    /// Output root; `--out` takes precedence.
    pub out_dir: Option<PathBuf>,
    /// Keep every k-th iterate in trajectory files.
    pub trajectory_stride: usize,
    /// Write measured wall-clock times. Off by default so repeated runs are byte-identical.
    pub record_timing: bool,
    pub problem: ProblemSpec,
    pub init: InitSpec,
    pub optimizers: Vec<OptimizerSpec>,
    pub sharpness: SharpnessSpec,
    pub perturb_trace: PerturbTraceSpec,
    pub landscape: LandscapeSpec,
    pub spectrum: SpectrumSpec,
    pub cost: CostSpec,
    pub verify_theory: VerifyTheorySpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seeds: vec![0, 1, 2],
            out_dir: None,
            trajectory_stride: 1,
            record_timing: false,
            problem: ProblemSpec::default(),
            init: InitSpec::default(),
            optimizers: OptimizerKind::ALL
                .iter()
                .map(|&kind| OptimizerSpec { kind, ..OptimizerSpec::default() })
                .collect(),
            sharpness: SharpnessSpec::default(),
            perturb_trace: PerturbTraceSpec::default(),
            landscape: LandscapeSpec::default(),
            spectrum: SpectrumSpec::default(),
            cost: CostSpec::default(),
            verify_theory: VerifyTheorySpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    FakeFlat {
        #[serde(default)]
        landscape: FakeFlatParams,
    },
    /// Random convex quadratics sharing one minimizer.
    Quadratic {
        dim: usize,
        domains: usize,
        lambda_min: f64,
        lambda_max: f64,
        #[serde(default)]
        seed: u64,
    },
    /// A single quadratic domain with the given Hessian diagonal.
    Diagonal { eigenvalues: Vec<f64> },
    Mlp {
        #[serde(default)]
        dataset: DatasetConfig,
        #[serde(default = "default_layers")]
        layers: Vec<usize>,
        #[serde(default)]
        data_seed: u64,
    },
}

fn default_layers() -> Vec<usize> {
    vec![2, 16, 16, 2]
}

impl Default for ProblemSpec {
    fn default() -> Self {
        ProblemSpec::FakeFlat { landscape: FakeFlatParams::default() }
    }
}

/// Starting or evaluation point.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    /// Uniform on `[−4, 4]²` for the fake-flat landscape, a unit-distance
    /// offset from the minimizer for quadratics, the standard initializer for the MLP.
    #[default]
    Default,
    Uniform { low: f64, high: f64 },
    Point { values: Vec<f64> },
    /// The flat minimum of the fake-flat landscape.
    FlatMinimum,
    /// The fake flat minimum of the fake-flat landscape.
    FakeMinimum,
    /// Final parameters from a `run` output file; relative paths resolve against the config file.
    Checkpoint { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSpec {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub rho: f64,
    pub batch_size: Option<usize>,
    pub iterations: usize,
}

impl Default for OptimizerSpec {
    fn default() -> Self {
        Self { kind: OptimizerKind::Dgsam, learning_rate: 0.5, rho: 0.1, batch_size: None, iterations: 2000 }
    }
}

impl OptimizerSpec {
    pub fn to_config(&self, seed: u64, record_every: usize) -> OptimizerConfig {
        OptimizerConfig {
            batch_size: self.batch_size,
            seed,
            record_every,
            ..OptimizerConfig::new(self.kind, self.learning_rate, self.rho, self.iterations)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SharpnessSpec {
    pub radius: f64,
    pub method: SharpnessMethod,
    pub ascent_steps: usize,
    pub ascent_step_size: Option<f64>,
    pub restarts: usize,
    pub samples: usize,
    /// Points to evaluate; empty means the top-level `init` point.
    pub points: Vec<InitSpec>,
}

impl Default for SharpnessSpec {
    fn default() -> Self {
        let c = SharpnessConfig::new(0.05, SharpnessMethod::GradAscent);
        Self {
            radius: c.radius,
            method: c.method,
            ascent_steps: c.ascent_steps,
            ascent_step_size: c.ascent_step_size,
            restarts: c.restarts,
            samples: c.samples,
            points: Vec::new(),
        }
    }
}

impl SharpnessSpec {
    pub fn to_config(&self) -> SharpnessConfig {
        SharpnessConfig {
            radius: self.radius,
            method: self.method,
            ascent_steps: self.ascent_steps,
            ascent_step_size: self.ascent_step_size,
            restarts: self.restarts,
            samples: self.samples,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbTraceSpec {
    pub rho: f64,
    /// Number of cumulative perturbations; defaults to the domain count.
    pub steps: Option<usize>,
    pub point: InitSpec,
}

impl Default for PerturbTraceSpec {
    fn default() -> Self {
        Self { rho: 0.05, steps: None, point: InitSpec::FakeMinimum }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LandscapeSpec {
    pub half_width: f64,
    pub resolution: usize,
    pub point: InitSpec,
    /// Use the coordinate axes instead of a random plane; only for two-parameter problems.
    pub axis_aligned: bool,
}

impl Default for LandscapeSpec {
    fn default() -> Self {
        Self { half_width: 1.0, resolution: 41, point: InitSpec::FakeMinimum, axis_aligned: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumSpec {
    pub probes: usize,
    pub steps: Option<usize>,
    pub smoothing: f64,
    pub grid_points: usize,
    /// Domain index to analyze; `None` analyzes the total loss.
    pub domain: Option<usize>,
    pub point: InitSpec,
}

impl Default for SpectrumSpec {
    fn default() -> Self {
        let c = SpectrumConfig::default();
        Self {
            probes: c.probes,
            steps: c.steps,
            smoothing: c.smoothing,
            grid_points: c.grid_points,
            domain: None,
            point: InitSpec::Default,
        }
    }
}

impl SpectrumSpec {
    pub fn to_config(&self) -> SpectrumConfig {
        SpectrumConfig { probes: self.probes, steps: self.steps, smoothing: self.smoothing, grid_points: self.grid_points }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostSpec {
    pub warmup: usize,
    pub timed: usize,
    pub learning_rate: f64,
    pub rho: f64,
    pub batch_size: Option<usize>,
}

impl Default for CostSpec {
    fn default() -> Self {
        Self { warmup: 20, timed: 200, learning_rate: 0.05, rho: 0.05, batch_size: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyTheorySpec {
    pub bound_instances: usize,
    pub bound_seed: u64,
    pub violation_thetas: Vec<f64>,
    pub prop1_rhos: Vec<f64>,
    pub convergence_eps: Vec<f64>,
    pub convergence_cap: u64,
    pub convergence_dim: usize,
    pub convergence_domains: usize,
}

impl Default for VerifyTheorySpec {
    fn default() -> Self {
        Self {
            bound_instances: 200,
            bound_seed: 2024,
            violation_thetas: vec![0.1, 0.5, 1.0],
            prop1_rhos: vec![0.001, 0.005, 0.01, 0.05],
            convergence_eps: vec![0.1, 0.01],
            convergence_cap: 100_000,
            convergence_dim: 4,
            convergence_domains: 3,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.seeds.is_empty() {
            return bad("seeds must not be empty");
        }
        if self.trajectory_stride == 0 {
            return bad("trajectory_stride must be >= 1");
        }
        if self.optimizers.is_empty() {
            return bad("at least one optimizer is required");
        }
        if self.cost.timed < 200 {
            return bad("cost.timed must be at least 200 iterations");
        }
        if self.landscape.resolution == 0 {
            return bad("landscape.resolution must be >= 1");
        }
        for o in &self.optimizers {
            o.to_config(0, 1).validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips() {
        let c = ExperimentConfig::default();
        let text = c.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn every_problem_family_round_trips() {
        let families = [
            ProblemSpec::default(),
            ProblemSpec::Quadratic { dim: 3, domains: 2, lambda_min: 0.5, lambda_max: 1.0, seed: 4 },
            ProblemSpec::Diagonal { eigenvalues: vec![1.0, 2.0, 3.0] },
            ProblemSpec::Mlp { dataset: DatasetConfig::default(), layers: default_layers(), data_seed: 1 },
        ];
        for problem in families {
            let c = ExperimentConfig { problem, init: InitSpec::Uniform { low: -1.0, high: 1.0 }, ..Default::default() };
            assert_eq!(ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap(), c);
        }
    }

    #[test]
    fn empty_file_is_the_default_experiment() {
        assert_eq!(ExperimentConfig::from_toml("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in [
            "seedz = [1]",
            "[problem]\nfamily = \"fake_flat\"\nwidth = 3.0",
            "[[optimizers]]\nkind = \"sam\"\nlr = 0.1",
            "[sharpness]\nradiu = 0.1",
            "[problem]\nfamily = \"banana\"",
        ] {
            assert!(matches!(ExperimentConfig::from_toml(text), Err(HarnessError::Config(_))), "{text}");
        }
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let text = "[[optimizers]]\nkind = \"erm\"\nlearning_rate = -1.0";
        assert!(matches!(ExperimentConfig::from_toml(text), Err(HarnessError::Config(_))));
    }
}
