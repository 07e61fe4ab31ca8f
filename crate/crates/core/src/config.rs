//! Run configuration: one TOML document that fixes every knob of an
//! experiment. A copy is written next to every artifact.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenegen::{OracleConfig, RenderConfig, SceneGenConfig};
use crate::specfit::PenaltyConfig;
use crate::specmodel::{Architecture, LossWeights, TrainConfig};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "DEMOSPEC_OUT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub train_scenes_per_type: usize,
    pub test_scenes_per_type: usize,
    pub traj_per_scene: usize,
    pub min_objects: usize,
    pub max_objects: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self { train_scenes_per_type: 20, test_scenes_per_type: 20, traj_per_scene: 10, min_objects: 1, max_objects: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub seeds: usize,
    pub traj_sweep: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { seeds: 10, traj_sweep: vec![1, 3, 5, 7, 9] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineConfig {
    pub steps: usize,
    pub learning_rate: f64,
    /// Ascend `log v̂` instead of `v̂`.
    pub log_objective: bool,
    pub inits_per_scene: usize,
    /// Random draws allowed when looking for oracle-invalid initializations.
    pub init_attempts: usize,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self { steps: 30, learning_rate: 3000.0, log_objective: true, inits_per_scene: 5, init_attempts: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CausalConfig {
    /// Control-point grid side; each scene contributes `grid²` samples.
    pub grid: usize,
    pub placements_per_scene: usize,
    pub bootstrap_reps: usize,
    pub confidence: f64,
    pub min_effect: f64,
    pub min_samples: usize,
}

impl Default for CausalConfig {
    fn default() -> Self {
        Self { grid: 12, placements_per_scene: 20, bootstrap_reps: 1000, confidence: 0.95, min_effect: 0.05, min_samples: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpecfitConfig {
    pub penalty: PenaltyConfig,
    /// Search upper bound; the table diagonal when absent.
    pub upper_bound: Option<i64>,
    /// Clearance used by the synthetic two-object demonstration generator.
    pub synthetic_clearance: f64,
    pub synthetic_demos: usize,
    pub sweep: Vec<usize>,
    pub sweep_seeds: usize,
    pub cost_map_resolution: usize,
}

impl Default for SpecfitConfig {
    fn default() -> Self {
        Self {
            penalty: PenaltyConfig::default(),
            upper_bound: None,
            synthetic_clearance: 20.0,
            synthetic_demos: 80,
            sweep: vec![2, 5, 10, 20],
            sweep_seeds: 5,
            cost_map_resolution: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub jobs: usize,
    pub deterministic: bool,
    pub dataset: DatasetConfig,
    pub scene: SceneGenConfig,
    pub render: RenderConfig,
    pub oracle: OracleConfig,
    pub loss: LossWeights,
    pub arch: Architecture,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub refine: RefineConfig,
    pub causal: CausalConfig,
    pub specfit: SpecfitConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: None,
            jobs: 1,
            deterministic: true,
            dataset: DatasetConfig::default(),
            scene: SceneGenConfig::default(),
            render: RenderConfig::default(),
            oracle: OracleConfig::default(),
            loss: LossWeights::default(),
            arch: Architecture::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            refine: RefineConfig::default(),
            causal: CausalConfig::default(),
            specfit: SpecfitConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Sets the render and network resolution together.
    pub fn with_image_size(mut self, size: usize) -> Self {
        self.render.size = size;
        self.arch.image_size = size;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dataset;
        let counts = [
            ("dataset.train_scenes_per_type", d.train_scenes_per_type),
            ("dataset.test_scenes_per_type", d.test_scenes_per_type),
            ("dataset.traj_per_scene", d.traj_per_scene),
            ("eval.seeds", self.eval.seeds),
            ("refine.steps", self.refine.steps),
            ("refine.inits_per_scene", self.refine.inits_per_scene),
            ("causal.grid", self.causal.grid),
            ("causal.placements_per_scene", self.causal.placements_per_scene),
            ("causal.bootstrap_reps", self.causal.bootstrap_reps),
            ("specfit.penalty.resample_points", self.specfit.penalty.resample_points),
            ("train.max_epochs", self.train.max_epochs),
            ("train.batch_scenes", self.train.batch_scenes),
            ("jobs", self.jobs),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if d.min_objects > d.max_objects {
            return Err(Error::Config("dataset.min_objects exceeds max_objects".into()));
        }
        if self.render.size != self.arch.image_size {
            return Err(Error::Config(format!(
                "render.size ({}) and arch.image_size ({}) differ",
                self.render.size, self.arch.image_size
            )));
        }
        if self.render.size < 8 {
            return Err(Error::Config("image size must be at least 8".into()));
        }
        let w = self.loss;
        if [w.alpha, w.beta, w.gamma].iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config("loss weights must be finite and non-negative".into()));
        }
        if !(self.specfit.penalty.f_max > 0.0) {
            return Err(Error::Config("specfit.penalty.f_max must be > 0".into()));
        }
        if !(0.0 < self.causal.confidence && self.causal.confidence < 1.0) {
            return Err(Error::Config("causal.confidence must be in (0, 1)".into()));
        }
        if self.eval.traj_sweep.iter().any(|&k| k == 0 || k > d.traj_per_scene) {
            return Err(Error::Config("eval.traj_sweep entries must be in 1..=traj_per_scene".into()));
        }
        self.oracle.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let cfg = RunConfig::default().with_image_size(64);
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_files_fill_defaults() {
        let cfg = RunConfig::from_toml_str("seed = 7\n[dataset]\ntraj_per_scene = 10\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.dataset.train_scenes_per_type, 20);
    }

    #[test]
    fn rejects_zero_counts_and_mismatched_sizes() {
        let mut cfg = RunConfig::default();
        cfg.dataset.traj_per_scene = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.render.size = 64;
        assert!(cfg.validate().is_err());
    }
}
