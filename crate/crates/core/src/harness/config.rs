use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::datasets::{DatasetKind, DatasetSpec, DEFAULT_IMAGES_PER_CELL, DEFAULT_SIZE, DEFAULT_TEST_PER_CLASS, DEFAULT_TUNE_PER_CLASS};
use crate::graycal::DEFAULT_FRAMES;
use crate::illumsim::RenderOptions;
use crate::tinynet::TrainConfig;
use crate::tpe::TpeConfig;

/// Dataset the augmentation search scores candidates on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveSource {
    /// Held-out sweep with its own poses; the test set is never touched.
    #[default]
    Tune,
    /// Score on the test set itself (leaks test data into the search).
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub n_trials: usize,
    pub gamma: f64,
    pub n_startup: usize,
    pub n_candidates: usize,
    pub objective: ObjectiveSource,
    /// SID images per class each trial trains on.
    pub trial_images_per_class: usize,
    pub trial_max_epochs: usize,
    /// The run aborts once failed trials exceed this fraction of the budget.
    pub max_failure_fraction: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        let tpe = TpeConfig::default();
        Self {
            n_trials: 40,
            gamma: tpe.gamma,
            n_startup: tpe.n_startup,
            n_candidates: tpe.n_candidates,
            objective: ObjectiveSource::Tune,
            trial_images_per_class: 200,
            trial_max_epochs: 8,
            max_failure_fraction: 0.1,
        }
    }
}

impl SearchConfig {
    pub fn tpe(&self) -> TpeConfig {
        TpeConfig { gamma: self.gamma, n_startup: self.n_startup, n_candidates: self.n_candidates }
    }
}

/// Everything an experiment run depends on. Loaded from TOML; every key is
/// optional and falls back to the desk-scale default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// One trained model per condition per seed.
    pub seeds: Vec<u64>,
    /// Seed for every dataset build and the gray-card calibration.
    pub data_seed: u64,
    pub out: PathBuf,
    pub size: usize,
    pub images_per_cell: usize,
    pub test_per_class: usize,
    pub tune_per_class: usize,
    pub gray_frames: usize,
    pub render: RenderOptions,
    pub train: TrainConfig,
    pub search: SearchConfig,
    /// Run independent jobs and inner loops on the thread pool.
    pub parallel: bool,
    /// Write datasets and checkpoints under `out`.
    pub persist: bool,
    /// When false the wall_time column is written as zero so results.csv is
    /// byte-stable across runs.
    pub record_wall_time: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seeds: vec![0, 1, 2],
            data_seed: 0,
            out: PathBuf::from("results"),
            size: DEFAULT_SIZE,
            images_per_cell: DEFAULT_IMAGES_PER_CELL,
            test_per_class: DEFAULT_TEST_PER_CLASS,
            tune_per_class: DEFAULT_TUNE_PER_CLASS,
            gray_frames: DEFAULT_FRAMES,
            render: RenderOptions::default(),
            train: TrainConfig::default(),
            search: SearchConfig::default(),
            parallel: true,
            persist: true,
            record_wall_time: true,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Counts used by the original study: 100 images per cell, 200 trials.
    pub fn paper_scale(mut self) -> Self {
        self.images_per_cell = 100;
        self.search.n_trials = 200;
        self
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.seeds.is_empty() {
            return bad("seeds must not be empty");
        }
        if self.size < 8 {
            return bad("size must be at least 8");
        }
        if self.images_per_cell == 0 || self.test_per_class == 0 || self.tune_per_class == 0 {
            return bad("dataset counts must be positive");
        }
        if self.gray_frames == 0 {
            return bad("gray_frames must be positive");
        }
        if self.search.n_trials == 0 || self.search.trial_images_per_class == 0 || self.search.trial_max_epochs == 0 {
            return bad("search budget must be positive");
        }
        if !(0.0..1.0).contains(&self.search.max_failure_fraction) {
            return bad("max_failure_fraction must lie in [0, 1)");
        }
        if self.render.validate().is_err() {
            return bad("render.noise_sigma must be finite and non-negative");
        }
        Ok(())
    }

    pub fn exec(&self) -> crate::par::Exec {
        if self.parallel {
            crate::par::Exec::Parallel
        } else {
            crate::par::Exec::Sequential
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig { seed, input_size: self.size, ..self.train }
    }

    pub fn dataset_spec(&self, kind: DatasetKind) -> DatasetSpec {
        let count = match kind {
            DatasetKind::Fsid | DatasetKind::Ivad => self.images_per_cell,
            DatasetKind::Sid => self.images_per_cell * crate::illumsim::setting_grid().len(),
            DatasetKind::Test => self.test_per_class,
            DatasetKind::Tune => self.tune_per_class,
        };
        DatasetSpec { kind, count, seed: self.data_seed, size: self.size, render: self.render }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_toml_is_default() {
        assert_eq!(ExperimentConfig::from_toml_str("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = ExperimentConfig::default().paper_scale();
        cfg.seeds = vec![4, 5];
        cfg.search.objective = ObjectiveSource::Test;
        cfg.train.max_epochs = 3;
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_toml() {
        let cfg = ExperimentConfig::from_toml_str("seeds = [7]\n[search]\nn_trials = 5\nobjective = \"test\"\n").unwrap();
        assert_eq!(cfg.seeds, vec![7]);
        assert_eq!(cfg.search.n_trials, 5);
        assert_eq!(cfg.search.objective, ObjectiveSource::Test);
        assert_eq!(cfg.images_per_cell, DEFAULT_IMAGES_PER_CELL);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ExperimentConfig::from_toml_str("seeds = []").is_err());
        assert!(ExperimentConfig::from_toml_str("bogus = 1").is_err());
        assert!(ExperimentConfig::from_toml_str("[search]\nmax_failure_fraction = 1.5").is_err());
    }

    #[test]
    fn sid_volume_matches_fsid() {
        let cfg = ExperimentConfig::default();
        let f = cfg.dataset_spec(DatasetKind::Fsid);
        let s = cfg.dataset_spec(DatasetKind::Sid);
        assert_eq!(f.expected_len(), s.expected_len());
        assert_eq!(f.expected_len(), 7500);
    }
}
