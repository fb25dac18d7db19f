//! Experiment orchestration: builds the datasets, trains one model per
//! (condition, seed), runs the augmentation search and writes the report.

mod config;
mod report;

use std::path::{Path, PathBuf};
use std::time::Instant;

use thiserror::Error;

pub use config::{ExperimentConfig, ObjectiveSource, SearchConfig};
pub use report::{
    best_so_far_svg, emit_report, mean_std, results_csv, summary_markdown, trials_csv, Condition, ResultRow, ResultStore,
    SearchLog, STORE_FILE,
};

use crate::datasets::{self, build_ivad_with, Dataset, DatasetError, DatasetKind};
use crate::graycal::{calibrate_grid, GraycalError, IlluminationVector};
use crate::imagecore::LabeledSample;
use crate::jitter::{JitterOrder, JitterParams, MAX_HUE_STRENGTH};
use crate::par::{self, Exec};
use crate::seeding;
use crate::tinynet::{evaluate, loss_history_csv, save_checkpoint, train, Augment, CheckpointError, TrainError};
use crate::tpe::{self, FailurePolicy, OptimizeError, SearchSpace};
use crate::NUM_CLASSES;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("no results to report")]
    NothingToReport,
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("gray-card calibration: {0}")]
    Graycal(#[from] GraycalError),
    #[error("{condition} seed {seed}: {source}")]
    Train { condition: Condition, seed: u64, source: TrainError },
    #[error("augmentation search: {0}")]
    Search(String),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }
}

/// Jitter search space: brightness, contrast and saturation strengths in
/// [0, 1], hue strength in [0, 0.5].
pub fn jitter_space() -> SearchSpace {
    SearchSpace::new(JitterParams::NAMES.iter().enumerate().map(|(i, n)| (*n, 0.0, if i == 3 { MAX_HUE_STRENGTH } else { 1.0 })))
        .expect("static bounds")
}

/// Runs experiments against one config, building each dataset at most once.
pub struct Runner {
    cfg: ExperimentConfig,
    exec: Exec,
    fsid: Option<Dataset>,
    sid: Option<Dataset>,
    test: Option<Dataset>,
    tune: Option<Dataset>,
    ivad: Option<Dataset>,
    vectors: Option<Vec<IlluminationVector>>,
    verbose: bool,
}

const DATA_DIR: &str = "data";
const MODEL_DIR: &str = "models";

impl Runner {
    pub fn new(cfg: ExperimentConfig) -> Result<Self, HarnessError> {
        cfg.validate()?;
        std::fs::create_dir_all(&cfg.out).map_err(|e| HarnessError::io(&cfg.out, e))?;
        if cfg.persist {
            for d in [DATA_DIR, MODEL_DIR] {
                let p = cfg.out.join(d);
                std::fs::create_dir_all(&p).map_err(|e| HarnessError::io(&p, e))?;
            }
        }
        let exec = cfg.exec();
        Ok(Self { cfg, exec, fsid: None, sid: None, test: None, tune: None, ivad: None, vectors: None, verbose: false })
    }

    /// Print progress lines to stderr.
    pub fn verbose(mut self, on: bool) -> Self {
        self.verbose = on;
        self
    }

    fn note(&self, msg: impl FnOnce() -> String) {
        if self.verbose {
            eprintln!("{}", msg());
        }
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    fn data_file(kind: DatasetKind) -> PathBuf {
        Path::new(DATA_DIR).join(format!("{}.ilgd", kind.as_str().to_lowercase()))
    }

    fn persist(&self, ds: &Dataset) -> Result<(), HarnessError> {
        if self.cfg.persist {
            ds.save(&self.cfg.out.join(Self::data_file(ds.kind)))?;
        }
        Ok(())
    }

    fn ensure(&mut self, kind: DatasetKind) -> Result<(), HarnessError> {
        let present = match kind {
            DatasetKind::Fsid => self.fsid.is_some(),
            DatasetKind::Sid => self.sid.is_some(),
            DatasetKind::Test => self.test.is_some(),
            DatasetKind::Tune => self.tune.is_some(),
            DatasetKind::Ivad => self.ivad.is_some(),
        };
        if present {
            return Ok(());
        }
        let spec = self.cfg.dataset_spec(kind);
        self.note(|| format!("building {kind}"));
        let ds = match kind {
            DatasetKind::Fsid => datasets::build_fsid_with(&spec, self.exec)?,
            DatasetKind::Sid => datasets::build_sid_with(&spec, self.exec)?,
            DatasetKind::Test => datasets::build_test_with(&spec, self.exec)?,
            DatasetKind::Tune => datasets::build_tune_with(&spec, self.exec)?,
            DatasetKind::Ivad => {
                self.ensure(DatasetKind::Sid)?;
                let vectors = self.vectors()?.to_vec();
                build_ivad_with(self.sid.as_ref().expect("built"), &vectors, self.cfg.images_per_cell, self.cfg.data_seed, self.exec)?
            }
        };
        self.persist(&ds)?;
        let slot = match kind {
            DatasetKind::Fsid => &mut self.fsid,
            DatasetKind::Sid => &mut self.sid,
            DatasetKind::Test => &mut self.test,
            DatasetKind::Tune => &mut self.tune,
            DatasetKind::Ivad => &mut self.ivad,
        };
        *slot = Some(ds);
        Ok(())
    }

    /// Gray-card illumination vectors for the 15 grid settings.
    pub fn vectors(&mut self) -> Result<&[IlluminationVector], HarnessError> {
        if self.vectors.is_none() {
            let v = calibrate_grid(self.cfg.gray_frames, self.cfg.size, &self.cfg.render, self.cfg.data_seed, self.exec)?;
            if self.cfg.persist {
                let p = self.cfg.out.join(DATA_DIR).join("vectors.json");
                std::fs::write(&p, serde_json::to_string_pretty(&v).expect("vectors serialize"))
                    .map_err(|e| HarnessError::io(&p, e))?;
            }
            self.vectors = Some(v);
        }
        Ok(self.vectors.as_deref().expect("set above"))
    }

    fn built(&self, kind: DatasetKind) -> &Dataset {
        match kind {
            DatasetKind::Fsid => self.fsid.as_ref(),
            DatasetKind::Sid => self.sid.as_ref(),
            DatasetKind::Test => self.test.as_ref(),
            DatasetKind::Tune => self.tune.as_ref(),
            DatasetKind::Ivad => self.ivad.as_ref(),
        }
        .expect("dataset built before use")
    }

    pub fn dataset(&mut self, kind: DatasetKind) -> Result<&Dataset, HarnessError> {
        self.ensure(kind)?;
        Ok(self.built(kind))
    }

    /// Builds (and persists, if enabled) every dataset and the gray-card
    /// vectors.
    pub fn generate(&mut self) -> Result<(), HarnessError> {
        for kind in [DatasetKind::Fsid, DatasetKind::Sid, DatasetKind::Test, DatasetKind::Tune, DatasetKind::Ivad] {
            self.ensure(kind)?;
        }
        Ok(())
    }

    /// Trains one model per seed on `train_kind` and scores it on TEST.
    fn fit_all(&mut self, condition: Condition, train_kind: DatasetKind, augment: Augment) -> Result<Vec<ResultRow>, HarnessError> {
        self.ensure(train_kind)?;
        self.ensure(DatasetKind::Test)?;
        let train_set = self.built(train_kind).samples.as_slice();
        let test = self.built(DatasetKind::Test).samples.as_slice();
        let dataset = self.cfg.persist.then(|| Self::data_file(train_kind));
        let cfg = &self.cfg;
        let exec = self.exec;
        let verbose = self.verbose;
        par::map(exec, &cfg.seeds, |&seed| {
            let row = fit_one(cfg, exec, condition, seed, train_set, test, &augment, dataset.clone());
            if let (true, Ok(r)) = (verbose, &row) {
                eprintln!("{condition} seed {seed}: accuracy {:.4}", r.accuracy);
            }
            row
        })
        .into_iter()
        .collect()
    }

    /// FSID and SID rows, one per seed each.
    pub fn run_exp1(&mut self) -> Result<Vec<ResultRow>, HarnessError> {
        let mut rows = self.fit_all(Condition::Fsid, DatasetKind::Fsid, Augment::None)?;
        rows.extend(self.fit_all(Condition::Sid, DatasetKind::Sid, Augment::None)?);
        Ok(rows)
    }

    /// IVAD rows: SID remapped to every grid setting by gray-card ratios.
    pub fn run_exp2(&mut self) -> Result<Vec<ResultRow>, HarnessError> {
        self.fit_all(Condition::Ivad, DatasetKind::Ivad, Augment::None)
    }

    /// TPE search over jitter strengths, then BO-DA rows trained on SID with
    /// the best strengths.
    pub fn run_exp3(&mut self) -> Result<(Vec<ResultRow>, SearchLog), HarnessError> {
        let objective_kind = match self.cfg.search.objective {
            ObjectiveSource::Tune => DatasetKind::Tune,
            ObjectiveSource::Test => DatasetKind::Test,
        };
        self.ensure(objective_kind)?;
        self.ensure(DatasetKind::Sid)?;
        let subset = class_prefix(&self.built(DatasetKind::Sid).samples, self.cfg.search.trial_images_per_class);
        let objective_set = self.built(objective_kind).samples.as_slice();
        let search_seed = self.cfg.seeds[0];
        let trial_cfg = crate::tinynet::TrainConfig { max_epochs: self.cfg.search.trial_max_epochs, ..self.cfg.train_config(search_seed) };
        let exec = self.exec;
        let verbose = self.verbose;
        let space = jitter_space();
        let objective = |_index: usize, p: &[f64]| -> Result<f64, TrainError> {
            let params = JitterParams::from_array([p[0], p[1], p[2], p[3]]);
            let out = train(&subset, &trial_cfg, &Augment::Jitter(params, JitterOrder::Random), exec)?;
            Ok(evaluate(&out.model, objective_set, exec).accuracy)
        };
        let result = tpe::optimize(
            objective,
            &space,
            self.cfg.search.n_trials,
            seeding::derive(search_seed, 0x7be),
            &self.cfg.search.tpe(),
            FailurePolicy::Tolerate(self.cfg.search.max_failure_fraction),
            |h| {
                if let (true, Some(t)) = (verbose, h.trials.last()) {
                    eprintln!("trial {}: objective {:.4}", t.index, t.objective);
                }
            },
        );
        let (best, history) = result.map_err(|e: OptimizeError<TrainError>| HarnessError::Search(e.to_string()))?;
        let params = JitterParams::from_array([best.params[0], best.params[1], best.params[2], best.params[3]]);
        let log = SearchLog { trials: history.trials, failures: history.failures, best: params, best_objective: best.objective };
        let rows = self.fit_all(Condition::BoDa, DatasetKind::Sid, Augment::Jitter(params, JitterOrder::Random))?;
        Ok((rows, log))
    }
}

/// The first `per_class` samples of each class, in dataset order.
fn class_prefix(samples: &[LabeledSample], per_class: usize) -> Vec<LabeledSample> {
    let mut taken = [0usize; NUM_CLASSES];
    samples
        .iter()
        .filter(|s| {
            let t = &mut taken[usize::from(s.label)];
            *t += 1;
            *t <= per_class
        })
        .cloned()
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn fit_one(
    cfg: &ExperimentConfig,
    exec: Exec,
    condition: Condition,
    seed: u64,
    train_set: &[LabeledSample],
    test: &[LabeledSample],
    augment: &Augment,
    dataset: Option<PathBuf>,
) -> Result<ResultRow, HarnessError> {
    let start = Instant::now();
    let out = train(train_set, &cfg.train_config(seed), augment, exec)
        .map_err(|source| HarnessError::Train { condition, seed, source })?;
    let m = evaluate(&out.model, test, exec);
    let wall_time = if cfg.record_wall_time { start.elapsed().as_secs_f64() } else { 0.0 };
    let checkpoint = if cfg.persist {
        let stem = format!("{}_seed{seed}", condition.as_str().to_lowercase());
        let rel = Path::new(MODEL_DIR).join(format!("{stem}.ilgm"));
        save_checkpoint(&out.model, &cfg.out.join(&rel))?;
        let hist = cfg.out.join(MODEL_DIR).join(format!("{stem}.history.csv"));
        std::fs::write(&hist, loss_history_csv(&out.history)).map_err(|e| HarnessError::io(&hist, e))?;
        Some(rel)
    } else {
        None
    };
    Ok(ResultRow {
        condition,
        seed,
        accuracy: m.accuracy,
        precision_weighted: m.precision_weighted,
        recall_weighted: m.recall_weighted,
        wall_time,
        checkpoint,
        dataset,
    })
}

/// Which experiments a run covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Exp1,
    Exp2,
    Exp3,
}

/// Runs the requested experiments, merges their rows into the store under
/// the output directory and rewrites the report.
pub fn run(cfg: ExperimentConfig, experiments: &[Experiment], verbose: bool) -> Result<ResultStore, HarnessError> {
    let mut runner = Runner::new(cfg)?.verbose(verbose);
    let out = runner.config().out.clone();
    let mut store = ResultStore::load_or_default(&out)?;
    for e in experiments {
        match e {
            Experiment::Exp1 => store.merge(runner.run_exp1()?),
            Experiment::Exp2 => store.merge(runner.run_exp2()?),
            Experiment::Exp3 => {
                let (rows, log) = runner.run_exp3()?;
                store.merge(rows);
                store.search = Some(log);
            }
        }
        store.save(&out)?;
    }
    emit_report(&store, &out)?;
    Ok(store)
}

pub fn run_exp1(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>, HarnessError> {
    Runner::new(cfg.clone())?.run_exp1()
}

pub fn run_exp2(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>, HarnessError> {
    Runner::new(cfg.clone())?.run_exp2()
}

pub fn run_exp3(cfg: &ExperimentConfig) -> Result<(Vec<ResultRow>, SearchLog), HarnessError> {
    Runner::new(cfg.clone())?.run_exp3()
}
