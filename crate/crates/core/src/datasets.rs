//! Dataset builders for the training conditions and the continuous test
//! sweep, plus stratified splitting and normalization statistics.
//!
//! Sample order is fixed by (setting, class, index) for grid builds and by
//! (class, index) for sweep builds, so results do not depend on how rendering
//! is scheduled.

use std::fmt;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graycal::{apply_vector_mapping, mapping_ratio, GraycalError, IlluminationVector, MappingRatio};
use crate::illumsim::{
    grid_setting, render_sample, setting_grid, ColorClass, Distribution, IllumError, IlluminationSetting, RenderOptions,
    SceneSpec,
};
use crate::imagecore::{load_dataset, save_dataset, DatasetFileError, Image, LabeledSample, Manifest};
use crate::par::{self, Exec};
use crate::seeding;
use crate::NUM_CLASSES;

pub const DEFAULT_SIZE: usize = 32;
pub const DEFAULT_IMAGES_PER_CELL: usize = 50;
pub const DEFAULT_TEST_PER_CLASS: usize = 200;
pub const DEFAULT_TUNE_PER_CLASS: usize = 100;
pub const MIN_CLASS_SAMPLES: usize = 5;
pub const STD_FLOOR: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("spec kind {found} passed to the {expected} builder")]
    WrongKind { expected: DatasetKind, found: DatasetKind },
    #[error("need {needed} SID samples of class {class}, have {have}")]
    InsufficientSid { class: usize, needed: usize, have: usize },
    #[error("expected 15 grid illumination vectors, got {0}")]
    MissingVectors(usize),
    #[error("class {class} has {count} samples, need at least {MIN_CLASS_SAMPLES}")]
    ClassTooSmall { class: usize, count: usize },
    #[error("dataset is empty")]
    Empty,
    #[error("split fraction {0} must lie in (0, 1)")]
    BadFraction(f64),
    #[error(transparent)]
    Illum(#[from] IllumError),
    #[error(transparent)]
    Graycal(#[from] GraycalError),
    #[error(transparent)]
    File(#[from] DatasetFileError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DatasetKind {
    #[serde(rename = "FSID")]
    Fsid,
    #[serde(rename = "SID")]
    Sid,
    #[serde(rename = "IVAD")]
    Ivad,
    #[serde(rename = "TEST")]
    Test,
    #[serde(rename = "TUNE")]
    Tune,
}

impl DatasetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetKind::Fsid => "FSID",
            DatasetKind::Sid => "SID",
            DatasetKind::Ivad => "IVAD",
            DatasetKind::Test => "TEST",
            DatasetKind::Tune => "TUNE",
        }
    }

    /// Top byte of every pose seed drawn for this kind; keeps the pose
    /// ranges of different builds disjoint.
    fn pose_tag(self) -> u64 {
        match self {
            DatasetKind::Fsid => 1,
            DatasetKind::Sid | DatasetKind::Ivad => 2,
            DatasetKind::Test => 3,
            DatasetKind::Tune => 4,
        }
    }

    pub fn distribution(self) -> Distribution {
        match self {
            DatasetKind::Fsid | DatasetKind::Ivad => Distribution::Grid,
            DatasetKind::Sid => Distribution::Singular(reference_setting()),
            DatasetKind::Test | DatasetKind::Tune => Distribution::ContinuousSweep,
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The single setting SID is captured under: (White, 0).
pub fn reference_setting() -> IlluminationSetting {
    grid_setting(ColorClass::White, 0).expect("grid cell")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    /// Images per (setting, class) cell for FSID/IVAD; images per class for
    /// SID, TEST and TUNE.
    pub count: usize,
    pub seed: u64,
    pub size: usize,
    pub render: RenderOptions,
}

impl DatasetSpec {
    pub fn new(kind: DatasetKind, count: usize, seed: u64) -> Self {
        Self { kind, count, seed, size: DEFAULT_SIZE, render: RenderOptions::default() }
    }

    /// SID spec with the same total volume as a FSID spec.
    pub fn sid_matching(fsid: &DatasetSpec, seed: u64) -> Self {
        Self { kind: DatasetKind::Sid, count: fsid.count * setting_grid().len(), seed, ..*fsid }
    }

    pub fn distribution(&self) -> Distribution {
        self.kind.distribution()
    }

    pub fn expected_len(&self) -> usize {
        match self.kind {
            DatasetKind::Fsid | DatasetKind::Ivad => self.count * NUM_CLASSES * setting_grid().len(),
            _ => self.count * NUM_CLASSES,
        }
    }

    fn check(&self, expected: DatasetKind) -> Result<(), DatasetError> {
        if self.kind != expected {
            return Err(DatasetError::WrongKind { expected, found: self.kind });
        }
        self.render.validate()?;
        Ok(())
    }

    fn pose_seed(&self, index: usize) -> u64 {
        (self.kind.pose_tag() << 56) | ((self.seed & 0xFF_FFFF) << 32) | index as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub kind: DatasetKind,
    pub seed: u64,
    pub distribution: Distribution,
    pub samples: Vec<LabeledSample>,
    pub provenance: serde_json::Value,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let mut c = [0; NUM_CLASSES];
        for s in &self.samples {
            c[usize::from(s.label)] += 1;
        }
        c
    }

    pub fn save(&self, path: &Path) -> Result<Manifest, DatasetError> {
        Ok(save_dataset(&self.samples, self.kind.as_str(), self.seed, &self.distribution, self.provenance.clone(), path)?)
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let loaded = load_dataset(path)?;
        let kind: DatasetKind = serde_json::from_value(serde_json::Value::String(loaded.manifest.kind.clone()))
            .map_err(DatasetFileError::from)?;
        Ok(Self {
            kind,
            seed: loaded.manifest.seed,
            distribution: loaded.manifest.distribution,
            samples: loaded.samples,
            provenance: loaded.manifest.provenance,
        })
    }
}

struct Job {
    class_id: usize,
    setting: IlluminationSetting,
    pose_seed: u64,
}

fn render_jobs(spec: &DatasetSpec, jobs: &[Job], exec: Exec) -> Result<Vec<LabeledSample>, DatasetError> {
    let out = par::map(exec, jobs, |job| -> Result<LabeledSample, IllumError> {
        let scene = SceneSpec { class_id: job.class_id, pose_seed: job.pose_seed, size: spec.size };
        let mut rng = seeding::child_rng(spec.seed, job.pose_seed);
        let image = render_sample(&scene, &job.setting, &spec.render, &mut rng)?.quantized();
        Ok(LabeledSample { image, label: job.class_id as u8, setting: job.setting, pose_seed: job.pose_seed })
    });
    Ok(out.into_iter().collect::<Result<Vec<_>, _>>()?)
}

fn dataset(spec: &DatasetSpec, samples: Vec<LabeledSample>) -> Dataset {
    Dataset {
        kind: spec.kind,
        seed: spec.seed,
        distribution: spec.distribution(),
        samples,
        provenance: serde_json::to_value(spec).expect("spec serializes"),
    }
}

/// Every grid setting x class x `count` images, each with a fresh pose.
pub fn build_fsid(spec: &DatasetSpec) -> Result<Dataset, DatasetError> {
    build_fsid_with(spec, Exec::default())
}

pub fn build_fsid_with(spec: &DatasetSpec, exec: Exec) -> Result<Dataset, DatasetError> {
    spec.check(DatasetKind::Fsid)?;
    let mut jobs = Vec::with_capacity(spec.expected_len());
    for setting in setting_grid() {
        for class_id in 0..NUM_CLASSES {
            for _ in 0..spec.count {
                jobs.push(Job { class_id, setting, pose_seed: spec.pose_seed(jobs.len()) });
            }
        }
    }
    Ok(dataset(spec, render_jobs(spec, &jobs, exec)?))
}

/// `count` images per class, all under the (White, 0) setting.
pub fn build_sid(spec: &DatasetSpec) -> Result<Dataset, DatasetError> {
    build_sid_with(spec, Exec::default())
}

pub fn build_sid_with(spec: &DatasetSpec, exec: Exec) -> Result<Dataset, DatasetError> {
    spec.check(DatasetKind::Sid)?;
    let setting = reference_setting();
    let mut jobs = Vec::with_capacity(spec.expected_len());
    for class_id in 0..NUM_CLASSES {
        for _ in 0..spec.count {
            jobs.push(Job { class_id, setting, pose_seed: spec.pose_seed(jobs.len()) });
        }
    }
    Ok(dataset(spec, render_jobs(spec, &jobs, exec)?))
}

fn sweep(spec: &DatasetSpec, exec: Exec) -> Result<Dataset, DatasetError> {
    let mut rng = seeding::child_rng(spec.seed, 0x5eed);
    let mut jobs = Vec::with_capacity(spec.expected_len());
    for class_id in 0..NUM_CLASSES {
        for _ in 0..spec.count {
            let color_class = ColorClass::ALL[rng.random_range(0..3)];
            let ((lux_lo, lux_hi), (k_lo, k_hi)) = IlluminationSetting::class_ranges(color_class);
            let kelvin = rng.random_range(k_lo..=k_hi);
            let lux = rng.random_range(lux_lo..=lux_hi);
            let level = IlluminationSetting::nearest_level(color_class, lux);
            let setting = IlluminationSetting::new(color_class, level, lux, kelvin)?;
            jobs.push(Job { class_id, setting, pose_seed: spec.pose_seed(jobs.len()) });
        }
    }
    Ok(dataset(spec, render_jobs(spec, &jobs, exec)?))
}

/// Continuous illumination sweep: per sample a uniform color class, then
/// kelvin and lux uniform within that class's measured ranges.
pub fn build_test(spec: &DatasetSpec) -> Result<Dataset, DatasetError> {
    build_test_with(spec, Exec::default())
}

pub fn build_test_with(spec: &DatasetSpec, exec: Exec) -> Result<Dataset, DatasetError> {
    spec.check(DatasetKind::Test)?;
    sweep(spec, exec)
}

/// Same law as the test sweep with its own seed and pose range; used as the
/// augmentation-search objective so the test set stays untouched.
pub fn build_tune(spec: &DatasetSpec) -> Result<Dataset, DatasetError> {
    build_tune_with(spec, Exec::default())
}

pub fn build_tune_with(spec: &DatasetSpec, exec: Exec) -> Result<Dataset, DatasetError> {
    spec.check(DatasetKind::Tune)?;
    sweep(spec, exec)
}

/// Ratios taking the reference (White, 0) vector to each grid vector.
pub fn grid_ratios(vectors: &[IlluminationVector]) -> Result<Vec<MappingRatio>, DatasetError> {
    let grid = setting_grid();
    if vectors.len() != grid.len() {
        return Err(DatasetError::MissingVectors(vectors.len()));
    }
    let reference = reference_setting();
    let source = vectors[reference.grid_index()];
    grid.iter()
        .map(|s| {
            let target = &vectors[s.grid_index()];
            if *s == reference {
                Ok(MappingRatio::identity(reference))
            } else {
                Ok(mapping_ratio(&source, target)?)
            }
        })
        .collect()
}

/// Remaps SID images to every grid setting by gray-card ratio
/// multiplication, mirroring FSID's (setting, class) composition.
pub fn build_ivad(
    sid: &Dataset,
    vectors: &[IlluminationVector],
    images_per_cell: usize,
    seed: u64,
) -> Result<Dataset, DatasetError> {
    build_ivad_with(sid, vectors, images_per_cell, seed, Exec::default())
}

pub fn build_ivad_with(
    sid: &Dataset,
    vectors: &[IlluminationVector],
    images_per_cell: usize,
    seed: u64,
    exec: Exec,
) -> Result<Dataset, DatasetError> {
    let ratios = grid_ratios(vectors)?;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); NUM_CLASSES];
    for (i, s) in sid.samples.iter().enumerate() {
        by_class[usize::from(s.label)].push(i);
    }
    for (class, idx) in by_class.iter().enumerate() {
        if idx.len() < images_per_cell {
            return Err(DatasetError::InsufficientSid { class, needed: images_per_cell, have: idx.len() });
        }
    }
    let mut rng = seeding::child_rng(seed, 0x1fad);
    let mut picks: Vec<(usize, usize)> = Vec::with_capacity(ratios.len() * NUM_CLASSES * images_per_cell);
    for (k, _) in ratios.iter().enumerate() {
        for pool in &by_class {
            for &i in pool.choose_multiple(&mut rng, images_per_cell) {
                picks.push((k, i));
            }
        }
    }
    let samples = par::map(exec, &picks, |&(k, i)| {
        let src = &sid.samples[i];
        let ratio = &ratios[k];
        let image = if ratio.source == ratio.target {
            src.image.clone()
        } else {
            apply_vector_mapping(&src.image, ratio).quantized()
        };
        LabeledSample { image, label: src.label, setting: ratio.target, pose_seed: src.pose_seed }
    });
    Ok(Dataset {
        kind: DatasetKind::Ivad,
        seed,
        distribution: Distribution::Grid,
        samples,
        provenance: serde_json::json!({ "source_seed": sid.seed, "vectors": vectors, "ratios": ratios }),
    })
}

/// Per-class proportional split into (train, validation) index lists.
pub fn stratified_split(samples: &[LabeledSample], fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>), DatasetError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(DatasetError::BadFraction(fraction));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); NUM_CLASSES];
    for (i, s) in samples.iter().enumerate() {
        by_class[usize::from(s.label)].push(i);
    }
    let mut rng = seeding::child_rng(seed, 0x5971);
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (class, mut idx) in by_class.into_iter().enumerate() {
        if idx.is_empty() {
            continue;
        }
        if idx.len() < MIN_CLASS_SAMPLES {
            return Err(DatasetError::ClassTooSmall { class, count: idx.len() });
        }
        idx.shuffle(&mut rng);
        let n_val = (fraction * idx.len() as f64).round() as usize;
        val.extend_from_slice(&idx[..n_val]);
        train.extend_from_slice(&idx[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl NormalizationStats {
    pub fn identity() -> Self {
        Self { mean: [0.0; 3], std: [1.0; 3] }
    }
}

/// Per-channel mean and standard deviation over every pixel.
pub fn compute_normalization<'a>(images: impl IntoIterator<Item = &'a Image>) -> Result<NormalizationStats, DatasetError> {
    let mut sum = [0.0f64; 3];
    let mut sq = [0.0f64; 3];
    let mut n = 0usize;
    for im in images {
        for p in im.data().chunks_exact(3) {
            for c in 0..3 {
                let v = f64::from(p[c]);
                sum[c] += v;
                sq[c] += v * v;
            }
        }
        n += im.pixel_count();
    }
    if n == 0 {
        return Err(DatasetError::Empty);
    }
    let nf = n as f64;
    let mean = sum.map(|s| s / nf);
    let std = std::array::from_fn(|c| (sq[c] / nf - mean[c] * mean[c]).max(0.0).sqrt().max(STD_FLOOR));
    Ok(NormalizationStats { mean, std })
}
