use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::metrics::argmax;
use super::model::{cross_entropy, Architecture, Model, ModelError};
use crate::datasets::{compute_normalization, stratified_split, DatasetError};
use crate::imagecore::{Image, LabeledSample};
use crate::jitter::{apply_color_jitter, JitterOrder, JitterParams};
use crate::par::{self, Exec};
use crate::seeding;
use crate::NUM_CLASSES;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training set is empty")]
    Empty,
    #[error("training set contains a single class")]
    SingleClass,
    #[error("non-finite parameters after step {step}")]
    NonFinite { step: usize },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub val_split: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub input_size: usize,
    pub architecture: Architecture,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            val_split: 0.2,
            batch_size: 64,
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_epochs: 40,
            patience: 5,
            seed: 0,
            input_size: 32,
            architecture: Architecture::TinyCnn,
        }
    }
}

pub type CustomAugment = Arc<dyn Fn(&Image, &mut seeding::Rng) -> Image + Send + Sync>;

/// Per-image training-time transform.
#[derive(Clone, Default)]
pub enum Augment {
    #[default]
    None,
    /// Fresh color jitter draw every time an image enters a batch.
    Jitter(JitterParams, JitterOrder),
    Custom(CustomAugment),
}

impl fmt::Debug for Augment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Augment::None => f.write_str("None"),
            Augment::Jitter(p, o) => write!(f, "Jitter({p:?}, {o:?})"),
            Augment::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl Augment {
    fn apply(&self, image: &Image, rng: &mut seeding::Rng) -> Option<Image> {
        match self {
            Augment::None => None,
            Augment::Jitter(p, _) if p.is_zero() => None,
            Augment::Jitter(p, o) => Some(apply_color_jitter(image, p, *o, rng)),
            Augment::Custom(f) => Some(f(image, rng)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model<f32>,
    /// Epoch 0 is the untrained model.
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

pub fn loss_history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss,val_accuracy\n");
    for r in history {
        out.push_str(&format!("{},{:.6},{:.6},{:.6}\n", r.epoch, r.train_loss, r.val_loss, r.val_accuracy));
    }
    out
}

struct Adam {
    m: Vec<f32>,
    v: Vec<f32>,
    t: i32,
    lr: f32,
    b1: f32,
    b2: f32,
    eps: f32,
}

impl Adam {
    fn new(n: usize, cfg: &TrainConfig) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr: cfg.learning_rate as f32,
            b1: cfg.beta1 as f32,
            b2: cfg.beta2 as f32,
            eps: cfg.epsilon as f32,
        }
    }

    fn step(&mut self, params: &mut [f32], grad: &[f32]) {
        self.t += 1;
        let c1 = 1.0 - self.b1.powi(self.t);
        let c2 = 1.0 - self.b2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.b1 * self.m[i] + (1.0 - self.b1) * g;
            self.v[i] = self.b2 * self.v[i] + (1.0 - self.b2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

fn loss_and_accuracy(model: &Model<f32>, inputs: &[Vec<f32>], labels: &[u8], exec: Exec) -> (f64, f64) {
    let per = par::map_range(exec, inputs.len(), |i| {
        let z = model.logits_prepared(&inputs[i]);
        (f64::from(cross_entropy(&z, usize::from(labels[i]))), argmax(&z) == labels[i])
    });
    let n = per.len().max(1) as f64;
    let (loss, correct) = per.into_iter().fold((0.0, 0usize), |(l, c), (a, b)| (l + a, c + usize::from(b)));
    (loss / n, correct as f64 / n)
}

fn fit_size(image: &Image, size: usize) -> std::borrow::Cow<'_, Image> {
    if image.dims() == (size, size) {
        std::borrow::Cow::Borrowed(image)
    } else {
        std::borrow::Cow::Owned(image.resize_nearest(size, size))
    }
}

/// Trains a model with Adam and validation-loss early stopping, returning
/// the parameters of the best validation epoch.
pub fn train(samples: &[LabeledSample], config: &TrainConfig, augment: &Augment, exec: Exec) -> Result<TrainOutcome, TrainError> {
    if samples.is_empty() {
        return Err(TrainError::Empty);
    }
    let mut present = [false; NUM_CLASSES];
    for s in samples {
        present[usize::from(s.label)] = true;
    }
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(TrainError::SingleClass);
    }
    let size = config.input_size;
    let (train_idx, val_idx) = stratified_split(samples, config.val_split, config.seed)?;
    let train_imgs: Vec<std::borrow::Cow<'_, Image>> = train_idx.iter().map(|&i| fit_size(&samples[i].image, size)).collect();
    let norm = compute_normalization(train_imgs.iter().map(|c| c.as_ref()))?;
    let mut model = Model::<f32>::new(config.architecture, size, norm, config.seed)?;

    let prep = |model: &Model<f32>, idx: &[usize]| -> Vec<Vec<f32>> {
        par::map(exec, idx, |&i| model.prepare(&fit_size(&samples[i].image, size)).expect("resized to input size"))
    };
    let val_x = prep(&model, &val_idx);
    let val_y: Vec<u8> = val_idx.iter().map(|&i| samples[i].label).collect();
    let train_y: Vec<u8> = train_idx.iter().map(|&i| samples[i].label).collect();
    let plain_train = prep(&model, &train_idx);

    let (tl, _) = loss_and_accuracy(&model, &plain_train, &train_y, exec);
    let (vl, va) = loss_and_accuracy(&model, &val_x, &val_y, exec);
    let mut history = vec![EpochRecord { epoch: 0, train_loss: tl, val_loss: vl, val_accuracy: va }];
    let mut best = (vl, model.params.clone(), 0usize);
    let mut since_best = 0;
    let mut adam = Adam::new(model.param_count(), config);
    let mut step = 0;
    let batch = config.batch_size.max(1);

    for epoch in 1..=config.max_epochs {
        let mut order: Vec<usize> = (0..train_idx.len()).collect();
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut seeding::child_rng(config.seed, epoch as u64));
        let epoch_seed = seeding::derive(config.seed, 0xA06_0000 + epoch as u64);
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(batch).enumerate() {
            let augmented: Vec<Option<Vec<f32>>> = par::map_range(exec, chunk.len(), |j| {
                let pos = chunk[j];
                let mut rng = seeding::child_rng(epoch_seed, (b * batch + j) as u64);
                augment.apply(&train_imgs[pos], &mut rng).map(|im| model.prepare(&im).expect("input size"))
            });
            let inputs: Vec<&[f32]> =
                chunk.iter().zip(&augmented).map(|(&pos, a)| a.as_deref().unwrap_or(&plain_train[pos])).collect();
            let labels: Vec<u8> = chunk.iter().map(|&pos| train_y[pos]).collect();
            let (loss, grad) = model.loss_and_grad_prepared(&inputs, &labels, exec);
            loss_sum += f64::from(loss) * chunk.len() as f64;
            adam.step(&mut model.params, &grad);
            step += 1;
            if !model.is_finite() {
                return Err(TrainError::NonFinite { step });
            }
        }
        let (vl, va) = loss_and_accuracy(&model, &val_x, &val_y, exec);
        history.push(EpochRecord { epoch, train_loss: loss_sum / train_idx.len() as f64, val_loss: vl, val_accuracy: va });
        if vl < best.0 {
            best = (vl, model.params.clone(), epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    model.params = best.1;
    Ok(TrainOutcome { model, history, best_epoch: best.2 })
}
