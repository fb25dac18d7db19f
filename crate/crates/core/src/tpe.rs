//! Univariate Tree-structured Parzen Estimator with an ask/tell interface.
//!
//! Objectives are maximized. After `n_startup` completed trials, history is
//! split at the `gamma` quantile into a good set (top `ceil(gamma * n)`) and a
//! bad set. Each dimension gets two Parzen mixtures of truncated normals, one
//! kernel per observation plus a uniform prior kernel, all with weight
//! `1/(k+1)`. A kernel's bandwidth is the distance to its farther sorted
//! neighbour, clamped to `[1%, 100%]` of the dimension's range. `ask` draws
//! `n_candidates` points from the good mixture and returns the one with the
//! largest `l(x)/g(x)` summed in log space over dimensions.

use std::fmt;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;
use thiserror::Error;

use crate::seeding;

#[derive(Debug, Error, PartialEq)]
pub enum TpeError {
    #[error("dimension {name}: lower bound {low} must be below upper bound {high}")]
    BadBounds { name: String, low: f64, high: f64 },
    #[error("objective must be finite, got {0}")]
    NonFinite(f64),
    #[error("parameter {index} = {value} outside [{low}, {high}]")]
    OutOfBounds { index: usize, value: f64, low: f64, high: f64 },
    #[error("expected {expected} parameters, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("n_trials must be at least 1")]
    NoTrials,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub low: f64,
    pub high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub dims: Vec<Dimension>,
}

impl SearchSpace {
    pub fn new(dims: impl IntoIterator<Item = (impl Into<String>, f64, f64)>) -> Result<Self, TpeError> {
        let dims: Vec<Dimension> =
            dims.into_iter().map(|(n, low, high)| Dimension { name: n.into(), low, high }).collect();
        for d in &dims {
            if !(d.low < d.high && d.low.is_finite() && d.high.is_finite()) {
                return Err(TpeError::BadBounds { name: d.name.clone(), low: d.low, high: d.high });
            }
        }
        Ok(Self { dims })
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn check(&self, params: &[f64]) -> Result<(), TpeError> {
        if params.len() != self.dims.len() {
            return Err(TpeError::Arity { expected: self.dims.len(), got: params.len() });
        }
        for (index, (&value, d)) in params.iter().zip(&self.dims).enumerate() {
            if !(d.low..=d.high).contains(&value) {
                return Err(TpeError::OutOfBounds { index, value, low: d.low, high: d.high });
            }
        }
        Ok(())
    }

    fn uniform(&self, rng: &mut seeding::Rng) -> Vec<f64> {
        self.dims.iter().map(|d| rng.random_range(d.low..=d.high)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TpeConfig {
    pub gamma: f64,
    pub n_startup: usize,
    pub n_candidates: usize,
}

impl Default for TpeConfig {
    fn default() -> Self {
        Self { gamma: 0.25, n_startup: 10, n_candidates: 24 }
    }
}

impl TpeConfig {
    pub fn n_good(&self, n_completed: usize) -> usize {
        ((self.gamma * n_completed as f64).ceil() as usize).clamp(1, n_completed.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub params: Vec<f64>,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedTrial {
    pub index: usize,
    pub params: Vec<f64>,
    pub message: String,
}

/// Completed trials plus the generator state that drives `ask`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialHistory {
    pub trials: Vec<Trial>,
    pub failures: Vec<FailedTrial>,
    rng: seeding::Rng,
    next_index: usize,
}

impl TrialHistory {
    pub fn new(seed: u64) -> Self {
        Self { trials: Vec::new(), failures: Vec::new(), rng: seeding::rng(seed), next_index: 0 }
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    /// Highest objective; the earliest trial wins ties.
    pub fn best(&self) -> Option<&Trial> {
        self.trials.iter().fold(None, |best: Option<&Trial>, t| match best {
            Some(b) if b.objective >= t.objective => Some(b),
            _ => Some(t),
        })
    }

    /// Running maximum of the objective in trial order.
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut acc = f64::NEG_INFINITY;
        self.trials
            .iter()
            .map(|t| {
                acc = acc.max(t.objective);
                acc
            })
            .collect()
    }

    /// Trial log as delimited text: `trial,<dim names...>,objective`.
    pub fn to_csv(&self, space: &SearchSpace) -> String {
        let mut out = String::from("trial");
        for d in &space.dims {
            out.push(',');
            out.push_str(&d.name);
        }
        out.push_str(",objective\n");
        for t in &self.trials {
            out.push_str(&trial_record(t));
        }
        out
    }
}

/// One trial-log line with six-decimal fixed formatting.
pub fn trial_record(t: &Trial) -> String {
    let mut line = t.index.to_string();
    for p in &t.params {
        line.push_str(&format!(",{p:.6}"));
    }
    line.push_str(&format!(",{:.6}\n", t.objective));
    line
}

pub fn tell(history: &mut TrialHistory, space: &SearchSpace, params: Vec<f64>, objective: f64) -> Result<usize, TpeError> {
    if !objective.is_finite() {
        return Err(TpeError::NonFinite(objective));
    }
    space.check(&params)?;
    let index = history.next_index;
    history.next_index += 1;
    history.trials.push(Trial { index, params, objective });
    Ok(index)
}

/// Records a failed evaluation; it consumes an index but is not modeled.
pub fn tell_failure(history: &mut TrialHistory, params: Vec<f64>, message: impl Into<String>) -> usize {
    let index = history.next_index;
    history.next_index += 1;
    history.failures.push(FailedTrial { index, params, message: message.into() });
    index
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

#[derive(Debug, Clone)]
struct Kernel {
    mu: f64,
    sigma: f64,
    /// Probability mass of the normal inside [low, high].
    mass: f64,
}

/// One-dimensional Parzen mixture on `[low, high]`.
#[derive(Debug, Clone)]
struct Parzen {
    low: f64,
    high: f64,
    kernels: Vec<Kernel>,
    weight: f64,
}

impl Parzen {
    fn fit(obs: &[f64], low: f64, high: f64) -> Self {
        let range = high - low;
        // wide while observations are few, tightening to 1% of the range
        let floor = range / (obs.len() + 1).min(100) as f64;
        let mut sorted = obs.to_vec();
        sorted.sort_by(f64::total_cmp);
        let kernels = sorted
            .iter()
            .enumerate()
            .map(|(i, &mu)| {
                let left = (i > 0).then(|| mu - sorted[i - 1]);
                let right = sorted.get(i + 1).map(|&r| r - mu);
                let width = match (left, right) {
                    (None, None) => range,
                    (l, r) => l.unwrap_or(0.0).max(r.unwrap_or(0.0)),
                };
                let sigma = width.clamp(floor, range);
                let mass = normal_cdf((high - mu) / sigma) - normal_cdf((low - mu) / sigma);
                Kernel { mu, sigma, mass: mass.max(1e-300) }
            })
            .collect::<Vec<_>>();
        let weight = 1.0 / (kernels.len() + 1) as f64;
        Self { low, high, kernels, weight }
    }

    fn pdf(&self, x: f64) -> f64 {
        let prior = self.weight / (self.high - self.low);
        let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        self.kernels.iter().fold(prior, |acc, k| {
            let z = (x - k.mu) / k.sigma;
            acc + self.weight * norm * (-0.5 * z * z).exp() / (k.sigma * k.mass)
        })
    }

    fn sample(&self, rng: &mut seeding::Rng) -> f64 {
        let pick = rng.random_range(0..=self.kernels.len());
        let Some(k) = self.kernels.get(pick) else {
            return rng.random_range(self.low..=self.high);
        };
        for _ in 0..64 {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            let x = k.mu + k.sigma * z;
            if (self.low..=self.high).contains(&x) {
                return x;
            }
        }
        k.mu.clamp(self.low, self.high)
    }
}

/// Next point to evaluate.
pub fn ask(history: &mut TrialHistory, space: &SearchSpace, config: &TpeConfig) -> Vec<f64> {
    let n = history.trials.len();
    if n < config.n_startup.max(1) {
        return space.uniform(&mut history.rng);
    }
    let mut order: Vec<usize> = (0..n).collect();
    // descending objective, earlier index first on ties
    order.sort_by(|&a, &b| history.trials[b].objective.total_cmp(&history.trials[a].objective).then(a.cmp(&b)));
    let n_good = config.n_good(n);
    let (good, bad) = order.split_at(n_good);

    let models: Vec<(Parzen, Parzen)> = space
        .dims
        .iter()
        .enumerate()
        .map(|(d, dim)| {
            let pick = |set: &[usize]| set.iter().map(|&i| history.trials[i].params[d]).collect::<Vec<_>>();
            (Parzen::fit(&pick(good), dim.low, dim.high), Parzen::fit(&pick(bad), dim.low, dim.high))
        })
        .collect();

    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..config.n_candidates.max(1) {
        let cand: Vec<f64> = models.iter().map(|(l, _)| l.sample(&mut history.rng)).collect();
        let score: f64 = cand.iter().zip(&models).map(|(&x, (l, g))| l.pdf(x).ln() - g.pdf(x).ln()).sum();
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, cand));
        }
    }
    best.expect("at least one candidate").1
}

#[derive(Debug, Error)]
pub enum OptimizeError<E: fmt::Display + fmt::Debug> {
    #[error("trial {index}: {source}")]
    Objective { index: usize, source: E },
    #[error("{failed} of {attempted} trials failed, above the tolerated fraction")]
    TooManyFailures { failed: usize, attempted: usize },
    #[error(transparent)]
    Tpe(#[from] TpeError),
}

/// What to do when the objective returns an error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FailurePolicy {
    Abort,
    /// Record and continue while failures stay at or below this fraction of
    /// the trial budget.
    Tolerate(f64),
}

/// Runs `n_trials` sequential ask/evaluate/tell rounds.
pub fn optimize<E, F>(
    mut objective: F,
    space: &SearchSpace,
    n_trials: usize,
    seed: u64,
    config: &TpeConfig,
    policy: FailurePolicy,
    mut on_trial: impl FnMut(&TrialHistory),
) -> Result<(Trial, TrialHistory), OptimizeError<E>>
where
    E: fmt::Display + fmt::Debug,
    F: FnMut(usize, &[f64]) -> Result<f64, E>,
{
    if n_trials == 0 {
        return Err(TpeError::NoTrials.into());
    }
    let mut history = TrialHistory::new(seed);
    for _ in 0..n_trials {
        let params = ask(&mut history, space, config);
        let index = history.next_index;
        match objective(index, &params) {
            Ok(v) if v.is_finite() => {
                tell(&mut history, space, params, v)?;
            }
            Ok(v) => match policy {
                FailurePolicy::Abort => return Err(TpeError::NonFinite(v).into()),
                FailurePolicy::Tolerate(_) => {
                    tell_failure(&mut history, params, format!("non-finite objective {v}"));
                }
            },
            Err(source) => match policy {
                FailurePolicy::Abort => return Err(OptimizeError::Objective { index, source }),
                FailurePolicy::Tolerate(_) => {
                    tell_failure(&mut history, params, source.to_string());
                }
            },
        }
        if let FailurePolicy::Tolerate(frac) = policy {
            let failed = history.failures.len();
            if failed as f64 > frac * n_trials as f64 {
                return Err(OptimizeError::TooManyFailures { failed, attempted: history.next_index });
            }
        }
        on_trial(&history);
    }
    let best = history.best().cloned().ok_or(OptimizeError::TooManyFailures {
        failed: history.failures.len(),
        attempted: history.next_index,
    })?;
    Ok((best, history))
}

/// Budget-matched uniform random search baseline.
pub fn random_search<F: FnMut(&[f64]) -> f64>(mut objective: F, space: &SearchSpace, n_trials: usize, seed: u64) -> Trial {
    let mut rng = seeding::rng(seed);
    let mut best: Option<Trial> = None;
    for index in 0..n_trials {
        let params = space.uniform(&mut rng);
        let objective = objective(&params);
        if best.as_ref().is_none_or(|b| objective > b.objective) {
            best = Some(Trial { index, params, objective });
        }
    }
    best.expect("n_trials >= 1")
}
