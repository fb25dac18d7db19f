use serde::{Deserialize, Serialize};

use super::model::{Model, Tensor};
use crate::imagecore::LabeledSample;
use crate::par::{self, Exec};
use crate::NUM_CLASSES;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub accuracy: f64,
    pub precision_weighted: f64,
    pub recall_weighted: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

impl EvalMetrics {
    /// Support-weighted metrics of a square confusion matrix. Classes that
    /// are never predicted contribute precision 0.
    pub fn from_confusion(confusion: Vec<Vec<usize>>) -> Self {
        let k = confusion.len();
        let total: usize = confusion.iter().flatten().sum();
        if total == 0 {
            return Self { accuracy: 0.0, precision_weighted: 0.0, recall_weighted: 0.0, confusion };
        }
        let t = total as f64;
        let trace: usize = (0..k).map(|i| confusion[i][i]).sum();
        let mut precision = 0.0;
        let mut recall = 0.0;
        for c in 0..k {
            let support: usize = confusion[c].iter().sum();
            if support == 0 {
                continue;
            }
            let predicted: usize = (0..k).map(|r| confusion[r][c]).sum();
            let tp = confusion[c][c] as f64;
            let w = support as f64 / t;
            if predicted > 0 {
                precision += w * tp / predicted as f64;
            }
            recall += w * tp / support as f64;
        }
        Self { accuracy: trace as f64 / t, precision_weighted: precision, recall_weighted: recall, confusion }
    }

    pub fn from_predictions(truth: &[u8], predicted: &[u8]) -> Self {
        let mut m = vec![vec![0usize; NUM_CLASSES]; NUM_CLASSES];
        for (&a, &b) in truth.iter().zip(predicted) {
            m[usize::from(a)][usize::from(b)] += 1;
        }
        Self::from_confusion(m)
    }
}

pub(crate) fn argmax<T: Tensor>(row: &[T]) -> u8 {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best as u8
}

/// Confusion-matrix metrics of argmax predictions.
pub fn evaluate<T: Tensor>(model: &Model<T>, samples: &[LabeledSample], exec: Exec) -> EvalMetrics {
    let predicted = par::map(exec, samples, |s| {
        let x = model.prepare(&s.image).expect("dataset matches model input size");
        argmax(&model.logits_prepared(&x))
    });
    let truth: Vec<u8> = samples.iter().map(|s| s.label).collect();
    EvalMetrics::from_predictions(&truth, &predicted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_predictions() {
        let y: Vec<u8> = (0..20).map(|i| (i % 10) as u8).collect();
        let m = EvalMetrics::from_predictions(&y, &y);
        for v in [m.accuracy, m.precision_weighted, m.recall_weighted] {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_predictor_on_balanced_pair() {
        // truth: five 0s, five 1s; prediction: all 0
        // confusion [[5,0],[5,0]]: precision_0 = 5/10, precision_1 = 0 (never predicted)
        // weighted precision = 0.5*0.5 + 0.5*0 = 0.25; recall = 0.5*1 + 0.5*0 = 0.5
        let truth = [0u8, 0, 0, 0, 0, 1, 1, 1, 1, 1];
        let m = EvalMetrics::from_predictions(&truth, &[0; 10]);
        assert_eq!(m.accuracy, 0.5);
        assert_eq!(m.recall_weighted, 0.5);
        assert_eq!(m.precision_weighted, 0.25);
    }

    proptest! {
        #[test]
        fn weighted_recall_is_accuracy(cells in proptest::collection::vec(0usize..20, 100)) {
            let m: Vec<Vec<usize>> = cells.chunks(10).map(|r| r.to_vec()).collect();
            let e = EvalMetrics::from_confusion(m);
            prop_assert!((e.recall_weighted - e.accuracy).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&e.precision_weighted));
        }
    }
}
