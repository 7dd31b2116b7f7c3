//! Classification metrics used to rank global models: accuracy, macro
//! precision, macro F1, and the Matthews correlation coefficient.
//!
//! All metrics are computed from a C-by-C confusion matrix. Per-class terms
//! with a zero denominator contribute 0 to macro averages rather than being
//! skipped, so degenerate constant predictors are penalized. Micro-averaged
//! precision and F1 are available as an alternative averaging mode.

use crate::error::{Error, Result};

/// A C-by-C confusion count matrix; `counts[truth][pred]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
    total: u64,
}

impl ConfusionMatrix {
    /// Tallies predictions against ground truth over `num_classes` classes.
    pub fn from_pairs(pred: &[usize], truth: &[usize], num_classes: usize) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::LengthMismatch {
                left: pred.len(),
                right: truth.len(),
            });
        }
        if pred.is_empty() {
            return Err(Error::EmptyInput("predictions"));
        }
        if num_classes < 2 {
            return Err(Error::InvalidArgument {
                what: "num_classes",
                value: num_classes as f64,
            });
        }
        let mut counts = vec![vec![0u64; num_classes]; num_classes];
        for (&p, &t) in pred.iter().zip(truth) {
            if p >= num_classes || t >= num_classes {
                return Err(Error::InvalidArgument {
                    what: "class label",
                    value: p.max(t) as f64,
                });
            }
            counts[t][p] += 1;
        }
        Ok(Self {
            counts,
            total: pred.len() as u64,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Count of examples with true class `t` predicted as class `p`.
    pub fn count(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth][pred]
    }

    fn true_positives(&self, class: usize) -> u64 {
        self.counts[class][class]
    }

    /// Column sum: how often `class` was predicted.
    fn predicted(&self, class: usize) -> u64 {
        self.counts.iter().map(|row| row[class]).sum()
    }

    /// Row sum: how often `class` occurs in the ground truth.
    fn actual(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let correct: u64 = (0..self.num_classes()).map(|c| self.true_positives(c)).sum();
        correct as f64 / self.total as f64
    }

    /// Per-class precision TP/(TP+FP); 0 when the class is never predicted.
    pub fn precision_per_class(&self, class: usize) -> f64 {
        let denom = self.predicted(class);
        if denom == 0 {
            0.0
        } else {
            self.true_positives(class) as f64 / denom as f64
        }
    }

    /// Per-class recall TP/(TP+FN); 0 when the class never occurs.
    pub fn recall_per_class(&self, class: usize) -> f64 {
        let denom = self.actual(class);
        if denom == 0 {
            0.0
        } else {
            self.true_positives(class) as f64 / denom as f64
        }
    }

    /// Per-class F1 = 2PR/(P+R); 0 when P+R = 0.
    pub fn f1_per_class(&self, class: usize) -> f64 {
        let p = self.precision_per_class(class);
        let r = self.recall_per_class(class);
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    pub fn precision_macro(&self) -> f64 {
        let c = self.num_classes();
        (0..c).map(|k| self.precision_per_class(k)).sum::<f64>() / c as f64
    }

    pub fn f1_macro(&self) -> f64 {
        let c = self.num_classes();
        (0..c).map(|k| self.f1_per_class(k)).sum::<f64>() / c as f64
    }

    /// Micro-averaged precision: pooled TP / (pooled TP + pooled FP).
    /// For single-label classification this equals accuracy.
    pub fn precision_micro(&self) -> f64 {
        let tp: u64 = (0..self.num_classes()).map(|c| self.true_positives(c)).sum();
        // Every prediction is either a TP or an FP for exactly one class.
        tp as f64 / self.total as f64
    }

    /// Micro-averaged recall: pooled TP / (pooled TP + pooled FN).
    pub fn recall_micro(&self) -> f64 {
        let tp: u64 = (0..self.num_classes()).map(|c| self.true_positives(c)).sum();
        tp as f64 / self.total as f64
    }

    /// Micro-averaged F1, the harmonic mean of micro precision and recall.
    pub fn f1_micro(&self) -> f64 {
        let p = self.precision_micro();
        let r = self.recall_micro();
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    /// Matthews correlation coefficient, generalized to C classes:
    ///
    /// `(c*s − Σ p_k t_k) / sqrt((s² − Σ p_k²)(s² − Σ t_k²))`
    ///
    /// where `c` is the number of correct predictions, `s` the total,
    /// `p_k` the predicted count and `t_k` the true count of class k.
    /// Returns 0 when either denominator factor is 0. For C = 2 this is the
    /// familiar `(TP·TN − FP·FN)/sqrt((TP+FP)(TP+FN)(TN+FP)(TN+FN))`.
    pub fn mcc(&self) -> f64 {
        let s = self.total as f64;
        let correct: u64 = (0..self.num_classes()).map(|c| self.true_positives(c)).sum();
        let c = correct as f64;
        let mut sum_pt = 0.0;
        let mut sum_p2 = 0.0;
        let mut sum_t2 = 0.0;
        for k in 0..self.num_classes() {
            let p = self.predicted(k) as f64;
            let t = self.actual(k) as f64;
            sum_pt += p * t;
            sum_p2 += p * p;
            sum_t2 += t * t;
        }
        let denom_p = s * s - sum_p2;
        let denom_t = s * s - sum_t2;
        if denom_p <= 0.0 || denom_t <= 0.0 {
            return 0.0;
        }
        (c * s - sum_pt) / (denom_p * denom_t).sqrt()
    }
}

/// Fraction of predictions matching the ground truth.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput("predictions"));
    }
    let matches = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(matches as f64 / pred.len() as f64)
}

/// Macro-averaged precision over `num_classes` classes.
pub fn precision_macro(pred: &[usize], truth: &[usize], num_classes: usize) -> Result<f64> {
    Ok(ConfusionMatrix::from_pairs(pred, truth, num_classes)?.precision_macro())
}

/// Macro-averaged F1 over `num_classes` classes.
pub fn f1_macro(pred: &[usize], truth: &[usize], num_classes: usize) -> Result<f64> {
    Ok(ConfusionMatrix::from_pairs(pred, truth, num_classes)?.f1_macro())
}

/// Matthews correlation coefficient over `num_classes` classes.
pub fn mcc(pred: &[usize], truth: &[usize], num_classes: usize) -> Result<f64> {
    Ok(ConfusionMatrix::from_pairs(pred, truth, num_classes)?.mcc())
}
