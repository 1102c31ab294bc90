use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dataset::FAKE;
use crate::error::{Error, Result};

/// Binary confusion counts with "fake" as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn from_predictions(predicted: &[usize], labels: &[usize]) -> Self {
        assert_eq!(predicted.len(), labels.len());
        let pos = FAKE as usize;
        let mut c = Self::default();
        for (&p, &y) in predicted.iter().zip(labels) {
            match (p == pos, y == pos) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ClassMetrics {
    fn new(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        Self {
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
            f1: ratio(2 * tp, 2 * tp + fp + fn_),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    /// Macro-averaged F1.
    pub f1: f64,
    /// F1 of the fake class alone.
    pub f1_fake: f64,
    pub true_class: ClassMetrics,
    pub fake_class: ClassMetrics,
    pub confusion: Confusion,
}

impl MetricsReport {
    pub fn from_confusion(c: Confusion) -> Result<Self> {
        if c.total() == 0 {
            return Err(crate::error::DataError::EmptyIndexSet.into());
        }
        let fake_class = ClassMetrics::new(c.tp, c.fp, c.fn_);
        let true_class = ClassMetrics::new(c.tn, c.fn_, c.fp);
        Ok(Self {
            accuracy: (c.tp + c.tn) as f64 / c.total() as f64,
            f1: (fake_class.f1 + true_class.f1) / 2.0,
            f1_fake: fake_class.f1,
            true_class,
            fake_class,
            confusion: c,
        })
    }

    pub fn from_predictions(predicted: &[usize], labels: &[usize]) -> Result<Self> {
        Self::from_confusion(Confusion::from_predictions(predicted, labels))
    }
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Needs at least two values; the deviation divides by `n - 1`.
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Config(format!(
                "mean/std needs at least 2 values, got {}",
                values.len()
            )));
        }
        let n = values.len() as f64;
        // shifted by the first value so identical inputs give exactly zero spread
        let first = values[0];
        let mean = first + values.iter().map(|v| v - first).sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Ok(Self {
            mean,
            std: var.sqrt(),
        })
    }
}

impl fmt::Display for MeanStd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2} ± {:.2}", 100.0 * self.mean, 100.0 * self.std)
    }
}
