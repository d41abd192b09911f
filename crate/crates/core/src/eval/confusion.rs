use std::fmt::Write as _;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ActivityLabel;

/// Counts indexed `[actual, predicted]` over an ordered label list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<ActivityLabel>,
    pub counts: Array2<u64>,
}

impl ConfusionMatrix {
    pub fn new(labels: Vec<ActivityLabel>) -> Self {
        let n = labels.len();
        ConfusionMatrix {
            labels,
            counts: Array2::zeros((n, n)),
        }
    }

    pub fn from_pairs(labels: Vec<ActivityLabel>, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut m = ConfusionMatrix::new(labels);
        for (a, p) in pairs {
            m.record(a, p)?;
        }
        Ok(m)
    }

    pub fn record(&mut self, actual: usize, predicted: usize) -> Result<()> {
        let n = self.labels.len();
        for i in [actual, predicted] {
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i, len: n });
            }
        }
        self.counts[[actual, predicted]] += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.labels != self.labels {
            return Err(Error::DimensionMismatch("confusion matrices over different labels".into()));
        }
        self.counts += &other.counts;
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.sum()
    }

    pub fn row_total(&self, actual: usize) -> u64 {
        self.counts.row(actual).sum()
    }

    /// Rows with no examples; their proportions are reported as zeros.
    pub fn empty_rows(&self) -> Vec<bool> {
        (0..self.labels.len()).map(|r| self.row_total(r) == 0).collect()
    }

    /// Row-normalized proportions.
    pub fn proportions(&self) -> Array2<f64> {
        let mut p = Array2::zeros(self.counts.dim());
        for r in 0..self.labels.len() {
            let total = self.row_total(r);
            if total > 0 {
                for c in 0..self.labels.len() {
                    p[[r, c]] = self.counts[[r, c]] as f64 / total as f64;
                }
            }
        }
        p
    }

    /// Diagonal of the proportion matrix; `None` for empty rows.
    pub fn per_class_accuracy(&self) -> Vec<Option<f64>> {
        let p = self.proportions();
        (0..self.labels.len()).map(|r| (self.row_total(r) > 0).then(|| p[[r, r]])).collect()
    }

    /// Mean per-class accuracy over non-empty rows.
    pub fn macro_accuracy(&self) -> f64 {
        let v: Vec<f64> = self.per_class_accuracy().into_iter().flatten().collect();
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    }

    pub fn overall_accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        (0..self.labels.len()).map(|i| self.counts[[i, i]]).sum::<u64>() as f64 / total as f64
    }

    /// `actual,predicted,count,proportion`, one row per label pair.
    pub fn to_csv(&self) -> String {
        let p = self.proportions();
        let mut out = String::from("actual,predicted,count,proportion\n");
        for (r, a) in self.labels.iter().enumerate() {
            for (c, b) in self.labels.iter().enumerate() {
                let _ = writeln!(out, "{a},{b},{},{}", self.counts[[r, c]], p[[r, c]]);
            }
        }
        out
    }

    /// Aligned text table of row percentages, actual labels down the side.
    pub fn render(&self) -> String {
        let p = self.proportions();
        let names: Vec<String> = self.labels.iter().map(|l| l.to_string()).collect();
        let side = names.iter().map(|n| n.len()).max().unwrap_or(0).max("actual".len());
        let width = names.iter().map(|n| n.len()).max().unwrap_or(0).max(6);
        let mut out = format!("{:side$}", "actual");
        for n in &names {
            let _ = write!(out, "  {n:>width$}");
        }
        out.push('\n');
        for (r, n) in names.iter().enumerate() {
            let _ = write!(out, "{n:side$}");
            for c in 0..names.len() {
                if self.row_total(r) == 0 {
                    let _ = write!(out, "  {:>width$}", "-");
                } else {
                    let _ = write!(out, "  {:>width$.1}", 100.0 * p[[r, c]]);
                }
            }
            out.push('\n');
        }
        out
    }
}
