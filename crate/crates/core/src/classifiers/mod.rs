//! Classifier families over class indices `0..n_classes`: histogram
//! fingerprints with earth-mover distance, a CART random forest, per-class
//! Gaussian HMMs, and a single-layer LSTM.
//!
//! Ties are broken toward the lowest class index everywhere.

pub mod forest;
pub mod histogram;
pub mod hmm;
pub mod lstm;

pub use forest::{forest_fit, ForestConfig, ForestModel};
pub use histogram::{hist_fit, HistogramModel};
pub use hmm::{hmm_fit, GaussianHmm, HmmConfig, HmmInit, HmmModel};
pub use lstm::{lstm_fit, lstm_train, LstmConfig, LstmModel, TrainReport};

use crate::error::{Error, Result};
use crate::num::Real;

/// Index of the largest value; the first one wins ties.
pub fn argmax<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Index of the smallest value; the first one wins ties.
pub fn argmin<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// Majority vote over class indices; ties go to the lowest index.
pub fn majority_vote(votes: &[usize], n_classes: usize) -> usize {
    let mut counts = vec![0usize; n_classes];
    for &v in votes {
        counts[v] += 1;
    }
    argmax(&counts)
}

/// Checks labels are in range and every class has at least one example.
pub(crate) fn check_classes(labels: &[usize], n_classes: usize) -> Result<()> {
    if labels.is_empty() {
        return Err(Error::EmptyInput("no training examples"));
    }
    let mut seen = vec![false; n_classes];
    for &l in labels {
        if l >= n_classes {
            return Err(Error::IndexOutOfRange { index: l, len: n_classes });
        }
        seen[l] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::EmptyClass(missing.to_string()));
    }
    Ok(())
}

pub(crate) fn softmax_in_place<T: Real>(v: &mut [T]) {
    let max = v.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_go_low() {
        assert_eq!(argmax(&[1, 3, 3]), 1);
        assert_eq!(argmin(&[2.0, 1.0, 1.0]), 1);
        assert_eq!(majority_vote(&[2, 0, 2, 0, 1], 3), 0);
    }

    #[test]
    fn class_checks() {
        assert!(check_classes(&[0, 1, 1], 2).is_ok());
        assert!(matches!(check_classes(&[0, 0], 2), Err(Error::EmptyClass(_))));
        assert!(check_classes(&[0, 3], 2).is_err());
    }
}
