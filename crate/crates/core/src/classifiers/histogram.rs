//! Amplitude-histogram fingerprints matched by earth-mover distance.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::{argmin, check_classes};
use crate::error::{Error, Result};
use crate::num::Real;

pub const DEFAULT_BINS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct HistogramModel<T> {
    /// Shared bin edges, `bins + 1` values.
    pub edges: Vec<T>,
    /// `fingerprints[class][group][bin]`, each histogram sums to 1.
    pub fingerprints: Vec<Vec<Vec<T>>>,
}

impl<T: Real> HistogramModel<T> {
    pub fn n_classes(&self) -> usize {
        self.fingerprints.len()
    }

    pub fn groups(&self) -> usize {
        self.fingerprints.first().map_or(0, |c| c.len())
    }

    pub fn bins(&self) -> usize {
        self.edges.len() - 1
    }

    fn bin_of(&self, x: T) -> usize {
        let lo = self.edges[0];
        let width = self.edges[1] - self.edges[0];
        let k = ((x - lo) / width).floor();
        if !(k > T::zero()) {
            0
        } else {
            k.to_usize().unwrap_or(usize::MAX).min(self.bins() - 1)
        }
    }

    /// Normalized histogram of each column (values outside the training
    /// range fall into the end bins).
    pub fn histograms(&self, sample: ArrayView2<T>) -> Result<Vec<Vec<T>>> {
        if sample.ncols() != self.groups() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} columns", self.groups()),
                got: sample.ncols().to_string(),
            });
        }
        if sample.nrows() == 0 {
            return Err(Error::EmptyInput("sample has no rows"));
        }
        let mut out = vec![vec![T::zero(); self.bins()]; self.groups()];
        accumulate(self, sample, &mut out);
        for h in &mut out {
            normalize(h);
        }
        Ok(out)
    }

    /// Summed earth-mover distance from `sample` to each class fingerprint.
    pub fn distances(&self, sample: ArrayView2<T>) -> Result<Vec<T>> {
        let hists = self.histograms(sample)?;
        let width = self.edges[1] - self.edges[0];
        Ok(self
            .fingerprints
            .iter()
            .map(|class| class.iter().zip(&hists).map(|(f, h)| emd(f, h, width)).sum())
            .collect())
    }

    pub fn predict(&self, sample: ArrayView2<T>) -> Result<usize> {
        Ok(argmin(&self.distances(sample)?))
    }
}

fn accumulate<T: Real>(model: &HistogramModel<T>, sample: ArrayView2<T>, out: &mut [Vec<T>]) {
    for row in sample.outer_iter() {
        for (g, &x) in row.iter().enumerate() {
            out[g][model.bin_of(x)] += T::one();
        }
    }
}

fn normalize<T: Real>(h: &mut [T]) {
    let total: T = h.iter().copied().sum();
    if total > T::zero() {
        h.iter_mut().for_each(|v| *v /= total);
    }
}

/// One-dimensional earth-mover distance between histograms on equal-width bins.
pub fn emd<T: Real>(a: &[T], b: &[T], bin_width: T) -> T {
    let mut cum = T::zero();
    let mut total = T::zero();
    for (x, y) in a.iter().zip(b) {
        cum += *x - *y;
        total += cum.abs();
    }
    total * bin_width
}

/// Pools every training value into shared edges and builds one normalized
/// histogram per (class, column).
pub fn hist_fit<T: Real>(samples: &[ArrayView2<T>], labels: &[usize], n_classes: usize, bins: usize) -> Result<HistogramModel<T>> {
    if samples.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!("{} samples, {} labels", samples.len(), labels.len())));
    }
    check_classes(labels, n_classes)?;
    if bins == 0 {
        return Err(Error::InvalidConfig("histograms need at least one bin".into()));
    }
    let groups = samples[0].ncols();
    if let Some(bad) = samples.iter().find(|s| s.ncols() != groups) {
        return Err(Error::ShapeMismatch {
            expected: format!("{groups} columns"),
            got: bad.ncols().to_string(),
        });
    }
    let (mut lo, mut hi) = (T::infinity(), T::neg_infinity());
    for s in samples {
        for &x in s.iter() {
            if !x.is_finite() {
                return Err(Error::NonFinite("histogram training data"));
            }
            lo = lo.min(x);
            hi = hi.max(x);
        }
    }
    if !(hi > lo) {
        // all values equal: one unit-wide range around them
        lo -= T::lit(0.5);
        hi = lo + T::one();
    }
    let width = (hi - lo) / T::from_usize_lossy(bins);
    let edges: Vec<T> = (0..=bins).map(|k| lo + width * T::from_usize_lossy(k)).collect();
    let mut model = HistogramModel {
        edges,
        fingerprints: vec![vec![vec![T::zero(); bins]; groups]; n_classes],
    };
    let mut counts = vec![vec![vec![T::zero(); bins]; groups]; n_classes];
    for (s, &l) in samples.iter().zip(labels) {
        accumulate(&model, *s, &mut counts[l]);
    }
    for class in &mut counts {
        for h in class.iter_mut() {
            normalize(h);
        }
    }
    model.fingerprints = counts;
    Ok(model)
}
