//! Between raw CSI and features: phase sanitization, Butterworth low-pass,
//! PCA denoising and column z-normalization.

use std::ops::Range;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{complete_basis, symmetric_eigen};
use crate::model::CsiStream;
use crate::num::{unwrap_in_place, Real};

/// Removes the linear-in-subcarrier phase trend left by CFO and SFO.
///
/// The input is unwrapped along the subcarrier axis first. With slope
/// `a = (phi_last - phi_first) / (k_last - k_first)` and offset
/// `b = mean(phi - a * k)`, the result is `phi_k - a * k - b`: zero mean, and
/// equal first and last values.
pub fn sanitize_phase_with_indices<T: Real>(indices: &[T], phases: &[T]) -> Result<Vec<T>> {
    let n = phases.len();
    if n < 2 {
        return Err(Error::TooFewSubcarriers(n));
    }
    if indices.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} subcarrier indices for {} phases",
            indices.len(),
            n
        )));
    }
    let span = indices[n - 1] - indices[0];
    if span == T::zero() {
        return Err(Error::DegenerateInput("first and last subcarrier index coincide"));
    }
    let mut phi = phases.to_vec();
    unwrap_in_place(&mut phi);
    let slope = (phi[n - 1] - phi[0]) / span;
    let count = T::from_usize_lossy(n);
    let offset = phi.iter().zip(indices).map(|(&p, &k)| p - slope * k).sum::<T>() / count;
    Ok(phi.iter().zip(indices).map(|(&p, &k)| p - slope * k - offset).collect())
}

/// [`sanitize_phase_with_indices`] with subcarrier indices `0..S`.
pub fn sanitize_phase<T: Real>(phases: &[T]) -> Result<Vec<T>> {
    let idx: Vec<T> = (0..phases.len()).map(T::from_usize_lossy).collect();
    sanitize_phase_with_indices(&idx, phases)
}

/// Sanitized phase per frame and per (rx, tx) pair, in flattened column order.
pub fn sanitize_stream<T: Real>(stream: &CsiStream<T>) -> Result<Array2<T>> {
    let dims = stream.dims().ok_or(Error::EmptyInput("stream"))?;
    let mut phase = stream.phase_matrix()?;
    let s = dims.subcarriers;
    for mut row in phase.outer_iter_mut() {
        for block in 0..dims.rx * dims.tx {
            let mut slice = row.slice_mut(s![block * s..(block + 1) * s]);
            let clean = sanitize_phase(&slice.to_vec())?;
            slice.assign(&Array1::from(clean));
        }
    }
    Ok(phase)
}

/// Default low-pass cutoff at 1 kHz sampling.
pub const DEFAULT_CUTOFF_HZ: f64 = 150.0;

/// One second-order section in transposed direct form II.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biquad<T> {
    pub b: [T; 3],
    /// `a[0]` is normalized to 1 and omitted.
    pub a: [T; 2],
}

impl<T: Real> Biquad<T> {
    fn steady_state(&self, x0: T) -> [T; 2] {
        let z2 = (self.b[2] - self.a[1]) * x0;
        let z1 = (T::one() - self.b[0]) * x0;
        [z1, z2]
    }

    fn run(&self, x: &mut [T], mut z: [T; 2]) {
        for v in x.iter_mut() {
            let input = *v;
            let y = self.b[0] * input + z[0];
            z[0] = self.b[1] * input - self.a[0] * y + z[1];
            z[1] = self.b[2] * input - self.a[1] * y;
            *v = y;
        }
    }
}

/// 4th-order Butterworth low-pass as two bilinear-transform biquads with
/// pre-warped cutoff. Section quality factors are `1 / (2 cos(pi/8))` and
/// `1 / (2 cos(3 pi/8))`; each section has unity DC gain.
pub fn butterworth_lowpass<T: Real>(cutoff_hz: T, sample_rate: T) -> Result<[Biquad<T>; 2]> {
    let nyquist = sample_rate / T::lit(2.0);
    if !(cutoff_hz > T::zero() && cutoff_hz < nyquist) {
        return Err(Error::InvalidCutoff {
            cutoff: cutoff_hz.as_f64(),
            nyquist: nyquist.as_f64(),
        });
    }
    let k = (T::PI() * cutoff_hz / sample_rate).tan();
    let section = |q: T| {
        let norm = T::one() / (T::one() + k / q + k * k);
        let b0 = k * k * norm;
        Biquad {
            b: [b0, T::lit(2.0) * b0, b0],
            a: [T::lit(2.0) * (k * k - T::one()) * norm, (T::one() - k / q + k * k) * norm],
        }
    };
    let q1 = T::one() / (T::lit(2.0) * (T::PI() / T::lit(8.0)).cos());
    let q2 = T::one() / (T::lit(2.0) * (T::lit(3.0) * T::PI() / T::lit(8.0)).cos());
    Ok([section(q1), section(q2)])
}

fn cascade<T: Real>(sections: &[Biquad<T>], x: &mut [T]) {
    for sec in sections {
        let z = sec.steady_state(x[0]);
        sec.run(x, z);
    }
}

/// Zero-phase low-pass: odd extension at both ends, forward pass, backward pass.
pub fn lowpass<T: Real>(series: &[T], cutoff_hz: T, sample_rate: T) -> Result<Vec<T>> {
    let sections = butterworth_lowpass(cutoff_hz, sample_rate)?;
    let n = series.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let pad = (3 * 4).min(n - 1);
    let two = T::lit(2.0);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| two * series[0] - series[i]));
    ext.extend_from_slice(series);
    ext.extend((1..=pad).map(|i| two * series[n - 1] - series[n - 1 - i]));
    cascade(&sections, &mut ext);
    ext.reverse();
    cascade(&sections, &mut ext);
    ext.reverse();
    Ok(ext[pad..pad + n].to_vec())
}

/// [`lowpass`] applied to every column.
pub fn lowpass_columns<T: Real>(matrix: &Array2<T>, cutoff_hz: T, sample_rate: T) -> Result<Array2<T>> {
    let mut out = matrix.clone();
    for mut col in out.columns_mut() {
        let filtered = lowpass(&col.to_vec(), cutoff_hz, sample_rate)?;
        col.assign(&Array1::from(filtered));
    }
    Ok(out)
}

/// Principal axes of a `time x D` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct PcaModel<T> {
    pub mean: Array1<T>,
    /// Orthonormal basis vectors as columns, by descending explained variance.
    pub components: Array2<T>,
    pub explained_variance: Array1<T>,
}

/// Components discarded/kept by default: drop the first, keep the next five.
pub const DEFAULT_KEEP: Range<usize> = 1..6;

/// Fits PCA on the column-centered matrix (variance with `n - 1`
/// normalization). Uses the `time x time` Gram matrix when there are fewer
/// rows than columns; components beyond the rank get zero variance.
pub fn fit_pca<T: Real>(matrix: ArrayView2<T>) -> Result<PcaModel<T>> {
    let (n, d) = matrix.dim();
    if n < 2 || d == 0 {
        return Err(Error::DegenerateInput("PCA needs at least 2 rows and 1 column"));
    }
    let mean = matrix.mean_axis(Axis(0)).expect("non-empty");
    let centered = &matrix - &mean;
    let denom = T::from_usize_lossy(n - 1);
    let total: T = centered.iter().map(|x| *x * *x).sum::<T>() / denom;
    if !total.is_finite() {
        return Err(Error::NonFinite("PCA input"));
    }
    if total <= T::zero() {
        return Err(Error::DegenerateInput("all columns are constant"));
    }
    let (components, variance) = if n >= d {
        let cov = centered.t().dot(&centered) / denom;
        let (w, v) = symmetric_eigen(&cov);
        (v, w.mapv(|x| x.max(T::zero())))
    } else {
        let gram = centered.dot(&centered.t()) / denom;
        let (w, u) = symmetric_eigen(&gram);
        let floor = T::lit(1e-12) * w[0].max(T::zero());
        let mut cols = Vec::new();
        let mut vars = Vec::new();
        for j in 0..n {
            if w[j] <= floor || cols.len() == d {
                break;
            }
            let v = centered.t().dot(&u.column(j)) / (denom * w[j]).sqrt();
            cols.push(v);
            vars.push(w[j]);
        }
        let rank = cols.len();
        let basis = complete_basis(&cols, d);
        let mut comp = Array2::zeros((d, d));
        for (j, b) in basis.iter().enumerate() {
            comp.column_mut(j).assign(b);
        }
        vars.resize(d, T::zero());
        debug_assert!(rank <= d);
        (comp, Array1::from(vars))
    };
    Ok(PcaModel {
        mean,
        components,
        explained_variance: variance,
    })
}

impl<T: Real> PcaModel<T> {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Scores of the centered data on all components.
    pub fn transform(&self, matrix: ArrayView2<T>) -> Result<Array2<T>> {
        if matrix.ncols() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "PCA fitted on {} columns, got {}",
                self.dim(),
                matrix.ncols()
            )));
        }
        Ok((&matrix - &self.mean).dot(&self.components))
    }

    /// Maps full score matrices back to the input space.
    pub fn inverse_transform(&self, scores: ArrayView2<T>) -> Array2<T> {
        scores.dot(&self.components.t()) + &self.mean
    }

    pub fn total_variance(&self) -> T {
        self.explained_variance.sum()
    }
}

/// Projects centered data onto the chosen components; column `j` of the
/// result is the score on component `keep[j]`.
pub fn pca_denoise<T: Real>(matrix: ArrayView2<T>, model: &PcaModel<T>, keep: &[usize]) -> Result<Array2<T>> {
    let d = model.dim();
    if matrix.ncols() != d {
        return Err(Error::DimensionMismatch(format!("PCA fitted on {d} columns, got {}", matrix.ncols())));
    }
    if let Some(&bad) = keep.iter().find(|&&k| k >= d) {
        return Err(Error::IndexOutOfRange { index: bad, len: d });
    }
    let basis = model.components.select(Axis(1), keep);
    Ok((&matrix - &model.mean).dot(&basis))
}

/// Per-stream PCA denoising with the default keep range, clipped to the
/// available dimension.
pub fn denoise_amplitudes<T: Real>(amplitudes: ArrayView2<T>) -> Result<Array2<T>> {
    let model = fit_pca(amplitudes)?;
    let keep: Vec<usize> = DEFAULT_KEEP.filter(|&k| k < model.dim()).collect();
    pca_denoise(amplitudes, &model, &keep)
}

pub const ZNORM_EPS: f64 = 1e-8;

/// Per-column zero mean and unit (population) standard deviation. Constant
/// columns become zero.
pub fn znormalize<T: Real>(matrix: ArrayView2<T>) -> Result<Array2<T>> {
    let n = matrix.nrows();
    if n < 2 {
        return Err(Error::TooFewRows(n));
    }
    let mut out = matrix.to_owned();
    let count = T::from_usize_lossy(n);
    for mut col in out.columns_mut() {
        let mean = col.sum() / count;
        let var = col.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / count;
        let std = var.sqrt();
        if std < T::lit(ZNORM_EPS) {
            col.fill(T::zero());
        } else {
            col.mapv_inplace(|x| (x - mean) / std);
        }
    }
    Ok(out)
}
