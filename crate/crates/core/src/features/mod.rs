//! Classifier-ready features: stacked STFT frames, 27-dim wavelet features
//! with torso/leg speed estimates, and inter-antenna phase differences.

pub mod dwt;
pub mod stft;

use ndarray::{Array2, ArrayView2, Axis};
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CsiStream, SPEED_OF_LIGHT};
use crate::num::{unwrap_in_place, Real};
use crate::preprocess::denoise_amplitudes;

pub use dwt::{wavedec, Decomposition};
pub use stft::{stft, stft_with, Spectrogram, StftParams, Window};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureKind {
    StftStack25,
    Dwt27,
    PhaseDiffAug,
}

impl FeatureKind {
    pub fn width(self) -> usize {
        match self {
            FeatureKind::StftStack25 => 25,
            FeatureKind::Dwt27 => 27,
            FeatureKind::PhaseDiffAug => 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct FeatureSequence<T> {
    /// `[frame, feature]`
    pub vectors: Array2<T>,
    pub frame_period: T,
    pub kind: FeatureKind,
}

impl<T: Real> FeatureSequence<T> {
    pub fn new(vectors: Array2<T>, frame_period: T, kind: FeatureKind) -> Result<Self> {
        if vectors.ncols() != kind.width() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} features per frame for {kind:?}", kind.width()),
                got: vectors.ncols().to_string(),
            });
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature vectors"));
        }
        Ok(FeatureSequence {
            vectors,
            frame_period,
            kind,
        })
    }

    pub fn frames(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn width(&self) -> usize {
        self.vectors.ncols()
    }

    /// Number of frames covering `span` seconds.
    pub fn frames_for_span(&self, span: T) -> Result<usize> {
        let n = span / self.frame_period;
        let rounded = n.round();
        let err = || Error::SpanNotMultiple {
            span: span.as_f64(),
            period: self.frame_period.as_f64(),
        };
        if rounded < T::one() || (n - rounded).abs() > T::lit(1e-6) {
            return Err(err());
        }
        rounded.to_usize().ok_or_else(err)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StftFeatureConfig {
    pub window_len: usize,
    pub fft_len: usize,
    pub hop_ms: f64,
    pub bins: usize,
}

impl Default for StftFeatureConfig {
    fn default() -> Self {
        StftFeatureConfig {
            window_len: 128,
            fft_len: 256,
            hop_ms: 50.0,
            bins: 25,
        }
    }
}

impl StftFeatureConfig {
    pub fn hop_len(&self, sample_rate: f64) -> usize {
        ((self.hop_ms * sample_rate / 1000.0).round() as usize).max(1)
    }
}

/// Per-PC spectrogram, truncated to the first `cfg.bins` bins and averaged
/// over PCs.
fn averaged_low_bins<T: Real>(matrix: ArrayView2<T>, sample_rate: T, cfg: &StftFeatureConfig) -> Result<(Array2<T>, T)> {
    if matrix.ncols() == 0 {
        return Err(Error::EmptyInput("feature matrix has no columns"));
    }
    let params = StftParams::new(cfg.window_len, cfg.hop_len(sample_rate.as_f64()), cfg.fft_len);
    if cfg.bins > cfg.fft_len / 2 + 1 {
        return Err(Error::InvalidConfig(format!("{} bins exceed the one-sided spectrum", cfg.bins)));
    }
    let mut acc: Option<Array2<T>> = None;
    let mut period = T::zero();
    for col in matrix.columns() {
        let series: Vec<T> = col.to_vec();
        let spec = stft_with(&series, sample_rate, &params)?;
        period = spec.frame_period;
        let low = spec.magnitudes.slice(ndarray::s![.., ..cfg.bins]).to_owned();
        acc = Some(match acc {
            Some(a) => a + low,
            None => low,
        });
    }
    let scale = T::from_usize_lossy(matrix.ncols());
    Ok((acc.expect("at least one column") / scale, period))
}

/// 25-bin STFT magnitude frames averaged over the kept principal components.
pub fn stft_feature_frames<T: Real>(matrix: ArrayView2<T>, sample_rate: T, cfg: &StftFeatureConfig) -> Result<FeatureSequence<T>> {
    if cfg.bins != FeatureKind::StftStack25.width() {
        return Err(Error::InvalidConfig(format!("stacked STFT frames use 25 bins, got {}", cfg.bins)));
    }
    let (vectors, period) = averaged_low_bins(matrix, sample_rate, cfg)?;
    FeatureSequence::new(vectors, period, FeatureKind::StftStack25)
}

/// Flattened frames `start .. start + span / frame_period`.
pub fn stack_window<T: Real>(seq: &FeatureSequence<T>, span: T, start: usize) -> Result<Vec<T>> {
    let n = seq.frames_for_span(span)?;
    if start + n > seq.frames() {
        return Err(Error::SpanTooLong {
            frames: n,
            available: seq.frames().saturating_sub(start),
        });
    }
    Ok(seq
        .vectors
        .slice(ndarray::s![start..start + n, ..])
        .iter()
        .copied()
        .collect())
}

/// All full stacked windows starting every `stride` frames.
pub fn stacked_windows<T: Real>(seq: &FeatureSequence<T>, span: T, stride: usize) -> Result<Vec<Vec<T>>> {
    let n = seq.frames_for_span(span)?;
    if n > seq.frames() {
        return Err(Error::SpanTooLong {
            frames: n,
            available: seq.frames(),
        });
    }
    (0..=seq.frames() - n)
        .step_by(stride.max(1))
        .map(|s| stack_window(seq, span, s))
        .collect()
}

/// Inverse of [`stack_window`]: `[frames, width]` from a flat vector.
pub fn unstack<T: Real>(flat: &[T], width: usize) -> Result<Array2<T>> {
    if width == 0 || flat.len() % width != 0 {
        return Err(Error::ShapeMismatch {
            expected: format!("a multiple of {width} values"),
            got: flat.len().to_string(),
        });
    }
    Ok(Array2::from_shape_vec((flat.len() / width, width), flat.to_vec()).expect("length checked"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DwtConfig {
    pub interval_ms: f64,
    pub levels: usize,
    pub torso_fraction: f64,
    pub leg_fraction: f64,
    /// Spectrogram used for the speed estimates.
    pub speed_window: usize,
    pub speed_fft: usize,
    pub speed_hop: usize,
}

impl Default for DwtConfig {
    fn default() -> Self {
        DwtConfig {
            interval_ms: 200.0,
            levels: 12,
            torso_fraction: 0.5,
            leg_fraction: 0.95,
            speed_window: 128,
            speed_fft: 256,
            speed_hop: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedEstimate<T> {
    pub torso: T,
    pub leg: T,
    /// Set when every frame was silent; both speeds are then zero.
    pub no_energy: bool,
}

/// Frequency (Hz) where the cumulative energy of bins `1..` first reaches
/// `fraction` of the total, or `None` for a silent frame.
fn crossing_frequency<T: Real>(row: ndarray::ArrayView1<T>, bin_width: T, fraction: T) -> Option<T> {
    let energies: Vec<T> = row.iter().skip(1).map(|&m| m * m).collect();
    let total: T = energies.iter().copied().sum();
    if !(total > T::lit(1e-300)) {
        return None;
    }
    let target = fraction * total;
    let mut cum = T::zero();
    for (i, e) in energies.iter().enumerate() {
        cum += *e;
        if cum >= target {
            return Some(T::from_usize_lossy(i + 1) * bin_width);
        }
    }
    Some(T::from_usize_lossy(energies.len()) * bin_width)
}

fn median<T: Real>(mut v: Vec<T>) -> T {
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / T::lit(2.0)
    }
}

/// Torso and leg speeds from the 50% and 95% cumulative-energy crossings.
pub fn torso_leg_speeds<T: Real>(spec: &Spectrogram<T>, center_frequency: T) -> SpeedEstimate<T> {
    torso_leg_speeds_with(spec, center_frequency, T::lit(0.5), T::lit(0.95), 0..spec.frames())
}

fn torso_leg_speeds_with<T: Real>(
    spec: &Spectrogram<T>,
    center_frequency: T,
    torso_fraction: T,
    leg_fraction: T,
    frames: std::ops::Range<usize>,
) -> SpeedEstimate<T> {
    let to_speed = |f: T| f * T::lit(SPEED_OF_LIGHT) / (T::lit(2.0) * center_frequency);
    let mut torso = Vec::new();
    let mut leg = Vec::new();
    for f in frames {
        let row = spec.magnitudes.row(f);
        if let (Some(a), Some(b)) = (
            crossing_frequency(row, spec.bin_width, torso_fraction),
            crossing_frequency(row, spec.bin_width, leg_fraction),
        ) {
            torso.push(to_speed(a));
            leg.push(to_speed(b));
        }
    }
    if torso.is_empty() {
        return SpeedEstimate {
            torso: T::zero(),
            leg: T::zero(),
            no_energy: true,
        };
    }
    SpeedEstimate {
        torso: median(torso),
        leg: median(leg),
        no_energy: false,
    }
}

/// Per-level detail energies of one block, averaged over columns.
fn block_level_energies<T: Real>(block: ArrayView2<T>, levels: usize) -> Result<Vec<T>> {
    let padded_len = 1usize << levels;
    let n = block.nrows();
    let len = padded_len.max(n.next_power_of_two());
    let scale = T::from_usize_lossy(n) / T::from_usize_lossy(len);
    let mut acc = vec![T::zero(); levels];
    for col in block.columns() {
        let series: Vec<T> = col.to_vec();
        let padded = dwt::reflect_pad(&series, len);
        let dec = wavedec(&padded, levels)?;
        for (a, d) in acc.iter_mut().zip(&dec.details) {
            *a += dwt::energy(d) * scale;
        }
    }
    let cols = T::from_usize_lossy(block.ncols());
    Ok(acc.into_iter().map(|e| e / cols).collect())
}

/// 27-dim wavelet features per interval: 12 level energies, their change
/// from the previous interval, torso and leg speeds, and total energy.
pub fn dwt_features<T: Real>(matrix: ArrayView2<T>, sample_rate: T, center_frequency: T, cfg: &DwtConfig) -> Result<FeatureSequence<T>> {
    if cfg.levels != 12 {
        return Err(Error::InvalidConfig(format!("wavelet features use 12 levels, got {}", cfg.levels)));
    }
    if matrix.ncols() == 0 {
        return Err(Error::EmptyInput("feature matrix has no columns"));
    }
    let block = (cfg.interval_ms * sample_rate.as_f64() / 1000.0).round() as usize;
    let n = matrix.nrows();
    if block == 0 || n < block || n < cfg.speed_window {
        return Err(Error::SeriesTooShort {
            len: n,
            window: block.max(cfg.speed_window),
        });
    }
    let blocks = n / block;

    // speed spectrogram, magnitudes averaged over columns
    let params = StftParams::new(cfg.speed_window, cfg.speed_hop, cfg.speed_fft);
    let mut spec: Option<Spectrogram<T>> = None;
    for col in matrix.columns() {
        let s = stft_with(&col.to_vec(), sample_rate, &params)?;
        spec = Some(match spec {
            Some(mut acc) => {
                acc.magnitudes += &s.magnitudes;
                acc
            }
            None => s,
        });
    }
    let spec = spec.expect("at least one column");
    let half = cfg.speed_window / 2;
    let centre = |f: usize| f * cfg.speed_hop + half;

    let mut out = Array2::zeros((blocks, 27));
    let mut prev: Option<Vec<T>> = None;
    for b in 0..blocks {
        let (lo, hi) = (b * block, (b + 1) * block);
        let energies = block_level_energies(matrix.slice(ndarray::s![lo..hi, ..]), cfg.levels)?;
        let mut row = out.row_mut(b);
        for (l, &e) in energies.iter().enumerate() {
            row[l] = e;
            row[12 + l] = match &prev {
                Some(p) => e - p[l],
                None => T::zero(),
            };
        }
        let inside: Vec<usize> = (0..spec.frames()).filter(|&f| (lo..hi).contains(&centre(f))).collect();
        let frames = match (inside.first(), inside.last()) {
            (Some(&a), Some(&z)) => a..z + 1,
            _ => {
                let mid = (lo + hi) / 2;
                let nearest = (0..spec.frames()).min_by_key(|&f| centre(f).abs_diff(mid)).expect("non-empty spectrogram");
                nearest..nearest + 1
            }
        };
        let speeds = torso_leg_speeds_with(&spec, center_frequency, T::lit(cfg.torso_fraction), T::lit(cfg.leg_fraction), frames);
        row[24] = speeds.torso;
        row[25] = speeds.leg;
        row[26] = energies.iter().copied().sum();
        prev = Some(energies);
    }
    FeatureSequence::new(out, T::lit(cfg.interval_ms / 1000.0), FeatureKind::Dwt27)
}

/// Wrapped phase difference between adjacent receive antennas, one column
/// per (rx pair, tx, subcarrier).
pub fn phase_difference<T: Real>(stream: &CsiStream<T>) -> Result<Array2<T>> {
    let dims = stream.dims().ok_or(Error::EmptyInput("stream has no frames"))?;
    if dims.rx < 2 {
        return Err(Error::SingleAntenna);
    }
    let cols = (dims.rx - 1) * dims.tx * dims.subcarriers;
    let mut out = Array2::zeros((stream.len(), cols));
    for (t, frame) in stream.frames().iter().enumerate() {
        let g = frame.gains();
        let mut c = 0;
        for r in 0..dims.rx - 1 {
            for x in 0..dims.tx {
                for s in 0..dims.subcarriers {
                    let d: Complex<T> = g[[r + 1, x, s]] * g[[r, x, s]].conj();
                    let mut a = d.arg();
                    if a <= -T::PI() {
                        a = T::PI();
                    }
                    out[[t, c]] = a;
                    c += 1;
                }
            }
        }
    }
    Ok(out)
}

/// Amplitude STFT frames concatenated with the same frames computed on the
/// PCA-denoised, time-unwrapped phase differences.
pub fn phase_diff_feature_frames<T: Real>(stream: &CsiStream<T>, cfg: &StftFeatureConfig) -> Result<FeatureSequence<T>> {
    let amp = denoise_amplitudes(stream.amplitude_matrix()?.view())?;
    let mut pd = phase_difference(stream)?;
    for mut col in pd.columns_mut() {
        let mut v = col.to_vec();
        unwrap_in_place(&mut v);
        col.assign(&ndarray::Array1::from(v));
    }
    let pd = denoise_amplitudes(pd.view())?;
    let fs = stream.sample_rate;
    let (a, period) = averaged_low_bins(amp.view(), fs, cfg)?;
    let (p, _) = averaged_low_bins(pd.view(), fs, cfg)?;
    let joined = ndarray::concatenate(Axis(1), &[a.view(), p.view()]).expect("same frame count");
    FeatureSequence::new(joined, period, FeatureKind::PhaseDiffAug)
}

#[cfg(test)]
mod tests;
