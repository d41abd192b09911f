//! Short-time Fourier transform and spectrogram export.

use std::fmt::Write as _;

use ndarray::Array2;
use num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Window {
    #[default]
    Hann,
    Rectangular,
}

impl Window {
    /// Periodic window of length `n`.
    pub fn coefficients<T: Real>(self, n: usize) -> Vec<T> {
        match self {
            Window::Rectangular => vec![T::one(); n],
            Window::Hann => (0..n)
                .map(|k| {
                    let x = T::TAU() * T::from_usize_lossy(k) / T::from_usize_lossy(n);
                    T::lit(0.5) - T::lit(0.5) * x.cos()
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StftParams {
    pub window_len: usize,
    pub hop_len: usize,
    pub fft_len: usize,
    pub window: Window,
}

impl StftParams {
    pub fn new(window_len: usize, hop_len: usize, fft_len: usize) -> Self {
        StftParams {
            window_len,
            hop_len,
            fft_len,
            window: Window::Hann,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.window_len == 0 || self.window_len > self.fft_len || self.hop_len == 0 {
            return Err(Error::InvalidConfig(format!(
                "need 0 < window_len <= fft_len and hop_len >= 1, got {self:?}"
            )));
        }
        Ok(())
    }

    /// `floor((n - window_len) / hop_len) + 1`, or `None` when `n < window_len`.
    pub fn frame_count(&self, n: usize) -> Option<usize> {
        (n >= self.window_len).then(|| (n - self.window_len) / self.hop_len + 1)
    }
}

/// Time x frequency magnitudes of a real series (one-sided, DC to Nyquist).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Spectrogram<T> {
    /// `[frame, bin]`, `fft_len / 2 + 1` bins.
    pub magnitudes: Array2<T>,
    pub frame_period: T,
    pub bin_width: T,
    pub window_len: usize,
    pub fft_len: usize,
}

/// Windowed, zero-padded FFT frames of a complex series (all `fft_len` bins).
pub fn complex_frames<T: Real>(series: &[Complex<T>], params: &StftParams, remove_mean: bool) -> Result<Array2<Complex<T>>> {
    params.validate()?;
    let frames = params.frame_count(series.len()).ok_or(Error::SeriesTooShort {
        len: series.len(),
        window: params.window_len,
    })?;
    let window: Vec<T> = params.window.coefficients(params.window_len);
    let fft = FftPlanner::new().plan_fft_forward(params.fft_len);
    let mut out = Array2::from_elem((frames, params.fft_len), Complex::new(T::zero(), T::zero()));
    let mut buf = vec![Complex::new(T::zero(), T::zero()); params.fft_len];
    for (f, mut row) in out.outer_iter_mut().enumerate() {
        let seg = &series[f * params.hop_len..f * params.hop_len + params.window_len];
        let mean = if remove_mean {
            seg.iter().copied().fold(Complex::new(T::zero(), T::zero()), |a, b| a + b) / T::from_usize_lossy(seg.len())
        } else {
            Complex::new(T::zero(), T::zero())
        };
        buf.fill(Complex::new(T::zero(), T::zero()));
        for (dst, (&x, &w)) in buf.iter_mut().zip(seg.iter().zip(&window)) {
            *dst = (x - mean) * w;
        }
        fft.process(&mut buf);
        for (dst, v) in row.iter_mut().zip(&buf) {
            *dst = *v;
        }
    }
    Ok(out)
}

/// STFT magnitude of a real series with the given parameters.
pub fn stft_with<T: Real>(series: &[T], sample_rate: T, params: &StftParams) -> Result<Spectrogram<T>> {
    let complex: Vec<Complex<T>> = series.iter().map(|&x| Complex::new(x, T::zero())).collect();
    let frames = complex_frames(&complex, params, false)?;
    let bins = params.fft_len / 2 + 1;
    let magnitudes = Array2::from_shape_fn((frames.nrows(), bins), |(f, k)| frames[[f, k]].norm());
    Ok(Spectrogram {
        magnitudes,
        frame_period: T::from_usize_lossy(params.hop_len) / sample_rate,
        bin_width: sample_rate / T::from_usize_lossy(params.fft_len),
        window_len: params.window_len,
        fft_len: params.fft_len,
    })
}

/// Hann-windowed STFT magnitude.
pub fn stft<T: Real>(series: &[T], sample_rate: T, window_len: usize, hop_len: usize, fft_len: usize) -> Result<Spectrogram<T>> {
    stft_with(series, sample_rate, &StftParams::new(window_len, hop_len, fft_len))
}

impl<T: Real> Spectrogram<T> {
    pub fn frames(&self) -> usize {
        self.magnitudes.nrows()
    }

    pub fn bins(&self) -> usize {
        self.magnitudes.ncols()
    }

    pub fn bin_frequency(&self, bin: usize) -> T {
        T::from_usize_lossy(bin) * self.bin_width
    }

    /// Index of the strongest bin of a frame, ignoring bins below `min_bin`.
    pub fn peak_bin(&self, frame: usize, min_bin: usize) -> usize {
        let row = self.magnitudes.row(frame);
        (min_bin..row.len()).fold(min_bin, |best, k| if row[k] > row[best] { k } else { best })
    }

    /// Frame energy recovered from the one-sided spectrum via Parseval:
    /// equals the sum of squared windowed samples of that frame.
    pub fn parseval_energy(&self, frame: usize) -> T {
        let row = self.magnitudes.row(frame);
        let n = self.fft_len;
        let mut e = row[0] * row[0];
        for k in 1..row.len() {
            let sq = row[k] * row[k];
            let twice = !(n % 2 == 0 && k == n / 2);
            e += if twice { T::lit(2.0) * sq } else { sq };
        }
        e / T::from_usize_lossy(n)
    }

    /// CSV: header of bin frequencies, one row per frame starting with its time.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_s");
        for k in 0..self.bins() {
            let _ = write!(out, ",{}", self.bin_frequency(k));
        }
        out.push('\n');
        for (f, row) in self.magnitudes.outer_iter().enumerate() {
            let _ = write!(out, "{}", T::from_usize_lossy(f) * self.frame_period);
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    /// Binary PGM (P5): time runs left to right, frequency bottom to top,
    /// grey level spans `dynamic_range_db` below the global maximum.
    pub fn to_pgm(&self, dynamic_range_db: f64) -> Vec<u8> {
        let (w, h) = (self.frames(), self.bins());
        let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
        let max = self.magnitudes.iter().fold(0.0f64, |m, v| m.max(v.as_f64()));
        for k in (0..h).rev() {
            for f in 0..w {
                let v = self.magnitudes[[f, k]].as_f64();
                let level = if max > 0.0 && v > 0.0 {
                    let db = 20.0 * (v / max).log10();
                    ((db + dynamic_range_db) / dynamic_range_db).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                out.push((level * 255.0).round() as u8);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, fs: f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| (std::f64::consts::TAU * freq * k as f64 / fs).sin()).collect()
    }

    #[test]
    fn constant_series_has_only_dc() {
        let x = vec![3.0f64; 1024];
        let params = StftParams {
            window: Window::Rectangular,
            ..StftParams::new(256, 64, 256)
        };
        let s = stft_with(&x, 1000.0, &params).unwrap();
        for f in 0..s.frames() {
            let dc = s.magnitudes[[f, 0]];
            assert!(s.magnitudes.row(f).iter().skip(1).all(|&m| m <= 1e-9 * dc));
        }
        // Hann: the DC bin still dominates and nothing leaks past the main lobe
        let s = stft(&x, 1000.0, 256, 64, 256).unwrap();
        assert_eq!(s.peak_bin(0, 0), 0);
        assert!(s.magnitudes.row(0).iter().skip(2).all(|&m| m <= 1e-9 * s.magnitudes[[0, 0]]));
    }

    #[test]
    fn seventeen_hz_lands_in_analytic_bin() {
        let s = stft(&sine(17.0, 1000.0, 2000), 1000.0, 256, 50, 256).unwrap();
        let expect = (17.0f64 / (1000.0 / 256.0)).round() as usize;
        assert_eq!(expect, 4);
        for f in 0..s.frames() {
            assert_eq!(s.peak_bin(f, 1), expect);
        }
    }

    #[test]
    fn chirp_peak_is_monotone() {
        let fs = 1000.0;
        let n = 4000;
        let dur = n as f64 / fs;
        let x: Vec<f64> = (0..n)
            .map(|k| {
                let t = k as f64 / fs;
                (std::f64::consts::TAU * (10.0 * t + 0.5 * (90.0 / dur) * t * t)).sin()
            })
            .collect();
        let s = stft(&x, fs, 256, 64, 256).unwrap();
        let peaks: Vec<usize> = (0..s.frames()).map(|f| s.peak_bin(f, 1)).collect();
        assert!(peaks.windows(2).all(|w| w[1] >= w[0]), "{peaks:?}");
        assert!(peaks[0] <= 5 && *peaks.last().unwrap() >= 22);
    }

    #[test]
    fn frame_count_and_errors() {
        let s = stft(&vec![0.0f64; 2000], 1000.0, 128, 50, 256).unwrap();
        assert_eq!(s.frames(), 38);
        assert_eq!(s.bins(), 129);
        assert!((s.bin_width - 1000.0 / 256.0).abs() < 1e-12);
        assert!(matches!(stft(&[0.0f64; 10], 1000.0, 128, 50, 256), Err(Error::SeriesTooShort { .. })));
        assert!(stft(&[0.0f64; 300], 1000.0, 300, 50, 256).is_err());
    }

    #[test]
    fn parseval_per_frame() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..1500).map(|_| rng.random_range(-1.0..1.0)).collect();
        for (win, fft) in [(128, 256), (100, 128), (127, 127)] {
            let p = StftParams::new(win, 37, fft);
            let s = stft_with(&x, 1000.0, &p).unwrap();
            let w: Vec<f64> = Window::Hann.coefficients(win);
            for f in 0..s.frames() {
                let direct: f64 = (0..win).map(|k| (x[f * 37 + k] * w[k]).powi(2)).sum();
                assert!((s.parseval_energy(f) - direct).abs() <= 1e-6 * direct);
            }
        }
    }

    #[test]
    fn pgm_layout() {
        let s = stft(&sine(100.0, 1000.0, 600), 1000.0, 64, 32, 64).unwrap();
        let pgm = s.to_pgm(60.0);
        let header = format!("P5\n{} {}\n255\n", s.frames(), s.bins());
        assert!(pgm.starts_with(header.as_bytes()));
        assert_eq!(pgm.len(), header.len() + s.frames() * s.bins());
        let csv = s.to_csv();
        assert_eq!(csv.lines().count(), s.frames() + 1);
    }
}
