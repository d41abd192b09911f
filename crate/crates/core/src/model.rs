//! Core CSI domain types.
//!
//! Flattened matrices use rx-major column order: column
//! `r * M_T * S + x * S + i` holds receive antenna `r`, transmit antenna
//! `x`, subcarrier `i`. Antenna blocks stay contiguous so adjacent-antenna
//! phase differences are plain block subtractions.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use ndarray::{Array2, Array3};
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;

/// Complex channel gain of one (rx, tx, subcarrier) entry.
pub type ComplexGain<T> = Complex<T>;

/// Default spacing between the reported (grouped) subcarriers.
pub const DEFAULT_SUBCARRIER_SPACING_HZ: f64 = 1.25e6;
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ActivityLabel {
    LayDown,
    Fall,
    Walk,
    Run,
    SitDown,
    StandUp,
    NoActivity,
}

impl ActivityLabel {
    pub const ALL: [ActivityLabel; 7] = [
        ActivityLabel::LayDown,
        ActivityLabel::Fall,
        ActivityLabel::Walk,
        ActivityLabel::Run,
        ActivityLabel::SitDown,
        ActivityLabel::StandUp,
        ActivityLabel::NoActivity,
    ];

    /// The six measured activities, in confusion-matrix order.
    pub const ACTIVITIES: [ActivityLabel; 6] = [
        ActivityLabel::LayDown,
        ActivityLabel::Fall,
        ActivityLabel::Walk,
        ActivityLabel::Run,
        ActivityLabel::SitDown,
        ActivityLabel::StandUp,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ActivityLabel::LayDown => "LayDown",
            ActivityLabel::Fall => "Fall",
            ActivityLabel::Walk => "Walk",
            ActivityLabel::Run => "Run",
            ActivityLabel::SitDown => "SitDown",
            ActivityLabel::StandUp => "StandUp",
            ActivityLabel::NoActivity => "NoActivity",
        }
    }
}

impl fmt::Display for ActivityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivityLabel {
    type Err = Error;

    /// Accepts `LayDown`, `lay_down`, `lay-down`, `Lay down` and similar spellings.
    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        Self::ALL
            .iter()
            .copied()
            .find(|l| l.name().to_ascii_lowercase() == key)
            .ok_or_else(|| Error::Parse {
                line: 0,
                message: format!("unknown activity label {s:?}"),
            })
    }
}

/// Antenna and subcarrier counts of a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub rx: usize,
    pub tx: usize,
    pub subcarriers: usize,
}

impl Dims {
    pub const fn new(rx: usize, tx: usize, subcarriers: usize) -> Self {
        Dims { rx, tx, subcarriers }
    }

    /// Three receive antennas, one transmitter, 30 grouped subcarriers.
    pub const fn reference_nic() -> Self {
        Dims::new(3, 1, 30)
    }

    pub fn columns(&self) -> usize {
        self.rx * self.tx * self.subcarriers
    }

    pub fn column(&self, rx: usize, tx: usize, subcarrier: usize) -> usize {
        (rx * self.tx + tx) * self.subcarriers + subcarrier
    }

    pub fn coords(&self, column: usize) -> (usize, usize, usize) {
        let i = column % self.subcarriers;
        let pair = column / self.subcarriers;
        (pair / self.tx, pair % self.tx, i)
    }

    fn shape(&self) -> (usize, usize, usize) {
        (self.rx, self.tx, self.subcarriers)
    }
}

/// One timestamped channel snapshot, gains indexed `[rx][tx][subcarrier]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CsiFrame<T> {
    pub timestamp: T,
    gains: Array3<ComplexGain<T>>,
    pub rssi: Option<Vec<T>>,
    pub rate_code: Option<u32>,
}

impl<T: Real> CsiFrame<T> {
    pub fn new(timestamp: T, gains: Array3<ComplexGain<T>>) -> Result<Self> {
        let (rx, tx, s) = gains.dim();
        if rx == 0 || tx == 0 || s == 0 {
            return Err(Error::DimensionMismatch(format!(
                "frame dimensions must be positive, got {rx}x{tx}x{s}"
            )));
        }
        if !timestamp.is_finite() {
            return Err(Error::NonFinite("frame timestamp"));
        }
        if gains.iter().any(|g| !g.re.is_finite() || !g.im.is_finite()) {
            return Err(Error::NonFinite("channel gain"));
        }
        Ok(CsiFrame {
            timestamp,
            gains,
            rssi: None,
            rate_code: None,
        })
    }

    /// Builds a frame from gains in flattened column order.
    pub fn from_flat(timestamp: T, dims: Dims, flat: Vec<ComplexGain<T>>) -> Result<Self> {
        if flat.len() != dims.columns() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} gains, got {}",
                dims.columns(),
                flat.len()
            )));
        }
        let gains = Array3::from_shape_vec(dims.shape(), flat)
            .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
        Self::new(timestamp, gains)
    }

    pub fn with_rate_code(mut self, code: u32) -> Self {
        self.rate_code = Some(code);
        self
    }

    pub fn with_rssi(mut self, rssi: Vec<T>) -> Self {
        self.rssi = Some(rssi);
        self
    }

    pub fn dims(&self) -> Dims {
        let (rx, tx, s) = self.gains.dim();
        Dims::new(rx, tx, s)
    }

    pub fn gains(&self) -> &Array3<ComplexGain<T>> {
        &self.gains
    }

    pub fn gain(&self, rx: usize, tx: usize, subcarrier: usize) -> ComplexGain<T> {
        self.gains[[rx, tx, subcarrier]]
    }

    /// Gains in flattened column order (standard layout iteration is rx-major).
    pub fn flat(&self) -> impl Iterator<Item = ComplexGain<T>> + '_ {
        self.gains.iter().copied()
    }

    pub(crate) fn retimed(&self, timestamp: T) -> Self {
        CsiFrame {
            timestamp,
            ..self.clone()
        }
    }
}

/// Uniformly sampled sequence of frames plus capture metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CsiStream<T> {
    frames: Vec<CsiFrame<T>>,
    pub sample_rate: T,
    pub center_frequency: T,
    pub subcarrier_spacing: T,
    pub label: Option<ActivityLabel>,
    pub subject_id: Option<u32>,
    pub trial_id: Option<u32>,
    /// Output frame ranges that were filled by holding the previous frame
    /// across a capture gap.
    pub held_gaps: Vec<Range<usize>>,
}

impl<T: Real> CsiStream<T> {
    /// Validates shared dimensions and strictly increasing timestamps.
    pub fn new(frames: Vec<CsiFrame<T>>, sample_rate: T, center_frequency: T) -> Result<Self> {
        if !(sample_rate > T::zero()) {
            return Err(Error::InvalidConfig(format!(
                "sample rate must be positive, got {sample_rate}"
            )));
        }
        if let Some(first) = frames.first() {
            let dims = first.dims();
            for (k, pair) in frames.windows(2).enumerate() {
                if pair[1].dims() != dims {
                    return Err(Error::DimensionMismatch(format!(
                        "frame {} has dims {:?}, stream has {:?}",
                        k + 1,
                        pair[1].dims(),
                        dims
                    )));
                }
                if !(pair[1].timestamp > pair[0].timestamp) {
                    return Err(Error::NonMonotoneTimestamps { line: k + 1 });
                }
            }
        }
        Ok(CsiStream {
            frames,
            sample_rate,
            center_frequency,
            subcarrier_spacing: T::lit(DEFAULT_SUBCARRIER_SPACING_HZ),
            label: None,
            subject_id: None,
            trial_id: None,
            held_gaps: Vec::new(),
        })
    }

    pub fn with_label(mut self, label: ActivityLabel) -> Self {
        self.label = Some(label);
        self
    }

    pub fn with_ids(mut self, subject_id: u32, trial_id: u32) -> Self {
        self.subject_id = Some(subject_id);
        self.trial_id = Some(trial_id);
        self
    }

    pub fn frames(&self) -> &[CsiFrame<T>] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<CsiFrame<T>> {
        self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dims(&self) -> Option<Dims> {
        self.frames.first().map(CsiFrame::dims)
    }

    pub fn duration(&self) -> T {
        match (self.frames.first(), self.frames.last()) {
            (Some(a), Some(b)) => b.timestamp - a.timestamp,
            _ => T::zero(),
        }
    }

    /// Copies metadata (rates, labels, ids) onto a new frame list.
    pub(crate) fn with_frames(&self, frames: Vec<CsiFrame<T>>) -> Result<Self> {
        let mut out = CsiStream::new(frames, self.sample_rate, self.center_frequency)?;
        out.subcarrier_spacing = self.subcarrier_spacing;
        out.label = self.label;
        out.subject_id = self.subject_id;
        out.trial_id = self.trial_id;
        Ok(out)
    }

    /// Mean inter-frame gap is within 10% of the nominal sample period.
    pub fn is_regular(&self) -> bool {
        if self.frames.len() < 2 {
            return true;
        }
        let period = T::one() / self.sample_rate;
        let mean_gap = self.duration() / T::from_usize_lossy(self.frames.len() - 1);
        (mean_gap - period).abs() <= T::lit(0.1) * period
    }

    /// Complex gains of one column over time.
    pub fn column_series(&self, column: usize) -> Result<Vec<ComplexGain<T>>> {
        let dims = self.dims().ok_or(Error::EmptyInput("stream"))?;
        if column >= dims.columns() {
            return Err(Error::IndexOutOfRange {
                index: column,
                len: dims.columns(),
            });
        }
        let (r, x, i) = dims.coords(column);
        Ok(self.frames.iter().map(|f| f.gain(r, x, i)).collect())
    }

    fn map_matrix(&self, f: impl Fn(ComplexGain<T>) -> T) -> Result<Array2<T>> {
        let dims = self.dims().ok_or(Error::EmptyInput("stream"))?;
        let mut out = Array2::zeros((self.frames.len(), dims.columns()));
        for (mut row, frame) in out.outer_iter_mut().zip(&self.frames) {
            for (dst, g) in row.iter_mut().zip(frame.flat()) {
                *dst = f(g);
            }
        }
        Ok(out)
    }

    /// `|gain|` per frame, columns in rx-major order.
    pub fn amplitude_matrix(&self) -> Result<Array2<T>> {
        self.map_matrix(|g| g.norm())
    }

    /// Principal-value phase in (-pi, pi] per frame, same column order.
    pub fn phase_matrix(&self) -> Result<Array2<T>> {
        self.map_matrix(|g| {
            let a = g.im.atan2(g.re);
            // atan2 returns -pi for (-x, -0.0)
            if a == -T::PI() {
                T::PI()
            } else {
                a
            }
        })
    }
}
