//! Dataset assembly, cross-validation and reports.

mod benchmark;
mod config;
mod confusion;
mod pipeline;
mod split;

pub use benchmark::{benchmark_frame_rate, degrade, rate_table_csv, synthetic_frames, synthetic_trial, synthetic_trial_count, RateResult};
pub use config::{BenchmarkConfig, FrameKind, HistogramConfig, ModelKind, PipelineConfig, PreprocessConfig};
pub use confusion::ConfusionMatrix;
pub use pipeline::{evaluate, rotate_window, train, EvalReport, FoldResult, Pipeline, TrainedModel, MODEL_MAGIC, MODEL_VERSION};
pub use split::{check_disjoint, folds, Fold, SplitSpec};

use ndarray::{s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{dwt_features, stft_feature_frames};
use crate::ingest::regularize;
use crate::model::{ActivityLabel, CsiStream};
use crate::num::Real;
use crate::preprocess::{fit_pca, lowpass_columns, pca_denoise};

/// Identity of one labeled trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TrialMeta {
    pub label: ActivityLabel,
    pub subject: Option<u32>,
    pub trial: Option<u32>,
}

impl TrialMeta {
    pub fn of<T>(stream: &CsiStream<T>) -> Result<Self> {
        let label = stream.label.ok_or_else(|| Error::DegenerateLabels("trial has no activity label"))?;
        Ok(TrialMeta {
            label,
            subject: stream.subject_id,
            trial: stream.trial_id,
        })
    }
}

/// Per-trial feature frames, one row per frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TrialFrames<T> {
    pub meta: TrialMeta,
    pub kind: FrameKind,
    /// Seconds between consecutive rows.
    pub frame_period: f64,
    pub frames: Array2<T>,
}

impl<T: Real> TrialFrames<T> {
    /// Window length in frames for `window_s` seconds.
    pub fn window_frames(&self, window_s: f64) -> Result<usize> {
        let n = window_s / self.frame_period;
        let r = n.round();
        if r < 1.0 || (n - r).abs() > 1e-6 {
            return Err(Error::SpanNotMultiple {
                span: window_s,
                period: self.frame_period,
            });
        }
        Ok(r as usize)
    }

    /// Up to `count` evenly spaced windows of `window_s` seconds; first and
    /// last flush with the trial ends, duplicates dropped.
    pub fn windows(&self, window_s: f64, count: usize) -> Result<Vec<ArrayView2<'_, T>>> {
        let w = self.window_frames(window_s)?;
        let n = self.frames.nrows();
        if n < w {
            return Err(Error::SeriesTooShort { len: n, window: w });
        }
        let slack = n - w;
        let mut starts: Vec<usize> = if count <= 1 {
            vec![slack / 2]
        } else {
            (0..count).map(|i| i * slack / (count - 1)).collect()
        };
        starts.dedup();
        Ok(starts.into_iter().map(|a| self.frames.slice(s![a..a + w, ..])).collect())
    }
}

/// Lowpassed amplitudes projected onto the kept principal components.
fn kept_scores<T: Real>(stream: &CsiStream<T>, cfg: &PipelineConfig) -> Result<Array2<T>> {
    let amps = stream.amplitude_matrix()?;
    let smooth = lowpass_columns(&amps, T::lit(cfg.preprocess.cutoff_hz), stream.sample_rate)?;
    let model = fit_pca(smooth.view())?;
    let keep: Vec<usize> = cfg.keep().into_iter().filter(|&k| k < model.dim()).collect();
    if keep.is_empty() {
        return Err(Error::DegenerateInput("no principal components in the keep range"));
    }
    pca_denoise(smooth.view(), &model, &keep)
}

/// Mean of each block of `pool` consecutive rows; a short tail is dropped.
pub fn pool_rows<T: Real>(matrix: ArrayView2<T>, pool: usize) -> Result<Array2<T>> {
    if pool == 0 {
        return Err(Error::InvalidConfig("pool size must be positive".into()));
    }
    let blocks = matrix.nrows() / pool;
    if blocks == 0 {
        return Err(Error::SeriesTooShort {
            len: matrix.nrows(),
            window: pool,
        });
    }
    let mut out = Array2::zeros((blocks, matrix.ncols()));
    let scale = T::from_usize_lossy(pool);
    for (b, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        let block = matrix.slice(s![b * pool..(b + 1) * pool, ..]);
        for (o, col) in row.iter_mut().zip(block.columns()) {
            *o = col.sum() / scale;
        }
    }
    Ok(out)
}

/// Turns one labeled trial into frames of each requested kind.
pub fn featurize<T: Real>(stream: &CsiStream<T>, kinds: &[FrameKind], cfg: &PipelineConfig) -> Result<Vec<TrialFrames<T>>> {
    let meta = TrialMeta::of(stream)?;
    let regular;
    let stream = if stream.is_regular() {
        stream
    } else {
        regular = regularize(stream, stream.sample_rate)?;
        &regular
    };
    let fs = stream.sample_rate;
    let mut scores: Option<Array2<T>> = None;
    let mut out = Vec::with_capacity(kinds.len());
    for &kind in kinds {
        let needs_scores = kind != FrameKind::Raw;
        if needs_scores && scores.is_none() {
            scores = Some(kept_scores(stream, cfg)?);
        }
        let (frames, frame_period) = match kind {
            FrameKind::Stft25 => {
                let seq = stft_feature_frames(scores.as_ref().expect("computed").view(), fs, &cfg.stft)?;
                (seq.vectors, seq.frame_period.as_f64())
            }
            FrameKind::Dwt27 => {
                let seq = dwt_features(scores.as_ref().expect("computed").view(), fs, stream.center_frequency, &cfg.dwt)?;
                (seq.vectors, seq.frame_period.as_f64())
            }
            FrameKind::Pca => (scores.clone().expect("computed"), 1.0 / fs.as_f64()),
            FrameKind::Raw => {
                let amps = stream.amplitude_matrix()?;
                (pool_rows(amps.view(), cfg.lstm_pool)?, cfg.lstm_pool as f64 / fs.as_f64())
            }
        };
        out.push(TrialFrames {
            meta,
            kind,
            frame_period,
            frames,
        });
    }
    Ok(out)
}
