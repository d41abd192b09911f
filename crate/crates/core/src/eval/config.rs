use serde::{Deserialize, Serialize};

use crate::classifiers::{ForestConfig, HmmConfig, LstmConfig};
use crate::error::{Error, Result};
use crate::features::{DwtConfig, StftFeatureConfig};
use crate::model::ActivityLabel;
use crate::preprocess::DEFAULT_CUTOFF_HZ;

/// Per-trial frame representation produced by featurization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameKind {
    /// 25-bin STFT magnitudes averaged over the kept PCs.
    Stft25,
    /// 27-dim wavelet features per 200 ms.
    Dwt27,
    /// Mean-pooled raw amplitudes, 90 columns.
    Raw,
    /// PCA-denoised scores of the kept components.
    Pca,
}

impl FrameKind {
    pub fn name(self) -> &'static str {
        match self {
            FrameKind::Stft25 => "stft25",
            FrameKind::Dwt27 => "dwt27",
            FrameKind::Raw => "raw",
            FrameKind::Pca => "pca",
        }
    }
}

impl std::str::FromStr for FrameKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stft25" => Ok(FrameKind::Stft25),
            "dwt27" => Ok(FrameKind::Dwt27),
            "raw" => Ok(FrameKind::Raw),
            "pca" => Ok(FrameKind::Pca),
            _ => Err(Error::InvalidConfig(format!("unknown feature kind {s:?} (stft25, dwt27, raw, pca)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[serde(alias = "histogram")]
    Hist,
    Forest,
    Hmm,
    Lstm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Hist, ModelKind::Forest, ModelKind::Hmm, ModelKind::Lstm];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Hist => "hist",
            ModelKind::Forest => "forest",
            ModelKind::Hmm => "hmm",
            ModelKind::Lstm => "lstm",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hist" | "histogram" => Ok(ModelKind::Hist),
            "forest" => Ok(ModelKind::Forest),
            "hmm" => Ok(ModelKind::Hmm),
            "lstm" => Ok(ModelKind::Lstm),
            _ => Err(Error::InvalidConfig(format!("unknown model kind {s:?} (hist, forest, hmm, lstm)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    pub cutoff_hz: f64,
    /// Kept principal components `keep_start..keep_end` (zero-based).
    pub keep_start: usize,
    pub keep_end: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            cutoff_hz: DEFAULT_CUTOFF_HZ,
            keep_start: 1,
            keep_end: 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HistogramConfig {
    pub bins: usize,
}

impl Default for HistogramConfig {
    fn default() -> Self {
        HistogramConfig {
            bins: crate::classifiers::histogram::DEFAULT_BINS,
        }
    }
}

/// Synthetic benchmark layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkConfig {
    pub activities: Vec<ActivityLabel>,
    pub subjects: u32,
    pub trials: u32,
    pub duration_s: f64,
    pub frame_rates: Vec<f64>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            activities: ActivityLabel::ACTIVITIES.to_vec(),
            subjects: 6,
            trials: 20,
            duration_s: 2.5,
            frame_rates: vec![50.0, 100.0, 250.0, 1000.0],
        }
    }
}

/// Every tunable of the pipeline in one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Single source of randomness; each stage derives its own stream.
    pub seed: u64,
    pub window_s: f64,
    pub windows_per_trial: usize,
    /// Features consumed by the histogram, forest and HMM models.
    pub features: FrameKind,
    /// Mean-pooling factor for raw LSTM input.
    pub lstm_pool: usize,
    pub preprocess: PreprocessConfig,
    pub stft: StftFeatureConfig,
    pub dwt: DwtConfig,
    pub histogram: HistogramConfig,
    pub forest: ForestConfig,
    pub hmm: HmmConfig,
    pub lstm: LstmConfig,
    pub benchmark: BenchmarkConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            window_s: 2.0,
            windows_per_trial: 3,
            features: FrameKind::Stft25,
            lstm_pool: 5,
            preprocess: PreprocessConfig::default(),
            stft: StftFeatureConfig::default(),
            dwt: DwtConfig::default(),
            histogram: HistogramConfig::default(),
            forest: ForestConfig::default(),
            hmm: HmmConfig::default(),
            lstm: LstmConfig::default(),
            benchmark: BenchmarkConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Checks ranges and cross-field constraints.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.window_s > 0.0) || self.windows_per_trial == 0 {
            return bad("window_s and windows_per_trial must be positive".into());
        }
        if self.lstm_pool == 0 {
            return bad("lstm_pool must be at least 1".into());
        }
        if self.preprocess.keep_start >= self.preprocess.keep_end {
            return bad(format!(
                "empty PCA keep range {}..{}",
                self.preprocess.keep_start, self.preprocess.keep_end
            ));
        }
        if !(self.preprocess.cutoff_hz > 0.0) {
            return bad("cutoff_hz must be positive".into());
        }
        if self.stft.bins != 25 || self.stft.window_len == 0 || self.stft.window_len > self.stft.fft_len || !(self.stft.hop_ms > 0.0) {
            return bad(format!("invalid STFT settings {:?}", self.stft));
        }
        if self.dwt.levels != 12 || !(self.dwt.interval_ms > 0.0) {
            return bad(format!("invalid wavelet settings {:?}", self.dwt));
        }
        if self.features == FrameKind::Raw {
            return bad("raw frames feed the LSTM only; pick stft25, dwt27 or pca for `features`".into());
        }
        if self.histogram.bins == 0 || self.forest.n_trees == 0 || self.hmm.states == 0 || self.lstm.hidden == 0 {
            return bad("model sizes must be positive".into());
        }
        let b = &self.benchmark;
        if b.activities.len() < 2 || b.subjects == 0 || b.trials == 0 || !(b.duration_s > self.window_s) {
            return bad("benchmark needs two activities, a subject, a trial, and trials longer than the window".into());
        }
        if b.frame_rates.iter().any(|r| !(*r > 0.0)) {
            return bad("frame rates must be positive".into());
        }
        Ok(())
    }

    /// Settings used by the synthetic benchmark: the LSTM is scaled down so
    /// that six folds train in minutes on a laptop CPU.
    pub fn benchmark() -> Self {
        let mut cfg = PipelineConfig::default();
        cfg.lstm_pool = 10;
        cfg.lstm = LstmConfig {
            hidden: 16,
            batch_size: 32,
            learning_rate: 0.05,
            momentum: 0.9,
            epochs: 45,
            ..LstmConfig::default()
        };
        cfg
    }

    pub(crate) fn forest_config(&self) -> ForestConfig {
        ForestConfig {
            seed: self.seed,
            ..self.forest
        }
    }

    pub(crate) fn hmm_config(&self) -> HmmConfig {
        HmmConfig {
            seed: self.seed.wrapping_add(1),
            ..self.hmm
        }
    }

    pub(crate) fn lstm_config(&self) -> LstmConfig {
        LstmConfig {
            seed: self.seed.wrapping_add(2),
            ..self.lstm
        }
    }

    pub fn keep(&self) -> Vec<usize> {
        (self.preprocess.keep_start..self.preprocess.keep_end).collect()
    }
}
