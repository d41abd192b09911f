use std::collections::BTreeSet;

use ndarray::{Array2, Array3, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{check_disjoint, folds, ConfusionMatrix, FrameKind, ModelKind, PipelineConfig, SplitSpec, TrialFrames, TrialMeta};
use crate::classifiers::{forest_fit, hist_fit, hmm_fit, lstm, lstm_fit, majority_vote, ForestModel, HistogramModel, HmmModel, LstmModel};
use crate::error::{Error, Result};
use crate::model::ActivityLabel;
use crate::num::Real;
use crate::preprocess::fit_pca;

pub const MODEL_MAGIC: &str = "wisense-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", tag = "kind", content = "model", rename_all = "lowercase")]
pub enum TrainedModel<T> {
    Hist(HistogramModel<T>),
    Forest(ForestModel<T>),
    Hmm(HmmModel<T>),
    Lstm(LstmModel<T>),
}

impl<T> TrainedModel<T> {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::Hist(_) => ModelKind::Hist,
            TrainedModel::Forest(_) => ModelKind::Forest,
            TrainedModel::Hmm(_) => ModelKind::Hmm,
            TrainedModel::Lstm(_) => ModelKind::Lstm,
        }
    }
}

/// A fitted classifier plus everything needed to featurize new trials.
#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline<T> {
    pub config: PipelineConfig,
    pub frames: FrameKind,
    /// Class index -> activity.
    pub labels: Vec<ActivityLabel>,
    pub model: TrainedModel<T>,
}

#[derive(Serialize, Deserialize)]
struct PipelineHeader {
    config: PipelineConfig,
    frames: FrameKind,
    labels: Vec<ActivityLabel>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Real")]
struct Envelope<T> {
    magic: String,
    version: u32,
    pipeline: PipelineHeader,
    #[serde(flatten)]
    model: TrainedModel<T>,
}

impl ModelKind {
    /// Frame kind this model consumes under `cfg`.
    pub fn frames(self, cfg: &PipelineConfig) -> FrameKind {
        match self {
            ModelKind::Lstm => FrameKind::Raw,
            _ => cfg.features,
        }
    }
}

/// Per-window model input.
fn model_input<T: Real>(kind: ModelKind, window: ArrayView2<T>) -> Result<Array2<T>> {
    match kind {
        // scale-free: fingerprints compare shapes, not body reflectivity
        ModelKind::Hist => {
            let mean = window.iter().map(|v| v.abs()).sum::<T>() / T::from_usize_lossy(window.len().max(1));
            if mean > T::zero() {
                Ok(window.mapv(|v| v / mean))
            } else {
                Ok(window.to_owned())
            }
        }
        ModelKind::Forest | ModelKind::Hmm => Ok(window.to_owned()),
        ModelKind::Lstm => rotate_window(window),
    }
}

/// Scores on the window's own principal axes, ordered by variance, signed so
/// each axis has a non-negative loading sum and scaled by the first axis's
/// standard deviation. Keeps all 90 dimensions while making the column
/// order independent of room geometry.
pub fn rotate_window<T: Real>(window: ArrayView2<T>) -> Result<Array2<T>> {
    let model = match fit_pca(window) {
        Ok(m) => m,
        Err(Error::DegenerateInput(_)) => return Ok(Array2::zeros(window.dim())),
        Err(e) => return Err(e),
    };
    let mut scores = model.transform(window)?;
    for (j, mut col) in scores.columns_mut().into_iter().enumerate() {
        if model.components.column(j).sum() < T::zero() {
            col.mapv_inplace(|v| -v);
        }
    }
    let scale = model.explained_variance[0].sqrt();
    if scale > T::zero() {
        scores.mapv_inplace(|v| v / scale);
    }
    Ok(scores)
}

fn inputs<T: Real>(kind: ModelKind, trial: &TrialFrames<T>, cfg: &PipelineConfig) -> Result<Vec<Array2<T>>> {
    trial
        .windows(cfg.window_s, cfg.windows_per_trial)?
        .into_iter()
        .map(|w| model_input(kind, w))
        .collect()
}

fn check_frames<'a, T: 'a>(kind: ModelKind, trials: impl IntoIterator<Item = &'a TrialFrames<T>>, cfg: &PipelineConfig) -> Result<FrameKind> {
    let want = kind.frames(cfg);
    for t in trials {
        if t.kind != want {
            return Err(Error::InvalidConfig(format!("{} needs {} frames, got {}", kind.name(), want.name(), t.kind.name())));
        }
        if kind == ModelKind::Lstm && t.frames.ncols() != 90 {
            return Err(Error::ShapeMismatch {
                expected: "90 amplitude columns".into(),
                got: t.frames.ncols().to_string(),
            });
        }
    }
    Ok(want)
}

/// Fits `kind` on every window of `trials`.
pub fn train<T: Real>(kind: ModelKind, trials: &[TrialFrames<T>], cfg: &PipelineConfig) -> Result<Pipeline<T>> {
    cfg.validate()?;
    let refs: Vec<&TrialFrames<T>> = trials.iter().collect();
    train_refs(kind, &refs, cfg)
}

fn train_refs<T: Real>(kind: ModelKind, trials: &[&TrialFrames<T>], cfg: &PipelineConfig) -> Result<Pipeline<T>> {
    let frames = check_frames(kind, trials.iter().copied(), cfg)?;
    let labels: Vec<ActivityLabel> = trials.iter().map(|t| t.meta.label).collect::<BTreeSet<_>>().into_iter().collect();
    if labels.len() < 2 {
        return Err(Error::DegenerateLabels("training needs at least two activities"));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &t in trials {
        let y = labels.binary_search(&t.meta.label).expect("label collected above");
        for x in inputs(kind, t, cfg)? {
            xs.push(x);
            ys.push(y);
        }
    }
    let n = labels.len();
    let model = match kind {
        ModelKind::Hist => {
            let views: Vec<_> = xs.iter().map(|x| x.view()).collect();
            TrainedModel::Hist(hist_fit(&views, &ys, n, cfg.histogram.bins)?)
        }
        ModelKind::Forest => {
            let width = xs[0].len();
            let mut flat = Array2::zeros((xs.len(), width));
            for (mut row, x) in flat.axis_iter_mut(Axis(0)).zip(&xs) {
                row.assign(&ndarray::ArrayView1::from(x.as_slice().expect("owned windows are contiguous")));
            }
            TrainedModel::Forest(forest_fit(flat.view(), &ys, n, &cfg.forest_config())?)
        }
        ModelKind::Hmm => {
            let views: Vec<_> = xs.iter().map(|x| x.view()).collect();
            TrainedModel::Hmm(hmm_fit(&views, &ys, n, &cfg.hmm_config())?)
        }
        ModelKind::Lstm => {
            let (steps, input) = xs[0].dim();
            let mut batch = Array3::zeros((xs.len(), steps, input));
            for (mut slot, x) in batch.axis_iter_mut(Axis(0)).zip(&xs) {
                slot.assign(x);
            }
            TrainedModel::Lstm(lstm_fit(&batch, &ys, n, &cfg.lstm_config())?.0)
        }
    };
    Ok(Pipeline {
        config: cfg.clone(),
        frames,
        labels,
        model,
    })
}

impl<T: Real> Pipeline<T> {
    pub fn kind(&self) -> ModelKind {
        self.model.kind()
    }

    fn predict_input(&self, x: &Array2<T>) -> Result<usize> {
        match &self.model {
            TrainedModel::Hist(m) => m.predict(x.view()),
            TrainedModel::Forest(m) => m.predict(ndarray::ArrayView1::from(x.as_slice().expect("contiguous"))),
            TrainedModel::Hmm(m) => m.predict(x.view()),
            TrainedModel::Lstm(m) => Ok(m.predict(x.view())?.0),
        }
    }

    /// Class index per window.
    pub fn predict_windows(&self, trial: &TrialFrames<T>) -> Result<Vec<usize>> {
        if trial.kind != self.frames {
            return Err(Error::InvalidConfig(format!("model expects {} frames, got {}", self.frames.name(), trial.kind.name())));
        }
        inputs(self.kind(), trial, &self.config)?.iter().map(|x| self.predict_input(x)).collect()
    }

    /// Majority vote over the trial's windows, ties to the lower class index.
    pub fn predict_trial(&self, trial: &TrialFrames<T>) -> Result<ActivityLabel> {
        let votes = self.predict_windows(trial)?;
        Ok(self.labels[majority_vote(&votes, self.labels.len())])
    }

    fn header(&self) -> PipelineHeader {
        PipelineHeader {
            config: self.config.clone(),
            frames: self.frames,
            labels: self.labels.clone(),
        }
    }

    /// JSON envelope, or the binary tensor format for LSTMs.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        match &self.model {
            TrainedModel::Lstm(m) => Ok(m.to_bytes(serde_json::json!({
                "magic": MODEL_MAGIC,
                "version": MODEL_VERSION,
                "kind": "lstm",
                "pipeline": self.header(),
            }))),
            model => {
                let env = Envelope {
                    magic: MODEL_MAGIC.into(),
                    version: MODEL_VERSION,
                    pipeline: self.header(),
                    model: model.clone(),
                };
                Ok(serde_json::to_vec(&env)?)
            }
        }
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.starts_with(lstm::MAGIC) {
            let (model, extra) = LstmModel::from_bytes(bytes)?;
            if extra.get("magic").and_then(|m| m.as_str()) != Some(MODEL_MAGIC) {
                return Err(Error::ModelFormat("LSTM file carries no pipeline header".into()));
            }
            let header: PipelineHeader = serde_json::from_value(extra["pipeline"].clone())?;
            return Ok(Pipeline {
                config: header.config,
                frames: header.frames,
                labels: header.labels,
                model: TrainedModel::Lstm(model),
            });
        }
        let env: Envelope<T> = serde_json::from_slice(bytes).map_err(|e| Error::ModelFormat(format!("not a model file: {e}")))?;
        if env.magic != MODEL_MAGIC {
            return Err(Error::ModelFormat(format!("bad magic {:?}", env.magic)));
        }
        if env.version != MODEL_VERSION {
            return Err(Error::ModelFormat(format!("unsupported version {}", env.version)));
        }
        Ok(Pipeline {
            config: env.pipeline.config,
            frames: env.pipeline.frames,
            labels: env.pipeline.labels,
            model: env.model,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub name: String,
    pub test_trials: usize,
    pub trial_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub kind: ModelKind,
    pub split: SplitSpec,
    pub windows: ConfusionMatrix,
    pub trials: ConfusionMatrix,
    /// Sorted by fold name.
    pub folds: Vec<FoldResult>,
}

impl EvalReport {
    /// Trial-level macro accuracy.
    pub fn macro_accuracy(&self) -> f64 {
        self.trials.macro_accuracy()
    }

    pub fn class_accuracy(&self, label: ActivityLabel) -> Option<f64> {
        let i = self.trials.labels.iter().position(|&l| l == label)?;
        self.trials.per_class_accuracy()[i]
    }
}

/// Cross-validated window- and trial-level confusion matrices.
pub fn evaluate<T: Real>(kind: ModelKind, trials: &[TrialFrames<T>], split: &SplitSpec, cfg: &PipelineConfig) -> Result<EvalReport> {
    cfg.validate()?;
    check_frames(kind, trials, cfg)?;
    let metas: Vec<TrialMeta> = trials.iter().map(|t| t.meta).collect();
    let labels: Vec<ActivityLabel> = metas.iter().map(|m| m.label).collect::<BTreeSet<_>>().into_iter().collect();
    let mut window_cm = ConfusionMatrix::new(labels.clone());
    let mut trial_cm = ConfusionMatrix::new(labels.clone());
    let mut results = Vec::new();
    for fold in folds(split, &metas, cfg.seed)? {
        check_disjoint(&fold, &metas)?;
        let train_set: Vec<&TrialFrames<T>> = fold.train.iter().map(|&i| &trials[i]).collect();
        let pipe = train_refs(kind, &train_set, cfg)?;
        let mut correct = 0;
        for &i in &fold.test {
            let actual = labels.binary_search(&metas[i].label).expect("collected");
            let votes = pipe.predict_windows(&trials[i])?;
            for &v in &votes {
                let p = labels.binary_search(&pipe.labels[v]).expect("training labels are a subset");
                window_cm.record(actual, p)?;
            }
            let predicted = pipe.labels[majority_vote(&votes, pipe.labels.len())];
            let p = labels.binary_search(&predicted).expect("training labels are a subset");
            trial_cm.record(actual, p)?;
            correct += usize::from(p == actual);
        }
        results.push(FoldResult {
            name: fold.name,
            test_trials: fold.test.len(),
            trial_accuracy: correct as f64 / fold.test.len() as f64,
        });
    }
    results.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(EvalReport {
        kind,
        split: split.clone(),
        windows: window_cm,
        trials: trial_cm,
        folds: results,
    })
}
