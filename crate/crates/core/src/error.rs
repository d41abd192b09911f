use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    // capture log
    #[error("truncated record at byte {offset}: declared {declared} bytes, {available} available")]
    TruncatedRecord {
        offset: usize,
        declared: usize,
        available: usize,
    },
    #[error("CSI payload size mismatch at byte {offset}: header says {declared}, layout needs {computed}")]
    PayloadSizeMismatch {
        offset: usize,
        declared: usize,
        computed: usize,
    },
    #[error("unsupported antenna dimensions {n_rx}x{n_tx}")]
    UnsupportedDimensions { n_rx: usize, n_tx: usize },

    // text formats
    #[error("header missing or incomplete: {0}")]
    HeaderMissing(String),
    #[error("line {line}: expected {expected} fields, found {found}")]
    RowArityMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: timestamps must be strictly increasing")]
    NonMonotoneTimestamps { line: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("need at least {needed} frames, got {got}")]
    TooFewFrames { needed: usize, got: usize },
    #[error("window [{start}, {stop}] s outside stream range [{first}, {last}] s")]
    WindowOutOfRange {
        start: f64,
        stop: f64,
        first: f64,
        last: f64,
    },

    #[error("sample rate {sample_rate} Hz cannot represent Doppler {doppler} Hz")]
    AliasedDoppler { sample_rate: f64, doppler: f64 },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("need at least 2 subcarriers, got {0}")]
    TooFewSubcarriers(usize),
    #[error("cutoff {cutoff} Hz must lie in (0, {nyquist}) Hz")]
    InvalidCutoff { cutoff: f64, nyquist: f64 },
    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),
    #[error("index {index} out of range 0..{len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("need at least 2 rows, got {0}")]
    TooFewRows(usize),

    #[error("series of {len} samples shorter than window {window}")]
    SeriesTooShort { len: usize, window: usize },
    #[error("span of {frames} frames exceeds sequence length {available}")]
    SpanTooLong { frames: usize, available: usize },
    #[error("span {span} s is not a multiple of frame period {period} s")]
    SpanNotMultiple { span: f64, period: f64 },
    #[error("phase difference needs at least 2 receive antennas")]
    SingleAntenna,

    #[error("no gesture segments")]
    NoSegments,
    #[error("template set is empty")]
    NoTemplates,

    #[error("class {0} has no training examples")]
    EmptyClass(String),
    #[error("degenerate labels: {0}")]
    DegenerateLabels(&'static str),
    #[error("numerical underflow in {0}")]
    NumericalUnderflow(&'static str),
    #[error("log-likelihood decreased from {before} to {after} at iteration {iteration}")]
    LikelihoodDecreased {
        iteration: usize,
        before: f64,
        after: f64,
    },
    #[error("non-finite loss at epoch {epoch}, batch {batch}: {detail}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        detail: String,
    },
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("split impossible: {0}")]
    SplitImpossible(String),
    #[error("test trial {0} also appears in the training fold")]
    Leakage(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("model format: {0}")]
    ModelFormat(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerics (as opposed to bad input data).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_)
                | Error::NumericalUnderflow(_)
                | Error::LikelihoodDecreased { .. }
                | Error::NonFiniteLoss { .. }
                | Error::DegenerateInput(_)
        )
    }
}
