//! Passive human activity recognition from WiFi channel state information.
//!
//! The pipeline runs from captured (or simulated) CSI streams through phase
//! sanitization and PCA denoising to spectral and wavelet features, and ends
//! in one of four classifier families. All numeric code is generic over
//! [`Real`]; the `*F64` aliases below fix the common double-precision case.

pub mod error;
pub mod classifiers;
pub mod eval;
pub mod features;
pub mod gesture;
pub mod ingest;
pub mod model;
pub mod num;
pub mod preprocess;
mod linalg;
pub mod simulate;

pub use error::{Error, Result};
pub use model::{ActivityLabel, ComplexGain, CsiFrame, CsiStream, Dims};
pub use num::Real;

pub type CsiFrameF64 = CsiFrame<f64>;
pub type CsiStreamF64 = CsiStream<f64>;
pub type LabeledDatasetF64 = ingest::LabeledDataset<f64>;
