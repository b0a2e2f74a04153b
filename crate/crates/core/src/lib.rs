//! Configurable 1D ResNet family for atrial-fibrillation vs non-AF ECG
//! classification, together with the tooling to benchmark it: a
//! configuration grammar, exact parameter counting, a small reverse-mode
//! tensor core, the crop/resample data pipeline, training, the windowed
//! inference protocol and report emission.

pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod nn;
pub mod pipeline;

pub use error::{Error, Result};
