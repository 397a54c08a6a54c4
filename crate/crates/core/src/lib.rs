//! Mid-air gesture authentication engine.
//!
//! The pipeline turns recorded hand-tracking frame streams into per-user
//! verification decisions:
//!
//! 1. [`gesture`] — the raw frame/sample data model and its JSONL file format
//!    (see [`io`]).
//! 2. [`features`] — per-frame feature extraction (75 raw + 25 derived
//!    columns) and corpus z-score normalization.
//! 3. [`dtw`] — weighted dynamic time warping between feature sequences.
//! 4. [`selection`] — per-feature EER screening, feature reduction and
//!    per-feature weights.
//! 5. [`bank`] / [`system`] — the shared template bank, DTW-distance feature
//!    vectors, and one soft-margin RBF classifier per user trained with SMO
//!    ([`svm`]); enrollment grows the bank and retrains everyone.
//! 6. [`metrics`] / [`corners`] / [`evaluate`] — EER, precision–recall,
//!    curvature-scale-space corner counts, k-fold, consistency-over-batches
//!    and shoulder-surfing experiments.
//! 7. [`synth`] — a deterministic parametric gesture generator used as the
//!    ground-truth corpus for every experiment.

pub mod bank;
pub mod corners;
pub mod dtw;
pub mod error;
pub mod evaluate;
pub mod features;
pub mod gesture;
pub mod io;
pub mod metrics;
pub mod selection;
pub mod svm;
pub mod synth;
pub mod system;

pub use error::{Error, Result};
