//! # afe-core
//!
//! A self-contained audio emotion classification engine. Raw movie audio goes
//! in, three-class (Good/Neutral/Bad) predictions come out.
//!
//! The pipeline:
//!
//! ```text
//! WAV -> 7 s segments -> frame features (MFCC, mel, chroma, ZCR, centroid,
//! rolloff) -> 195-dim segment vectors -> outlier repair -> min-max scaling
//! -> four-stage filter bank -> NearMiss balancing -> 15 base learners
//! (9 RBF-SVMs, 3 BPNNs, 3 1D-CNNs) -> SVM meta learner
//! ```
//!
//! Hyperparameter search (iterative grid refinement, K-fold CV, nested CV,
//! LOOCV) and evaluation reports are built in. Trained state persists as a
//! single versioned model bundle.

pub mod balance;
pub mod bundle;
pub mod config;
pub mod dataio;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod features;
pub mod matrix;
pub mod nn;
pub mod pipeline;
pub mod preprocess;
pub mod select;
pub mod svm;
pub mod synthetic;
pub mod tuning;

pub use dataio::{Dataset, Emotion, Segment, Waveform};
pub use ensemble::EnsembleModel;
pub use error::Error;
pub use matrix::Matrix;

/// Stable 64-bit content hash (FNV-1a) used for provenance tracking of
/// training rows and preprocessing state.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Hash a row of f64 features (little-endian bytes) for provenance sets.
pub fn hash_row(row: &[f64]) -> u64 {
    let mut bytes = Vec::with_capacity(row.len() * 8);
    for v in row {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fnv1a(&bytes)
}

/// Derive a per-stage RNG seed from the run seed and a stage tag, so stages
/// can be re-run independently yet reproducibly.
pub fn stage_seed(seed: u64, tag: &str) -> u64 {
    seed ^ fnv1a(tag.as_bytes())
}
