//! Speaker-verification back-end toolkit.
//!
//! Everything downstream of embedding extraction: linear pre-processing
//! (mean centering, LDA, length normalization), two-covariance PLDA with
//! unsupervised domain adaptation, cosine and PLDA trial scoring with
//! adaptive s-norm, logistic-regression calibration and fusion, and
//! NIST-style evaluation metrics (EER, minDCF, actDCF, DET curves).
//! A synthetic embedding generator provides ground-truth fixtures for
//! every stage.

pub mod data;
pub mod error;
pub mod fusion;
pub mod linalg;
pub mod metrics;
pub mod plda;
pub mod rng;
pub mod scoring;
pub mod synth;
pub mod transforms;

pub use error::{Error, ErrorClass, Result};
