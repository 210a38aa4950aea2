//! Variational-Bayes speaker diarization over segment embeddings.
//!
//! Segments of a two-speaker conversation are represented by fixed-length
//! embedding vectors and modelled with a two-covariance PLDA model: each
//! embedding is a speaker vector plus a residual, both Gaussian. Mean-field
//! variational inference alternates between segment posteriors (which
//! speaker talks in each segment) and Gaussian speaker posteriors, with an
//! optional deterministic-annealing temperature schedule that guards
//! against poor local optima. The crate also ships the classic
//! PCA + cosine k-means baseline, initialization heuristics, a synthetic
//! corpus generator, and an interval-exact DER scorer.
//!
//! The `examples/` directory has one runnable program per capability; the
//! `vbdiar` binary wires the same building blocks into a `synth` →
//! `train-plda` → `diarize` → `score` pipeline.

pub mod baseline;
pub mod cli;
pub mod der;
pub mod error;
pub mod init;
pub mod linalg;
pub mod plda;
pub mod preprocess;
pub mod seed;
pub mod synth;
pub mod vb;

pub use error::{Error, Result};
pub use plda::{SpeakerPrior, TwoCovPlda};
pub use vb::{AnnealSchedule, ConvergenceConfig, VbState};
