//! Pretraining-data detection on a desk-scale language model.
//!
//! The crate holds everything that is pure computation: a small byte-level
//! transformer with exact per-token log-probabilities, its training and
//! low-rank adapter fine-tuning, the membership scoring functions, the
//! fine-tuned score deviation detector, ranking metrics, experiment
//! orchestration and a synthetic event corpus.
//!
//! Builds without `std` (with `alloc`) when default features are disabled.
//! The `parallel` feature (default) spreads per-sequence work over rayon
//! without changing any result bit.

#![cfg_attr(not(any(test, feature = "parallel")), no_std)]

extern crate alloc;

pub mod corpus;
pub mod error;
pub mod eval;
pub mod fsd;
pub mod lm;
pub mod math;
mod par;
pub mod rng;
pub mod scoring;

pub use error::{Error, Result};
pub use fsd::{Label, LabeledDataset, LabeledExample};
pub use lm::{AdapterConfig, LanguageModel, ModelConfig, TokenSeq, TrainConfig, Vocab};
pub use scoring::ScoreFunctionId;
