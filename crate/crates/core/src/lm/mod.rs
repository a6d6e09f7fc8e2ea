//! The trainable byte-level language model.

pub mod checkpoint;
mod config;
pub mod gradcheck;
mod layout;
mod model;
mod optim;
mod train;
mod transformer;
mod vocab;

pub use config::{AdapterConfig, AdapterTarget, ModelConfig, TrainConfig};
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use layout::{Layout, TensorSpec};
pub use model::{AdapterSet, Gradient, LanguageModel};
pub use optim::{clip_grad_norm, cosine_lr};
pub use train::{finetune, train, FinetuneMode, TrainReport};
pub use vocab::{decode, encode, Encoded, TokenId, TokenSeq, Vocab};
