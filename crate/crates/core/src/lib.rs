//! Masked-language-model pretraining for short social-media texts, with a
//! latent author/topic bias on the output layer, an adaptive-depth recurrent
//! encoder and per-token-kind loss weights.

pub mod encoder;
pub mod error;
pub mod heads;
pub mod latent;
pub mod model;
pub mod numeric;
pub mod planted;
pub mod preprocess;
pub mod tokenizer;
pub mod trainer;

pub use error::{Error, Result};
