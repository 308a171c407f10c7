//! Embeddings, the stacked and recurrent encoders, and parameter counting.

mod config;
mod layers;
mod registry;

use thiserror::Error;

use crate::numeric::NumericError;

pub use config::{ModelConfig, Variant, UNIT_BLOCKS};
pub use layers::{
    embed_inputs, encode, encode_base, encode_universal, encoder_block, EncoderOutput,
    NORM_EPSILON,
};
pub use registry::{
    base_block_prefix, check_store, count_parameters, init_params, init_tensor, parameter_specs,
    unit_block_prefix, Init, ParamGroup, ParamSpec, ParameterCount, INIT_STDDEV,
};

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("{what} {index} out of range (limit {extent})")]
    OutOfRange {
        what: &'static str,
        index: usize,
        extent: usize,
    },
    #[error(transparent)]
    Numeric(#[from] NumericError),
}
