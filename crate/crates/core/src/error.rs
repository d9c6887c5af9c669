use alloc::string::String;
use alloc::vec::Vec;

use crate::network::Violation;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("chromosome kinds differ")]
    KindMismatch,

    #[error("chromosome {0} has no fitness")]
    MissingFitness(u64),

    #[error("invalid chromosome: {0}")]
    InvalidChromosome(String),

    #[error("invalid network ({} violations)", .0.len())]
    InvalidNetwork(Vec<Violation>),

    #[error("shape error at layer `{layer}`: {detail}")]
    Shape { layer: String, detail: String },

    #[error("interchange decode error: {0}")]
    Decode(String),

    #[error("unsupported interchange format version `{0}`")]
    FormatVersion(String),

    #[error("hyperparameter-only mode can only be changed before the first generation")]
    ModeLocked,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
