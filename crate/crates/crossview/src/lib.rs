//! Cross-view hashing for paired image-feature/text data.

mod bytes;
pub mod checkpoint;
pub mod checks;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod models;
pub mod nn;
pub mod objective;
pub mod retrieval;
pub mod synth;
pub mod trainer;
pub mod tensor;

pub use error::{Error, Result};
