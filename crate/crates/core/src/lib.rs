//! Pointer-based seq2seq semantic parsing with a concept encoder.

pub mod data;
pub mod error;
pub mod eval;
pub mod io;
pub mod model;
pub mod parse;
pub mod protocol;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
