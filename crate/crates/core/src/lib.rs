//! Neural machine translation with a latent graph parser in the encoder.

pub mod app;
pub mod corpus;
pub mod model;
pub mod trainer;
pub mod error;
pub mod eval;
pub mod search;
pub mod tensor;
pub mod toy;

pub use error::{Error, Result};
