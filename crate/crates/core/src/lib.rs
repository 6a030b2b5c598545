pub mod analysis;
pub mod cli;
pub mod corpus;
pub mod decoding;
pub mod error;
pub mod experiments;
pub mod methods;
pub mod metrics;
pub mod model;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
