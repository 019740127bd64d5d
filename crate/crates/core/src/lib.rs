pub mod annotate;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod experiment;
pub mod model;
pub mod tokenizer;

pub use error::{Error, Result};
