pub mod cli;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod index;
pub mod manifest;
pub mod pipeline;
pub mod protocol;
pub mod providers;
pub mod rerank;
pub mod server;

pub use error::{Error, ProviderError, Result, Warning};
