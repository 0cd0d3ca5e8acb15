pub mod acceptance;
pub mod cox;
pub mod engine;
pub mod error;
pub mod levels;
pub mod oracle;
pub mod rng;
pub mod runner;
pub mod stats;
pub mod variants;

pub use error::{Error, Result};
