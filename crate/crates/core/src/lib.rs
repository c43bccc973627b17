//! Entity-level unlearning on a small from-scratch causal language model.

pub mod corpus;
pub mod error;
pub mod harness;
pub mod lm;
pub mod metrics;
pub mod probe;
pub mod rng;
pub mod text;
pub mod unlearn;

pub use error::{Error, Result};
