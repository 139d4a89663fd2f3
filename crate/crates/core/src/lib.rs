//! Temporal visual prompting over frozen frame and text embeddings.
//!
//! The crate trains a small set of prompt-side parameters (a temporal
//! convolution encoder, a fusion projection, a bottleneck adapter, a text
//! prompt offset and a temperature) on top of frozen encoder outputs, and
//! evaluates them under zero-shot, generalized zero-shot, few-shot,
//! base-to-novel and disjoint-split protocols.

#[cfg(feature = "cli")]
pub mod cli;
pub mod binio;
pub mod datakit;
pub mod error;
pub mod evalkit;
pub mod model;
pub mod ndmath;
pub mod objective;
pub mod seed;
pub mod theorylab;
pub mod training;

pub use error::{Error, Result};
