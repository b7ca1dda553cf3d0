//! Selective masked-language-model pre-training for text simplification.
//!
//! The crate covers the whole desk-scale workflow: corpus preparation,
//! simple/complex word identification, selective masking, a small
//! bidirectional transformer trained with an MLM objective, lexical
//! simplification on top of the MLM, an encoder-decoder sentence
//! simplifier whose encoder is initialized from an MLM checkpoint, and
//! the evaluation measures used to compare models.

pub mod checkpoint;
pub mod corpus;
pub mod error;
pub mod identify;
pub mod lexsimp;
pub mod masking;
pub mod metrics;
pub mod mlm;
pub mod nn;
pub mod seed;
pub mod sentsimp;
pub mod synth;
pub mod text;

pub use error::{Error, Result};
