//! Hyperbolic sentence embeddings for textual entailment.
//!
//! Word vectors live in a Poincaré ball and are composed into sentence
//! vectors with Möbius addition. Models are trained per sample with
//! Riemannian SGD on the word embeddings and plain SGD on an optional
//! feed-forward classifier.

pub mod autodiff;
pub mod cli;
pub mod compose;
pub mod data;
pub mod embedding;
pub mod error;
pub mod geometry;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod treeparse;

pub use error::{Error, Result};
