//! Topic label generation from distant supervision.
//!
//! The crate covers the whole pipeline: reading title/body corpora and
//! turning them into (topic terms, label) pairs, a from-scratch bidirectional
//! GRU encoder with an additive-attention GRU decoder, greedy label decoding,
//! and an embedding-based greedy-match scorer for generated labels.

pub mod corpus;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod testdata;
pub mod tfidf;

pub use error::{Error, Result};
