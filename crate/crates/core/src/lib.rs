//! Semi-supervised network intrusion detection with a two-stage
//! autoencoder cascade.
//!
//! Flows are one-hot encoded and scaled ([`preprocess`]), then scored first by
//! the share of active hidden units in an over-complete sparse autoencoder
//! ([`detect`]). Flows whose score falls inside a calibrated band are passed to
//! a compressing autoencoder and judged by reconstruction error.

pub mod calibrate;
pub mod detect;
pub mod evaluate;
pub mod format;
pub mod ingest;
pub mod nn;
pub mod pipeline;
pub mod preprocess;
