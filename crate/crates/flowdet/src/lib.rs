//! CNN-BiLSTM anomaly detection for NetFlow traffic.
//!
//! The pipeline: parse flow CSVs ([`ingest`]), normalize features and
//! reconstruct fixed-length time windows ([`preprocess`]), score windows
//! with a convolutional + bidirectional-LSTM network built on hand-rolled,
//! gradient-checked layer primitives ([`nn`], [`model`]), and train with
//! class-weighted cross-entropy, Adam, and validation-driven threshold
//! tuning ([`train`]). The `flowdet` binary wires it all into `train`,
//! `evaluate` and `predict` commands ([`cli`]).

pub mod cli;
pub mod config;
pub mod error;
pub mod ingest;
pub mod model;
pub mod nn;
pub mod preprocess;
pub mod synth;
pub mod train;
mod util;

pub use error::{Error, Result};
