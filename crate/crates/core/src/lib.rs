//! Desk-scale CTC training and self-knowledge-distillation laboratory.

pub mod ctc;
pub mod data;
pub mod distill;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod nn;

pub use error::{Error, Result};
