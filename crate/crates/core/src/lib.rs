//! Unsupervised AUROC estimation and weighted aggregation of binary
//! classifiers from the moment structure of their rank predictions.
//!
//! Ranks follow the convention that rank 1 is the sample a method considers
//! most likely positive.

pub mod decomposition;
pub mod ensemble;
pub mod error;
pub mod inference;
pub mod moments;
pub mod pipeline;
pub mod ranking;
pub mod simulation;
pub mod stats;
pub mod sweep;

pub use error::{PartialRecovery, Result, SummaError};
