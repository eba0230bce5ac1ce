//! Study runner around `vsn-core`: corpus ingestion, feature extraction,
//! model training, evaluation, explanations and plot data.

pub mod commands;
pub mod config;
pub mod container;
pub mod error;
pub mod features;
pub mod fixtures;
pub mod formats;
pub mod models;
pub mod output;

pub use error::{PipelineError, Result};
