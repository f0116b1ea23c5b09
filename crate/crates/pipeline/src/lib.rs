//! Staged experiment runner for hyperspectral pansharpening: scene
//! preparation, DIP upsampling, residual network training, fusion, metrics,
//! lambda sweeps and report emission, all recorded with content hashes.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod provenance;
pub mod report;
pub mod stages;
pub mod toy;

pub use config::ExperimentConfig;
pub use error::{PipelineError, Result};
pub use stages::{Experiment, Layout, Manifest, Outcome, RunOptions, Stage};
