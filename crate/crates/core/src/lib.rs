//! Hyperspectral/PAN fusion core: data model, degradation, spectral
//! response, metrics and the two learned stages.

pub mod checkpoint;
pub mod container;
pub mod datamodel;
pub mod degrade;
pub mod dip;
pub mod error;
pub mod hyperkite;
pub mod layers;
pub mod metrics;
pub mod resample;
pub mod srf;

pub use datamodel::{validate_sample, FusionSample, HsiCube, PanImage};
pub use error::{CoreError, Result};
