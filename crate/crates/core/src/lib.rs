//! LEAP: layered ensembles of denoising masked autoencoders and
//! perturbation-specific sparse linear regressors for predicting perturbation
//! responses (gene essentiality, drug response) from expression profiles.

pub mod bundle;
pub mod damae;
pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod evaluate;
pub mod nn;
pub mod pipeline;
pub mod preprocess;
pub mod regress;
pub mod seed;
pub mod stats;

pub use error::{LeapError, Result};
