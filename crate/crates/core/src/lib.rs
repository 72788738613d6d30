//! Synthetic generation of metadata-conditioned, variable-length time series
//! with a decoupled GAN (metadata MLP, min/max MLP, batched LSTM measurement
//! generator, full and metadata-only Wasserstein critics), together with
//! baselines and a fidelity/privacy evaluation suite.

pub mod baselines;
pub mod corpus;
pub mod downstream;
pub mod error;
pub mod fidelity;
pub mod generation;
pub mod model;
pub mod plot;
pub mod preprocess;
pub mod privacy;
pub mod schema;
pub mod training;

pub use error::{Error, Result};
pub use netsynth_nn::Matrix;
