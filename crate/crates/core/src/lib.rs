pub mod error;
pub mod image;
pub mod manifest;
pub mod metrics;
pub mod plot;
pub mod predictor;
pub mod reliance;
pub mod stats;
pub mod synth;
pub mod transforms;

pub use error::{Error, Result};
