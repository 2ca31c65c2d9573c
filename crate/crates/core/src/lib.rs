//! Short-arc asteroid hazard assessment by systematic ranging.

pub mod config;
pub mod constants;
pub mod error;
pub mod admissible_region;
pub mod attributable;
pub mod frames;
pub mod montecarlo;
pub mod mov;
pub mod obs;
pub mod pipeline;
pub mod probability;
pub mod propagation;
pub mod sampling;
pub mod scenario;

pub use error::{Error, Result};
