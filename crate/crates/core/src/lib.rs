pub mod agent;
pub mod autoencoder;
mod error;
pub mod gan;
pub mod geometry;
pub mod nn;
pub mod pipeline;
pub mod seed;

pub use error::{Error, Result};
