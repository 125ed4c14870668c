//! Experiment orchestration.

mod config;
mod pipeline;
mod store;
mod sweep;

pub use config::*;
pub use pipeline::*;
pub use store::*;
pub use sweep::*;
