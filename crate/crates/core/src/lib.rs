//! Simulation library for short-reach PAM-4 intensity-modulation links with
//! optical dispersion equalization ahead of direct detection.

pub mod analysis;
pub mod config;
pub mod emit;
pub mod equalizer;
pub mod error;
mod fft;
pub mod fiber;
pub mod figures;
pub mod link;
pub mod optical;
pub mod receiver;
pub mod signal;
pub mod sweep;
pub mod tx;

pub use config::{LinkConfig, Settings};
pub use error::{Error, Result};
pub use link::run_link;
