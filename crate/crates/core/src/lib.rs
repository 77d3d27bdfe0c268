//! Simulation and learning toolkit for reconfigurable-surface-assisted
//! multi-antenna links.
//!
//! The crate covers the full experiment pipeline: complex channel generation
//! and spectral-efficiency physics, a masked channel embedder built on a small
//! transformer, a continuous-control agent that tunes precoders and surface
//! phases, and codebook baselines to compare against. All networks use
//! hand-written forward/backward passes over `f64` buffers, so results are
//! bit-reproducible for a fixed seed.

pub mod baselines;
pub mod channel;
pub mod ddpg;
pub mod env;
pub mod error;
pub mod lwm;
pub mod nn;
mod wire;

pub use error::{Error, Result};
