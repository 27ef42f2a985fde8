//! Streaming sequence memory built on sparse distributed representations.
//!
//! The crate is organised bottom-up:
//!
//! * [`sdr`] holds the sparse bit-vector value type and its set kernels.
//! * [`encoders`] turns symbols, scalars and timestamps into SDRs, and pools
//!   concatenated inputs into a fixed column SDR.
//! * [`tm`] is the temporal memory: columns of cells with distal dendritic
//!   segments, learned online with Hebbian permanence updates.
//! * [`classifiers`] decodes network state into symbol or bucket predictions.
//! * [`metrics`] implements MAPE, sequence negative log-likelihood and moving
//!   accuracy.
//! * [`tasklab`] generates the high-order sequence streams and runs every
//!   experiment protocol; [`taxi`] covers the scalar demand-prediction task.
//!
//! Data-parallel loops (pooler scoring, replica sweeps, Monte-Carlo checks)
//! go through [`exec`], which uses rayon when the `parallel` feature is
//! enabled and plain iterators otherwise.

pub mod classifiers;
pub mod config;
pub mod encoders;
pub mod error;
pub mod exec;
pub mod metrics;
pub mod rng;
pub mod sdr;
pub mod symbol;
pub mod tasklab;
pub mod taxi;
pub mod tm;

pub use error::{Error, Result};
pub use sdr::Sdr;
pub use symbol::Symbol;
