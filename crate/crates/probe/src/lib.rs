//! Everything downstream of reasoning traces: per-token activation
//! storage, synthetic activations with planted structure, the five-token
//! correctness probe, and the per-layer abstraction profile.

pub mod abstraction;
pub mod classifier;
pub mod error;
pub mod store;
pub mod synth;

pub use error::{ProbeError, Result};
pub use store::{read_activations, write_activations, Activations, Sidecar};
