//! Stage runner behind the `apz` command.
//!
//! A run directory holds line-delimited records (`puzzles.jsonl`,
//! `traces.jsonl`, `sidecars.jsonl`, `labels.jsonl`, `split.jsonl`, ...),
//! activation files under `activations/`, probe checkpoints under
//! `models/`, and `manifest.json`, which records for every stage run its
//! seeds, effective configuration and the SHA-256 of every file it read
//! or wrote. Stages refuse inputs whose digest differs from the one the
//! manifest recorded.

pub mod config;
pub mod error;
pub mod io;
pub mod manifest;
pub mod records;
pub mod stages;
pub mod validate;

pub use config::RunConfig;
pub use error::{CliError, Result};
pub use manifest::RunManifest;
pub use stages::{run_pipeline, run_stage, Context, Stage};
pub use validate::{validate_corpus, ValidationReport};
