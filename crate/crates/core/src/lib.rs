//! Patient-to-doctor matching with a hybrid implicit-feedback recommender.
//!
//! The pipeline runs `ingest` (episode records to an interaction log and
//! feature sets), `trust` (temporal trust weights), `model` (feature-sum
//! embeddings trained with a WARP ranking loss), `router` (use-case routing
//! for new and existing patients), `baseline` and `eval` (walk-forward
//! comparison of five variants). `cli` wires them behind a command line.

pub mod baseline;
pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod model;
pub mod router;
pub mod trust;

pub use error::{Error, Result};
