//! File formats, command-line interface and HTTP service for the
//! `slicelens-core` engine.

pub mod api;
pub mod cache;
pub mod cli;
pub mod engine;
pub mod error;
pub mod ingest;
pub mod report;

pub use crate::engine::Engine;
pub use crate::error::{Error, Result};
