//! Error-slice discovery for text classifiers.
//!
//! The crate is `no_std` (it needs `alloc`) and contains every algorithm of
//! the engine: corpus validation, n-gram features, forest-filtered rule
//! discovery with significance testing, attribution aggregation, subpopulation
//! analysis and 2D projection. File formats, the CLI and the HTTP service live
//! in the `slicelens` crate.
#![no_std]

extern crate alloc;

pub mod analysis;
pub mod attribution;
pub mod bitset;
pub mod corpus;
pub mod discovery;
mod error;
pub mod features;
pub mod forest;
pub mod projection;
pub mod rule;
pub mod stats;
#[cfg(feature = "testkit")]
pub mod testkit;
pub mod text;

pub use crate::analysis::{AnalysisContext, Concept, ConceptRegistry, ConceptSummary};
pub use crate::bitset::DocSet;
pub use crate::corpus::{Attribution, DatasetStore, DocumentRecord, Split};
pub use crate::discovery::{discover, DiscoveryConfig, MinErrorRate, RuleSet};
pub use crate::error::{Error, Result};
pub use crate::features::Bucket;
pub use crate::rule::{Condition, Rule, RuleMetrics};
