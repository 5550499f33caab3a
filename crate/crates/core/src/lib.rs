//! Structural search over version-history hunks.

pub mod engine;
pub mod features;
pub mod grammar;
pub mod index;
pub mod ingestion;
pub mod matcher;
pub mod query;
