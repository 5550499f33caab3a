//! Command-line and HTTP front ends for the search engine.

pub mod api;
pub mod server;
