//! File formats, CSV ingestion and the `alphamine` command line on top of
//! `alphamine-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod report;

pub use error::Error;
