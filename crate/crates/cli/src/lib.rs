//! Batch pipeline, comparison reports and the live labelling server.

pub mod commands;
pub mod compare;
pub mod config;
pub mod pipeline;
pub mod protocol;
pub mod rates;
pub mod serve;

pub use commands::{run, Cli};
