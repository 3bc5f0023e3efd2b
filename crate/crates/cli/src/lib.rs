//! Command-line orchestration of the restoration-quality pipeline:
//! configuration, stages with provenance records, and synthetic fixtures.

pub mod config;
mod error;
pub mod fixture;
pub mod pipeline;

pub use config::PipelineConfig;
pub use error::CliError;
pub use fixture::{generate_fixture, Fixture, FixtureSpec};
pub use pipeline::{rerun, run_pipeline, run_stage, Layout, Stage, StageRecord};
