//! Named experiments binding scenarios, measure changes and tests.

mod artifact;
mod catalog;
mod config;
mod experiments;

pub use artifact::{format_real, RunArtifact};
pub use catalog::{list_experiments, CatalogEntry};
pub use config::{ExperimentConfig, ExperimentId, OutputFormat};
pub use experiments::run;
