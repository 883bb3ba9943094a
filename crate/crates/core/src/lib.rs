//! Monte Carlo laboratory for random times of Brownian paths: last-passage
//! detectors, Azéma supermartingales and their decompositions, density changes
//! up to and after a random time, and the weighted statistics that check them.

pub mod azema;
pub mod error;
pub mod lab;
pub mod measure_change;
pub mod numerics;
pub mod path_engine;
pub mod random_times;

pub use error::{LabError, Result};
