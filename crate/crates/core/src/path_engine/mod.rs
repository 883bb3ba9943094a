//! Seeded Brownian path generation and pathwise functionals.
//!
//! Paths live on a uniform [`TimeGrid`]; the heavy-tailed scenario samplers may
//! append an irregular tail (jumped negative excursions, Brownian-scaled steps)
//! after the stored window, in which case the path carries explicit times.

mod ensemble;
mod grid;
mod path;
mod rng;
mod sampler;

pub use ensemble::{map_collect, map_reduce, CHUNK_SIZE};
pub use grid::TimeGrid;
pub use path::{crossed, Gap, SamplePath, ZeroTouch};
pub use rng::{PathRng, RngStream};
pub use sampler::{
    sample_absorbed, sample_bm, sample_to_level_one, sample_to_level_one_coupled, RunConfig,
};
