//! Synthetic preference worlds with known ground truth, and dataset splits.

pub mod dataset;
pub mod io;
pub mod world;

pub use dataset::{draw_point, generate, generate_with_offset, labeled_count, Dataset, LinearWorld};
pub use io::{read_dataset, write_dataset};
pub use world::{true_preference, Mode, WorldSpec};
