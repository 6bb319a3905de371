//! Evidential dynamic occupancy grid maps (DOGMas) from LiDAR point clouds.
//!
//! The crate turns point clouds into Dempster–Shafer measurement grids,
//! fuses them over time, estimates per-cell velocities with a grid particle
//! filter and evaluates short-horizon occupancy prediction baselines. A
//! planar scene simulator supplies point clouds with exact ground truth.

pub mod egrid;
pub mod evidential;
pub mod filter;
pub mod measurement;
pub mod pipeline;
pub mod predict;
pub mod sim;

pub use evidential::{
    combine, discount, fuse_grid, pignistic, vacuous_grid, EvidentialGrid, GridError, GridSpec,
    MassCell,
};
pub use filter::{run_filter, DogmaFilter, DogmaFrame, DogmaMode, FilterConfig};
pub use pipeline::PipelineConfig;
