//! Iso-surface extraction: marching cubes over dense or hierarchically
//! refined occupancy grids.

mod grid;
mod marching;
mod reconstruct;
pub mod tables;

pub use grid::{
    evaluate_hierarchical, load_grid, save_grid, GridLevel, MultiResGrid, ScalarField,
};
pub use marching::{marching_cubes, DenseGrid};
pub use reconstruct::{reconstruct, reconstruct_grid, OccupancyField, ReconstructOptions};
