//! Occasion-graph builders for the two concrete systems: Game of Life and
//! (coupled) Hopfield networks.

pub mod gol;
pub mod hopfield;

pub use gol::{parse_cells, Boundary, GolSpec, GLIDER_SE};
pub use hopfield::{hebbian_weights, CoupledHopfieldSpec, HopfieldSpec};
