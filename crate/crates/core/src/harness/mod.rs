//! Experiment presets and scenario-file plumbing: the reproducible sweeps
//! behind the published figures (focal point, macro-alphabet vs distance,
//! spatial chunking) and transition table, plus a versioned JSON scenario
//! format for driving the measures from the command line.
//!
//! Every preset is deterministic given its configuration: sweeps fan out
//! over a worker pool but results are ordered by input position, so CSV
//! output is byte-stable across runs and thread counts.

pub mod bitboard;
pub mod chunking;
pub mod focal;
pub mod hopfield;
pub mod scenario;
pub mod texture;

pub use bitboard::{unit_pair_mechanism, Bitboard};
pub use chunking::{chunking_csv, placements_csv, run_chunking, ChunkingReport};
pub use focal::{focal_csv, run_focal_point, FocalPointConfig, FocalPointResult};
pub use hopfield::{
    calibration_csv, hopfield_csv, run_hopfield_calibration, run_hopfield_table, CalibrationEntry,
    HopfieldTable,
};
pub use scenario::{parse_scenario, resolve, run_measures, translation_family, Scenario};
pub use texture::{macro_alphabet_csv, run_macro_alphabet, MacroAlphabetConfig};
