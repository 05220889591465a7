// Index-driven loops over parallel numeric tables read better here than
// zipped iterators; the indices are shared across several arrays at once.
#![allow(clippy::needless_range_loop)]

//! Multi-scale probabilistic cellular automata.
//!
//! The crate represents automata as directed graphs of *occasions* (a cell
//! at a tic), each carrying a finite alphabet and a Markov mechanism.
//! Inputs are causal interventions; every computation is exact enumeration,
//! never sampling. On top of the base layer sit:
//!
//! * [`grain`] — coarse-graining a subsystem into units via a
//!   ground/channel/unit partition, with effective graphs and
//!   macro-alphabets,
//! * [`info`] — actual repertoires, effective information, excess
//!   information and the minimum-information partition,
//! * [`emergence`] — relative excess information and the E1/E2 emergence
//!   conditions over candidate graining families,
//! * [`models`] — Game-of-Life and Hopfield graph builders,
//! * [`harness`] — scenario files and the experiment presets.

pub mod alphabet;
pub mod compile;
pub mod emergence;
pub mod error;
pub mod grain;
pub mod graph;
pub mod harness;
pub mod info;
pub mod mechanism;
pub mod models;
pub mod occasion;
pub mod submech;

pub use alphabet::Radix;
pub use error::{Error, Result};
pub use graph::{Assignment, Occasion, OccasionGraph, Subsystem};
pub use mechanism::{Mechanism, MechanismKind};
pub use occasion::{OccasionId, Site};
