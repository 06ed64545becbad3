//! k-modes clustering for categorical data.
//!
//! The crate is organised bottom-up:
//!
//! - [`dataset`]: delimited-text ingestion and integer category encoding.
//! - [`state`]: the incremental cluster state (counts, modes, minor modes, objective).
//! - [`movecost`]: exact membership, join and move costs over a state.
//! - [`algorithms`]: Huang's reallocation algorithm (`H97`), optimal transfer (`OT`)
//!   and optimal transfer with quick transfer (`OTQT`), plus seeded batch execution.
//! - [`simgen`]: synthetic data from a nested equal-rate Markov chain.
//! - [`eval`]: adjusted Rand index, target minima and paired algorithm comparisons.
//!
//! All objective arithmetic is done on exact integers.

pub mod algorithms;
pub mod dataset;
pub mod eval;
pub mod movecost;
pub mod simgen;
pub mod state;

pub use algorithms::{Algorithm, Fit, RunResult};
pub use dataset::{Code, Dataset, ParseOptions};
pub use state::{ClusterState, Mode};
