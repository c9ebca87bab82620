//! Ambiguity-free broadband direction-of-arrival estimation for sparse
//! uniform linear arrays.
//!
//! The chain runs from simulated LFM echoes ([`signal`]) through a
//! chirp-matched time-frequency transform ([`ptft`]), frequency-difference
//! processing ([`fd`]), sparse angular reconstruction ([`solver`],
//! [`estimators`]) to a coarse-to-fine histogram of per-frequency peaks
//! ([`histogram`]). [`pipeline`] wires the proposed method and its
//! baselines; [`experiments`] holds the Monte Carlo harness behind the CLI.

mod dft;
pub mod error;
pub mod estimators;
pub mod fd;
pub mod experiments;
pub mod histogram;
pub mod io;
pub mod pipeline;
pub mod ptft;
pub mod signal;
pub mod solver;

pub use error::{DoaError, Result};
