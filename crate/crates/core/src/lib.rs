//! Fairness-aware secure beamforming and artificial-noise design for
//! multi-user integrated sensing and communication.
//!
//! A base station with `n_tx` antennas serves `K` single-antenna users while
//! illuminating `J` radar targets that may eavesdrop. The crate provides:
//!
//! - problem instances and seeded channel draws ([`scenario`]),
//! - the null-space projector that keeps artificial noise away from users ([`nullspace`]),
//! - rate, secrecy, fairness and beam-gain metrics ([`metrics`]) and constraint margins ([`feasibility`]),
//! - the entropy-regularized fairness/rate weight optimizer ([`fairness`]),
//! - the inverse-free quadratic-transform updates for beams ([`beamform_qt`]) and noise ([`an_qt`]),
//! - the alternating driver ([`solver`]) and the Monte Carlo harness ([`sim`]).

pub mod an_qt;
pub mod beamform_qt;
pub mod error;
pub mod fairness;
pub mod feasibility;
pub mod linalg;
pub mod metrics;
pub mod nullspace;
pub mod plot;
pub mod scenario;
pub mod sim;
pub mod solver;

pub use error::{IsacError, Result};
pub use linalg::{CMat, CVec};
pub use metrics::{RateReport, Solution};
pub use scenario::{Scenario, SystemConfig};
