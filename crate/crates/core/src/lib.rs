//! Tanh reservoir computer with fading-memory statistics.
//!
//! The crate is organised bottom-up:
//!
//! - [`signals`]: Lorenz/Rössler integration, NARMA sequences, noise, sine probes
//!   and autocorrelation.
//! - [`reservoir`]: adjacency construction and the tanh, delay-line and linear
//!   reservoir maps.
//! - [`readout`]: feature matrices, ridge readout and normalized errors.
//! - [`memory`]: memory capacity, norm of the variation, delay capacity and the
//!   nonlinear index.
//! - [`lyapunov`]: Gram-Schmidt estimation of the largest Lyapunov exponents.
//! - [`netstats`]: breadth-first path statistics and spectral-radius calibration.
//! - [`harness`]: seeded parameter sweeps, presets and CSV/JSON reports.

pub mod error;
pub mod harness;
pub mod lyapunov;
pub mod memory;
pub mod netstats;
pub mod readout;
pub mod reservoir;
pub mod seeding;
pub mod signals;

pub use error::{Error, Result};
pub use reservoir::{AdjacencyMatrix, NodeKind, ReservoirConfig, StateTrajectory};
pub use signals::TimeSeries;
