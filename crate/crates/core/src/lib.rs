//! Toolkit for molecular communication via diffusion (MCvD) over an
//! absorbing spherical receiver.
//!
//! The crate is organized around four stages of a study:
//!
//! - [`sim`]: particle-tracking Monte Carlo of messenger molecules doing
//!   Brownian motion in 3-D, producing per-slot arrival counts and empirical
//!   channel delay coefficients.
//! - [`model`]: the ISI-aware binomial channel model: delay coefficients,
//!   count distributions as binomial convolutions over the awareness window,
//!   and threshold demodulation probability tables.
//! - [`verify`]: Pearson chi-square goodness-of-fit of model tables against
//!   simulated transmissions, aggregated into good-fit-ratio grids.
//! - [`rate`]: achievable information rate of the resulting finite-state
//!   channel via exact conditional entropy and sample entropy-rate estimation
//!   with a forward state-sum recursion.
//!
//! All randomized computations are deterministic functions of an explicit
//! seed, independent of the number of worker threads.

pub mod config;
pub mod error;
pub mod io;
pub mod model;
pub mod rate;
pub mod rng;
pub mod sim;
pub mod verify;

pub use config::{ReleaseMode, SimulationConfig};
pub use error::{Error, Result};
pub use model::{ChannelCoefficients, DemodulationModel, Pmf, Provenance};
pub use rate::{InputDistribution, RateSurface};
pub use sim::{ArrivalHistogram, TransmissionTrace};
pub use verify::{FitGrid, GofResult};
