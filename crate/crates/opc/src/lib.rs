//! Linear surrogate models, with and without memory, for the averaged
//! dynamics of partially observed systems.
//!
//! The crate is built around one workflow: measure a single trajectory of a
//! high-dimensional system, keep only the resolved coordinates, and fit a
//! discrete-time linear model that predicts the *ensemble average* of those
//! coordinates over random unresolved initial data. Plain DMDc ([`baselines`])
//! reproduces the measured trajectory itself; the memory-corrected variant
//! ([`fit`], [`generate`]) augments the one-step map with a Mori-Zwanzig
//! style convolution term so that the fitted operator can be dissipative even
//! though the data are not.
//!
//! Modules:
//!
//! - [`dynamics`]: test systems and a fixed-step RK4 integrator.
//! - [`snapshots`]: snapshot matrices extracted from a measured trajectory.
//! - [`ensemble`]: Monte Carlo ensemble averages over unresolved initial data.
//! - [`baselines`]: least squares, DMD, and DMDc reference models.
//! - [`expm`]: dense matrix exponential and its directional derivative.
//! - [`memory`]: the discrete memory operator and its column recurrence.
//! - [`objective`]: memory-corrected regression objectives and exact gradients.
//! - [`fit`]: Adam-based fitting of the memory-corrected models.
//! - [`generate`]: averaged-trajectory generation from a fitted model.

pub mod baselines;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod expm;
pub mod fit;
pub mod generate;
pub mod memory;
pub mod objective;
pub mod snapshots;

pub use error::OpcError;
