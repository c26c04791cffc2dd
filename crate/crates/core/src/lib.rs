//! Identification of an unknown two-state Hamiltonian from a single
//! measurement basis.
//!
//! The pipeline is: simulate (or load) a record of ensemble-averaged
//! z-projections, locate the minimum-phase truncation of the record, read the
//! precession frequency, polar angle and measurement error off the DFT, and
//! propagate the spectral noise floor into one-sigma uncertainties. A second
//! axis is characterized relative to the first by rotating the initial state
//! onto the equator and measuring the azimuthal angle between the two axes.
//!
//! Units follow ħ = 1: Hamiltonian coefficients are energies, and the
//! precession frequency `ω = 2|h|` is in radians per time unit.

pub mod bloch;
pub mod error;
pub mod estimator;
pub mod measurement;
pub mod spectral;
pub mod uncertainty;

pub use bloch::{BlochVector, HamiltonianCoeffs, PolarHamiltonian};
pub use error::{Error, Result};
pub use estimator::{AxisEstimate, HamiltonianEstimate, PhaseEstimate};
pub use measurement::{MeasurementRecord, SamplingConfig};
pub use spectral::{MppResult, Spectrum};
pub use uncertainty::{DistanceReport, Estimate};
