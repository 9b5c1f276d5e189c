//! Q-function spectral analysis of coupled stochastic oscillators.
//!
//! The crate computes the slowest-decaying eigenmodes of the backward
//! (stochastic Koopman) operator for four model systems, detects the
//! coalescence of the leading eigenvalue pair that marks Q-synchronization,
//! and estimates power and cross spectra from simulated trajectories.
//!
//! Module map:
//!
//! * [`spectral_core`]: dense eigensolver, left/right pairing, branch tracking.
//! * [`models`]: model definitions, exact generators and eigenvalues.
//! * [`perturbation`]: first-order perturbation matrix, splitting, KT boundary.
//! * [`cf_solver`]: Fourier-Galerkin and continued-fraction solver for ring models.
//! * [`simulate`]: Euler–Maruyama and Gillespie trajectories, Q-series.
//! * [`spectra`]: Lorentzian and two-pole spectra, gauge alignment, Welch estimates.
//! * [`tongue`]: synchronization classification and Arnold-tongue sweeps.
//! * [`discrete_phase`]: projected phase locking for the nine-state model.

pub mod cf_solver;
pub mod descriptor;
pub mod discrete_phase;
pub mod error;
pub mod models;
pub mod perturbation;
pub mod simulate;
pub mod spectra;
pub mod spectral_core;
pub mod tongue;

pub use error::{Error, Result};
pub use spectral_core::{c, CMat, ComplexEigenpair, Label, C64};
