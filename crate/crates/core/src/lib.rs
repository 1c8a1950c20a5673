//! Simulation and analysis toolkit for two-wavelength polarization-entangled
//! photon-pair polarimetry of chiral solutions.
//!
//! The crate is organised bottom-up:
//!
//! - [`pair_state`]: two-photon polarization states in the circular basis,
//!   the optical-activity unitary and projection onto the H/V basis.
//! - [`chiral_sample`]: Drude-type rotatory dispersion, rotation angles and
//!   energy-conserving wavelength pairs.
//! - [`measurement`]: coincidence probabilities for the entangled schemes and
//!   the classical single-photon benchmark.
//! - [`info_metrics`]: Fisher information, quantum Fisher information and
//!   Cramér–Rao bounds.
//! - [`estimation`]: calibration fitting, phase inversion and differential
//!   rotation extraction.
//! - [`protocol`]: seeded Poisson Monte Carlo of the acquisition protocol.
//! - [`config`] and [`io`]: configuration and file formats used by the CLI.

pub mod chiral_sample;
pub mod config;
pub mod error;
pub mod estimation;
pub mod info_metrics;
pub mod io;
pub mod measurement;
pub mod pair_state;
pub mod protocol;

pub use error::{Error, Result};
pub use measurement::Scheme;

/// Degrees to radians.
#[inline]
pub fn deg_to_rad(deg: f64) -> f64 {
    deg.to_radians()
}

/// Radians to degrees.
#[inline]
pub fn rad_to_deg(rad: f64) -> f64 {
    rad.to_degrees()
}
