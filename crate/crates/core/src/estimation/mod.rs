//! From coincidence counts to phases and rotations.
//!
//! - [`calibration`]: Poisson-weighted sinusoid fits of coincidence counts
//!   against the bias phase.
//! - [`theta`]: closed-form maximum-likelihood inversion of the fringe.
//! - [`rotation`]: blank-versus-sample extraction of the mean rotation or
//!   the rotation difference, with per-bin statistics and the classical
//!   Cramér–Rao comparison.

pub mod calibration;
pub mod rotation;
pub mod theta;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::Scheme;

pub use calibration::{fit_calibration, fit_calibration_points, recorded_bias_phase, CalibrationCurve, CalibrationPoint, ChannelFit, HwpMapping};
pub use rotation::{compare_to_classical_crb, extract_rotation, Estimate, EstimateRecord};
pub use theta::{estimate_theta, estimate_theta_near, ThetaEstimate, CONTRAST_TOLERANCE};

/// Counts of one acquisition bin in the order `(HH, HV, VH, VV)`.
pub type BinCounts = [u64; 4];

/// Acquisition settings that travel with a set of counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunMetadata {
    pub scheme: Scheme,
    pub bias_phase_rad: f64,
    pub visibility: f64,
    pub lambda1_nm: f64,
    pub lambda2_nm: f64,
    pub sample_label: String,
    pub bin_duration_s: f64,
    /// Half-waveplate angle used to set the bias, when recorded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hwp_angle_deg: Option<f64>,
}

impl RunMetadata {
    /// Checks that two runs can be differenced: same scheme, bias and
    /// wavelengths.
    pub fn check_compatible(&self, other: &RunMetadata) -> Result<()> {
        if self.scheme != other.scheme {
            return Err(Error::Input(format!(
                "scheme mismatch: {} vs {}",
                self.scheme, other.scheme
            )));
        }
        if (self.bias_phase_rad - other.bias_phase_rad).abs() > 1e-12 {
            return Err(Error::Input(format!(
                "bias phase mismatch: {} vs {} rad",
                self.bias_phase_rad, other.bias_phase_rad
            )));
        }
        for (name, a, b) in [
            ("lambda1_nm", self.lambda1_nm, other.lambda1_nm),
            ("lambda2_nm", self.lambda2_nm, other.lambda2_nm),
        ] {
            if (a - b).abs() > 1e-9 * a.abs().max(1.0) {
                return Err(Error::Input(format!("wavelength mismatch in {name}: {a} vs {b}")));
            }
        }
        Ok(())
    }
}

/// Time series of coincidence counts with its acquisition metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceSet {
    bins: Vec<BinCounts>,
    metadata: RunMetadata,
}

impl CoincidenceSet {
    pub fn new(bins: Vec<BinCounts>, metadata: RunMetadata) -> Result<Self> {
        if bins.is_empty() {
            return Err(Error::Input("coincidence set has no bins".into()));
        }
        if !(metadata.bin_duration_s > 0.0) {
            return Err(Error::Input(format!(
                "bin duration must be positive, got {}",
                metadata.bin_duration_s
            )));
        }
        Ok(Self { bins, metadata })
    }

    pub fn bins(&self) -> &[BinCounts] {
        &self.bins
    }

    pub fn metadata(&self) -> &RunMetadata {
        &self.metadata
    }

    pub fn n_bins(&self) -> usize {
        self.bins.len()
    }

    /// Total acquisition time in seconds.
    pub fn exposure_s(&self) -> f64 {
        self.bins.len() as f64 * self.metadata.bin_duration_s
    }

    /// Per-channel totals over all bins.
    pub fn totals(&self) -> BinCounts {
        self.bins.iter().fold([0; 4], |mut acc, b| {
            for (a, x) in acc.iter_mut().zip(b) {
                *a += x;
            }
            acc
        })
    }

    /// Total number of detected pairs.
    pub fn n_pairs(&self) -> u64 {
        self.totals().iter().sum()
    }
}
