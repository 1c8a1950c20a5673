//! Differential extraction of rotations from a blank and a sample run.

use serde::{Deserialize, Serialize};

use super::theta::{estimate_theta_near, ThetaEstimate};
use super::CoincidenceSet;
use crate::chiral_sample::RotationPair;
use crate::error::{Error, Result};
use crate::info_metrics::{crb_sigma, fi_for_parameter, fringe_fisher_information, Parameter};
use crate::measurement::Scheme;

/// Optimal analyzer offset of the classical benchmark (half fringe).
const CLASSICAL_OPTIMAL_OFFSET: f64 = std::f64::consts::FRAC_PI_2;

/// Rotation estimate for one blank/sample pair. Angles in radians.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub scheme: Scheme,
    pub parameter: Parameter,
    pub value: f64,
    /// Standard error of the mean of the per-bin sample estimates.
    pub std_error: f64,
    /// Per-bin standard errors of sample and reference in quadrature.
    pub std_error_combined: f64,
    /// Detected pairs in the sample run.
    pub n_pairs: u64,
    pub n_pairs_reference: u64,
    /// Fisher information per pair about `parameter`, rad⁻².
    pub fi_used: f64,
    /// `1/sqrt(n_pairs·fi_used)`
    pub crb_sigma: f64,
    pub ratio_to_classical_crb: f64,
    pub theta_reference: ThetaEstimate,
    pub theta_sample: ThetaEstimate,
    pub per_bin: Vec<f64>,
    pub sample_label: String,
    pub lambda1_nm: f64,
    pub lambda2_nm: f64,
    pub bias_phase_rad: f64,
    pub visibility: f64,
}

impl Estimate {
    pub fn value_deg(&self) -> f64 {
        self.value.to_degrees()
    }

    pub fn std_error_deg(&self) -> f64 {
        self.std_error.to_degrees()
    }

    pub fn record(&self) -> EstimateRecord {
        EstimateRecord {
            scheme: self.scheme,
            parameter: self.parameter,
            sample_label: self.sample_label.clone(),
            lambda1_nm: self.lambda1_nm,
            lambda2_nm: self.lambda2_nm,
            bias_phase_rad: self.bias_phase_rad,
            visibility: self.visibility,
            value_rad: self.value,
            value_deg: self.value.to_degrees(),
            std_error_rad: self.std_error,
            std_error_deg: self.std_error.to_degrees(),
            std_error_combined_rad: self.std_error_combined,
            n_pairs: self.n_pairs,
            n_pairs_reference: self.n_pairs_reference,
            n_bins: self.per_bin.len(),
            fi_used_per_rad2: self.fi_used,
            crb_sigma_rad: self.crb_sigma,
            crb_sigma_deg: self.crb_sigma.to_degrees(),
            ratio_to_classical_crb: self.ratio_to_classical_crb,
            theta_reference_rad: self.theta_reference.theta,
            theta_sample_rad: self.theta_sample.theta,
            visibility_inconsistent: self.theta_reference.visibility_inconsistent
                || self.theta_sample.visibility_inconsistent,
        }
    }
}

/// Flat serialized form of an [`Estimate`], one JSON object per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub scheme: Scheme,
    pub parameter: Parameter,
    pub sample_label: String,
    pub lambda1_nm: f64,
    pub lambda2_nm: f64,
    pub bias_phase_rad: f64,
    pub visibility: f64,
    pub value_rad: f64,
    pub value_deg: f64,
    pub std_error_rad: f64,
    pub std_error_deg: f64,
    pub std_error_combined_rad: f64,
    pub n_pairs: u64,
    pub n_pairs_reference: u64,
    pub n_bins: usize,
    pub fi_used_per_rad2: f64,
    pub crb_sigma_rad: f64,
    pub crb_sigma_deg: f64,
    pub ratio_to_classical_crb: f64,
    pub theta_reference_rad: f64,
    pub theta_sample_rad: f64,
    pub visibility_inconsistent: bool,
}

/// `dθ/d(parameter)` for the scheme.
fn theta_slope(scheme: Scheme) -> Result<(Parameter, f64)> {
    match scheme {
        Scheme::PhiQuantum => Ok((Parameter::MeanRotation, -4.0)),
        Scheme::PsiQuantum => Ok((Parameter::DifferenceRotation, 2.0)),
        Scheme::ClassicalPair => Err(Error::InvalidScheme {
            scheme,
            operation: "differential fringe extraction",
        }),
    }
}

fn mean_and_sem(values: &[f64]) -> Option<(f64, f64)> {
    if values.len() < 2 {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, (var / n).sqrt()))
}

/// Per-bin θ̂ values, skipping empty bins.
fn per_bin_thetas(set: &CoincidenceSet, visibility: f64, reference: f64) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(set.n_bins());
    for bin in set.bins() {
        if bin.iter().sum::<u64>() == 0 {
            continue;
        }
        out.push(estimate_theta_near(bin, visibility, reference)?.theta);
    }
    Ok(out)
}

/// Extracts ᾱ (Φ scheme) or Δα (Ψ scheme) from a blank reference run and a
/// sample run taken with the same scheme, bias and wavelengths.
///
/// The point value comes from the pooled counts of both runs. The headline
/// standard error is the standard error of the mean of per-bin sample
/// estimates taken relative to the pooled reference phase; the reference
/// run is treated as the zero-rotation offset.
pub fn extract_rotation(reference: &CoincidenceSet, sample: &CoincidenceSet, visibility: f64) -> Result<Estimate> {
    let meta = sample.metadata();
    reference.metadata().check_compatible(meta)?;
    let (parameter, slope) = theta_slope(meta.scheme)?;
    let bias = meta.bias_phase_rad;

    let theta_ref = estimate_theta_near(&reference.totals(), visibility, bias)?;
    let theta_s = estimate_theta_near(&sample.totals(), visibility, bias)?;
    let value = (theta_s.theta - theta_ref.theta) / slope;

    let per_bin: Vec<f64> = per_bin_thetas(sample, visibility, bias)?
        .into_iter()
        .map(|t| (t - theta_ref.theta) / slope)
        .collect();
    let ref_bins: Vec<f64> = per_bin_thetas(reference, visibility, bias)?
        .into_iter()
        .map(|t| t / slope)
        .collect();

    let fi_theta = fringe_fisher_information(visibility, theta_s.theta);
    let fi_used = slope * slope * fi_theta;
    let n_pairs = theta_s.n_pairs;
    let crb = crb_sigma(fi_used, n_pairs as f64);

    let std_error = match mean_and_sem(&per_bin) {
        Some((_, sem)) if sem > 0.0 => sem,
        _ => crb,
    };
    let ref_sem = match mean_and_sem(&ref_bins) {
        Some((_, sem)) if sem > 0.0 => sem,
        _ => crb_sigma(slope * slope * fringe_fisher_information(visibility, theta_ref.theta), theta_ref.n_pairs as f64),
    };

    let mut estimate = Estimate {
        scheme: meta.scheme,
        parameter,
        value,
        std_error,
        std_error_combined: std_error.hypot(ref_sem),
        n_pairs,
        n_pairs_reference: theta_ref.n_pairs,
        fi_used,
        crb_sigma: crb,
        ratio_to_classical_crb: f64::NAN,
        theta_reference: theta_ref,
        theta_sample: theta_s,
        per_bin,
        sample_label: meta.sample_label.clone(),
        lambda1_nm: meta.lambda1_nm,
        lambda2_nm: meta.lambda2_nm,
        bias_phase_rad: bias,
        visibility,
    };
    estimate.ratio_to_classical_crb = compare_to_classical_crb(&estimate, n_pairs)?;
    Ok(estimate)
}

/// Standard error divided by the ideal classical Cramér–Rao bound for the
/// same number of pairs, `std_error·sqrt(n·FI_classical)`.
pub fn compare_to_classical_crb(estimate: &Estimate, n_pairs: u64) -> Result<f64> {
    if n_pairs == 0 {
        return Err(Error::Input("classical bound needs at least one pair".into()));
    }
    let classical = fi_for_parameter(
        Scheme::ClassicalPair,
        estimate.parameter,
        CLASSICAL_OPTIMAL_OFFSET,
        1.0,
        RotationPair::from_individual(0.0, 0.0),
    )?;
    Ok(estimate.std_error / classical.crb_sigma(n_pairs as f64))
}
