//! Per-channel dispersion of bin counts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::CoincidenceSet;
use crate::measurement::CHANNELS;

/// Fewer bins make the variance estimate too noisy to be useful.
pub const MIN_BINS: usize = 30;

/// Number of sampling standard deviations used by the flags.
pub const FANO_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelNoise {
    pub channel: String,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    pub fano: f64,
    /// Sampling standard deviation of the Fano factor for Poisson counts
    /// with the observed mean.
    pub fano_sigma: f64,
    pub overdispersed: bool,
    pub consistent_with_poisson: bool,
}

/// Mean, variance and Fano factor of each channel across bins.
///
/// For Poisson counts with mean λ over n bins the sample variance has
/// variance `λ/n + 2λ²/(n-1)`, which gives the Fano-factor sigma
/// `sqrt(2/(n-1) + 1/(nλ))`.
pub fn noise_diagnostics(set: &CoincidenceSet) -> Result<Vec<ChannelNoise>> {
    let n = set.n_bins();
    if n < MIN_BINS {
        return Err(Error::Input(format!("noise diagnostics need at least {MIN_BINS} bins, got {n}")));
    }
    let nf = n as f64;
    Ok(CHANNELS
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let values = set.bins().iter().map(|b| b[k] as f64);
            let mean = values.clone().sum::<f64>() / nf;
            let variance = values.map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0);
            let fano = if mean > 0.0 { variance / mean } else { 0.0 };
            let fano_sigma = if mean > 0.0 {
                (2.0 / (nf - 1.0) + 1.0 / (nf * mean)).sqrt()
            } else {
                0.0
            };
            ChannelNoise {
                channel: name.to_string(),
                mean,
                variance,
                fano,
                fano_sigma,
                overdispersed: fano > 1.0 + FANO_SIGMAS * fano_sigma,
                consistent_with_poisson: (fano - 1.0).abs() <= FANO_SIGMAS * fano_sigma,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chiral_sample::{DispersionModel, Sample};
    use crate::estimation::RunMetadata;
    use crate::measurement::Scheme;
    use crate::protocol::{simulate_run, RunPlan};

    fn meta() -> RunMetadata {
        RunMetadata {
            scheme: Scheme::PsiQuantum,
            bias_phase_rad: 1.0,
            visibility: 0.9,
            lambda1_nm: 809.7,
            lambda2_nm: 809.7,
            sample_label: "x".into(),
            bin_duration_s: 1.0,
            hwp_angle_deg: None,
        }
    }

    fn plan(seed: u64) -> RunPlan {
        let sample = Sample::solution(0.2, 0.2, DispersionModel::sucrose()).unwrap();
        RunPlan::new(Scheme::PsiQuantum, sample, 11.0, 1.0, 0.92, seed)
    }

    #[test]
    fn constant_counts_have_zero_fano() {
        let set = CoincidenceSet::new(vec![[100, 50, 50, 100]; 40], meta()).unwrap();
        for ch in noise_diagnostics(&set).unwrap() {
            assert_eq!(ch.fano, 0.0);
            assert!(!ch.overdispersed);
        }
    }

    #[test]
    fn too_few_bins_rejected() {
        let set = CoincidenceSet::new(vec![[1, 1, 1, 1]; 29], meta()).unwrap();
        assert!(matches!(noise_diagnostics(&set), Err(Error::Input(_))));
    }

    #[test]
    fn simulated_counts_are_poissonian() {
        let mut consistent = 0;
        let total = 50 * 4;
        for seed in 0..50 {
            for ch in noise_diagnostics(&simulate_run(&plan(seed)).unwrap()).unwrap() {
                if ch.consistent_with_poisson {
                    consistent += 1;
                }
            }
        }
        // 3σ two-sided: about 0.3% of channels fall outside by chance
        assert!(consistent >= total - 4, "{consistent}/{total}");
    }

    #[test]
    fn drifting_rate_is_flagged() {
        let mut p = plan(4);
        // 20% rise over the run: variance picks up (0.2 λ)²/12 per bin
        p.rate_drift_per_bin = 0.2 / p.n_bins as f64;
        let report = noise_diagnostics(&simulate_run(&p).unwrap()).unwrap();
        assert!(report.iter().all(|c| c.overdispersed && c.fano > 1.0), "{report:?}");
    }
}
