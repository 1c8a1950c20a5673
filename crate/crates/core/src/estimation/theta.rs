//! Maximum-likelihood inversion of the coincidence fringe.
//!
//! Within the same-helicity pair (HH, VV) and the mixed pair (HV, VH) the
//! outcome probabilities are equal, so the likelihood depends on the counts
//! only through `N_same` and `N_mixed`. The binomial MLE of
//! `(1 + V cos θ)/2` then gives `cos θ̂ = (N_same - N_mixed) / (V·N)`.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use super::BinCounts;
use crate::error::{Error, Result};
use crate::info_metrics::{crb_sigma, fringe_fisher_information};

/// Contrast may overshoot the visibility by this much before the estimate is
/// flagged as inconsistent with the calibration.
pub const CONTRAST_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaEstimate {
    pub theta: f64,
    /// Cramér–Rao standard deviation at `theta`.
    pub sigma: f64,
    /// `(N_same - N_mixed) / N`
    pub contrast: f64,
    pub n_pairs: u64,
    /// The contrast exceeded the visibility and was clamped.
    pub clamped: bool,
    /// The overshoot was beyond [`CONTRAST_TOLERANCE`].
    pub visibility_inconsistent: bool,
}

/// θ̂ on the principal branch `[0, π]`.
pub fn estimate_theta(counts: &BinCounts, visibility: f64) -> Result<ThetaEstimate> {
    if !(visibility > 0.0 && visibility <= 1.0) {
        return Err(Error::Domain(format!("visibility must lie in (0, 1], got {visibility}")));
    }
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return Err(Error::Input("no coincidences to estimate from".into()));
    }
    let same = (counts[0] + counts[3]) as f64;
    let mixed = (counts[1] + counts[2]) as f64;
    let contrast = (same - mixed) / n as f64;
    let scaled = contrast / visibility;
    let clamped = scaled.abs() > 1.0;
    let visibility_inconsistent = scaled.abs() > 1.0 + CONTRAST_TOLERANCE;
    let theta = scaled.clamp(-1.0, 1.0).acos();
    Ok(ThetaEstimate {
        theta,
        sigma: crb_sigma(fringe_fisher_information(visibility, theta), n as f64),
        contrast,
        n_pairs: n,
        clamped,
        visibility_inconsistent,
    })
}

/// θ̂ on the arccos branch closest to `reference`, typically the bias
/// phase. For references in `(0, π)` this is the principal branch.
pub fn estimate_theta_near(counts: &BinCounts, visibility: f64, reference: f64) -> Result<ThetaEstimate> {
    let mut est = estimate_theta(counts, visibility)?;
    est.theta = resolve_branch(est.theta, reference);
    Ok(est)
}

/// Picks among `±principal + 2πk` the value closest to `reference`.
pub fn resolve_branch(principal: f64, reference: f64) -> f64 {
    let nearest = |x: f64| x + TAU * ((reference - x) / TAU).round();
    let a = nearest(principal);
    let b = nearest(-principal);
    if (a - reference).abs() <= (b - reference).abs() {
        a
    } else {
        b
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(x: f64) -> f64 {
    let y = x.rem_euclid(TAU);
    if y > PI {
        y - TAU
    } else {
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::{quantum_probabilities, FringeModel, Scheme};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Binomial, Distribution};
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn zero_contrast_is_mid_fringe() {
        for v in [0.3, 0.92, 1.0] {
            let e = estimate_theta(&[250, 250, 250, 250], v).unwrap();
            assert!((e.theta - FRAC_PI_2).abs() < 1e-15);
            assert!(!e.clamped);
        }
    }

    #[test]
    fn full_contrast_at_visibility() {
        let e = estimate_theta(&[480, 20, 20, 480], 0.92).unwrap();
        assert!(e.theta.abs() < 1e-7, "{}", e.theta);
        assert!((e.contrast - 0.92).abs() < 1e-15);
    }

    #[test]
    fn empty_counts_rejected() {
        assert!(matches!(estimate_theta(&[0; 4], 0.9), Err(Error::Input(_))));
        assert!(estimate_theta(&[1; 4], 0.0).is_err());
    }

    #[test]
    fn overshoot_flags() {
        // contrast 0.93 vs V = 0.92: clamped but within tolerance
        let e = estimate_theta(&[4825, 175, 175, 4825], 0.92).unwrap();
        assert!(e.clamped && !e.visibility_inconsistent);
        assert_eq!(e.theta, 0.0);
        // contrast 1.0 vs V = 0.9: inconsistent
        let e = estimate_theta(&[500, 0, 0, 500], 0.9).unwrap();
        assert!(e.visibility_inconsistent);
    }

    #[test]
    fn branch_resolution() {
        assert!((resolve_branch(1.0, 1.2) - 1.0).abs() < 1e-15);
        assert!((resolve_branch(1.0, -1.2) + 1.0).abs() < 1e-15);
        assert!((resolve_branch(1.0, TAU + 0.9) - (TAU + 1.0)).abs() < 1e-12);
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-0.5) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn spread_matches_cramer_rao() {
        // Monte Carlo oracle: multinomial draws at fixed N, spread of θ̂
        // against 1/sqrt(N I(θ)). 4000 trials put the 5% band at > 4 sd of
        // the sample standard deviation.
        let n: u64 = 420_000;
        let v = 0.92;
        let theta = 1.2;
        let model = FringeModel::quantum(Scheme::PsiQuantum, 0.0, v).unwrap();
        let p = quantum_probabilities(&model, theta);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let trials = 4000;
        let estimates: Vec<f64> = (0..trials)
            .map(|_| {
                let hh = Binomial::new(n, p[0]).unwrap().sample(&mut rng);
                let hv = Binomial::new(n - hh, p[1] / (1.0 - p[0])).unwrap().sample(&mut rng);
                let vh = Binomial::new(n - hh - hv, p[2] / (p[2] + p[3])).unwrap().sample(&mut rng);
                let vv = n - hh - hv - vh;
                estimate_theta(&[hh, hv, vh, vv], v).unwrap().theta
            })
            .collect();
        let mean = estimates.iter().sum::<f64>() / trials as f64;
        let var = estimates.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
        let crb = 1.0 / (n as f64 * fringe_fisher_information(v, theta)).sqrt();
        let ratio = var.sqrt() / crb;
        assert!((ratio - 1.0).abs() < 0.05, "ratio {ratio}");
    }
}
