//! Outcome probabilities for the H/V coincidence measurement.
//!
//! The entangled schemes produce finite-visibility fringes in a single
//! phase `θ`; the classical benchmark sends two independent linearly
//! polarized photons and measures each in the H/V basis.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::chiral_sample::RotationPair;
use crate::error::{Error, Result};

/// Probabilities of the outcomes `(HH, HV, VH, VV)`.
pub type Probabilities = [f64; 4];

/// Channel labels in the order used throughout the crate.
pub const CHANNELS: [&str; 4] = ["HH", "HV", "VH", "VV"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Correlated-helicity entangled input, sensitive to the mean rotation.
    PhiQuantum,
    /// Anti-correlated entangled input, sensitive to the rotation difference.
    PsiQuantum,
    /// Two independent linearly polarized photons.
    ClassicalPair,
}

impl Scheme {
    pub fn is_quantum(self) -> bool {
        !matches!(self, Scheme::ClassicalPair)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::PhiQuantum => "phi_quantum",
            Scheme::PsiQuantum => "psi_quantum",
            Scheme::ClassicalPair => "classical_pair",
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "phi_quantum" | "phi" => Ok(Scheme::PhiQuantum),
            "psi_quantum" | "psi" => Ok(Scheme::PsiQuantum),
            "classical_pair" | "classical" => Ok(Scheme::ClassicalPair),
            other => Err(Error::Input(format!("unknown scheme `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringeModel {
    scheme: Scheme,
    /// α0 for the quantum schemes.
    bias_phase: f64,
    /// Analyzer offsets (β1, β2) for the classical scheme.
    analyzer_offsets: (f64, f64),
    visibility: f64,
}

fn check_visibility(v: f64) -> Result<()> {
    if v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("visibility must lie in (0, 1], got {v}")))
    }
}

impl FringeModel {
    pub fn quantum(scheme: Scheme, bias_phase: f64, visibility: f64) -> Result<Self> {
        if !scheme.is_quantum() {
            return Err(Error::InvalidScheme {
                scheme,
                operation: "quantum fringe model",
            });
        }
        check_visibility(visibility)?;
        Ok(Self {
            scheme,
            bias_phase,
            analyzer_offsets: (0.0, 0.0),
            visibility,
        })
    }

    pub fn classical(beta1: f64, beta2: f64, visibility: f64) -> Result<Self> {
        check_visibility(visibility)?;
        Ok(Self {
            scheme: Scheme::ClassicalPair,
            bias_phase: 0.0,
            analyzer_offsets: (beta1, beta2),
            visibility,
        })
    }

    /// Classical pair with both analyzers at half fringe, where the
    /// single-photon sensitivity is largest for small rotations.
    pub fn classical_optimal(visibility: f64) -> Result<Self> {
        Self::classical(FRAC_PI_2, FRAC_PI_2, visibility)
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn bias_phase(&self) -> f64 {
        self.bias_phase
    }

    pub fn analyzer_offsets(&self) -> (f64, f64) {
        self.analyzer_offsets
    }

    pub fn visibility(&self) -> f64 {
        self.visibility
    }
}

/// Fringe phase for the entangled schemes: `α0 - 4ᾱ` for Φ and `α0 + 2Δα`
/// for Ψ. All angles in radians.
pub fn theta_of_rotations(
    scheme: Scheme,
    bias_phase: f64,
    mean_rotation: f64,
    difference_rotation: f64,
) -> Result<f64> {
    match scheme {
        Scheme::PhiQuantum => Ok(bias_phase - 4.0 * mean_rotation),
        Scheme::PsiQuantum => Ok(bias_phase + 2.0 * difference_rotation),
        Scheme::ClassicalPair => Err(Error::InvalidScheme {
            scheme,
            operation: "fringe phase",
        }),
    }
}

/// `HH = VV = (1 + V cos θ)/4`, `HV = VH = (1 - V cos θ)/4`.
pub fn quantum_probabilities(model: &FringeModel, theta: f64) -> Probabilities {
    let c = model.visibility * theta.cos();
    let same = 0.25 * (1.0 + c);
    let mixed = 0.25 * (1.0 - c);
    [same, mixed, mixed, same]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicalOutcome {
    /// Probability that photon 1 is found H.
    pub p1: f64,
    /// Probability that photon 2 is found H.
    pub p2: f64,
    pub joint: Probabilities,
}

/// Independent single-photon polarimetry, `p_m = (1 + V cos(2α_m + β_m))/2`.
pub fn classical_probabilities(model: &FringeModel, alpha1: f64, alpha2: f64) -> Result<ClassicalOutcome> {
    if model.scheme != Scheme::ClassicalPair {
        return Err(Error::InvalidScheme {
            scheme: model.scheme,
            operation: "classical probabilities",
        });
    }
    let (b1, b2) = model.analyzer_offsets;
    let p1 = single_photon_h_probability(model.visibility, alpha1, b1);
    let p2 = single_photon_h_probability(model.visibility, alpha2, b2);
    Ok(ClassicalOutcome {
        p1,
        p2,
        joint: [p1 * p2, p1 * (1.0 - p2), (1.0 - p1) * p2, (1.0 - p1) * (1.0 - p2)],
    })
}

pub(crate) fn single_photon_h_probability(visibility: f64, alpha: f64, offset: f64) -> f64 {
    0.5 * (1.0 + visibility * (2.0 * alpha + offset).cos())
}

/// Outcome probabilities for physical rotations (radians) under any scheme.
pub fn probabilities_for_rotations(model: &FringeModel, rotations: RotationPair) -> Result<Probabilities> {
    match model.scheme {
        Scheme::ClassicalPair => {
            let (a1, a2) = rotations.individual();
            Ok(classical_probabilities(model, a1, a2)?.joint)
        }
        scheme => {
            let theta = theta_of_rotations(scheme, model.bias_phase, rotations.mean, rotations.difference)?;
            Ok(quantum_probabilities(model, theta))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_8, PI, TAU};

    fn assert_probs(p: Probabilities, e: Probabilities, tol: f64) {
        for (a, b) in p.iter().zip(e) {
            assert!((a - b).abs() < tol, "{p:?} vs {e:?}");
        }
    }

    #[test]
    fn theta_mapping() {
        let t = theta_of_rotations(Scheme::PhiQuantum, 0.0, FRAC_PI_8, 0.0).unwrap();
        assert!((t + FRAC_PI_2).abs() < 1e-15);
        let t = theta_of_rotations(Scheme::PsiQuantum, FRAC_PI_2, 0.3, 0.0).unwrap();
        assert_eq!(t, FRAC_PI_2);
        let a = theta_of_rotations(Scheme::PhiQuantum, 0.2, 0.1, 0.0).unwrap();
        let b = theta_of_rotations(Scheme::PhiQuantum, 0.2, 0.1, 5.0).unwrap();
        assert_eq!(a, b);
        assert!(matches!(
            theta_of_rotations(Scheme::ClassicalPair, 0.0, 0.0, 0.0),
            Err(Error::InvalidScheme { .. })
        ));
    }

    #[test]
    fn quantum_special_points() {
        let ideal = FringeModel::quantum(Scheme::PsiQuantum, 0.0, 1.0).unwrap();
        assert_probs(quantum_probabilities(&ideal, 0.0), [0.5, 0.0, 0.0, 0.5], 1e-15);
        let m = FringeModel::quantum(Scheme::PsiQuantum, 0.0, 0.92).unwrap();
        assert_probs(quantum_probabilities(&m, 0.0), [0.48, 0.02, 0.02, 0.48], 1e-15);
        for v in [0.1, 0.5, 0.92, 1.0] {
            let m = FringeModel::quantum(Scheme::PhiQuantum, 0.0, v).unwrap();
            assert_probs(quantum_probabilities(&m, FRAC_PI_2), [0.25; 4], 1e-15);
        }
    }

    #[test]
    fn visibility_validation() {
        assert!(FringeModel::quantum(Scheme::PhiQuantum, 0.0, 0.0).is_err());
        assert!(FringeModel::quantum(Scheme::PhiQuantum, 0.0, 1.01).is_err());
        assert!(FringeModel::quantum(Scheme::ClassicalPair, 0.0, 0.9).is_err());
        assert!(FringeModel::classical(0.0, 0.0, f64::NAN).is_err());
    }

    #[test]
    fn fringe_properties_on_grid() {
        for v in [0.05, 0.5, 0.914, 0.936, 1.0] {
            let m = FringeModel::quantum(Scheme::PhiQuantum, 0.0, v).unwrap();
            let ideal = FringeModel::quantum(Scheme::PhiQuantum, 0.0, 1.0).unwrap();
            for k in 0..100 {
                let theta = TAU * k as f64 / 100.0;
                let p = quantum_probabilities(&m, theta);
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
                assert_eq!(p[0], p[3]);
                assert_eq!(p[1], p[2]);
                // convex combination of ideal fringes and the uniform distribution
                let q = quantum_probabilities(&ideal, theta);
                let mix = q.map(|x| v * x + (1.0 - v) * 0.25);
                assert_probs(p, mix, 1e-15);
            }
        }
    }

    #[test]
    fn classical_cases() {
        let m = FringeModel::classical(0.0, 0.0, 1.0).unwrap();
        let o = classical_probabilities(&m, 0.0, 0.0).unwrap();
        assert_eq!(o.p1, 1.0);
        assert_eq!(o.p2, 1.0);
        let half = FringeModel::classical_optimal(1.0).unwrap();
        let o = classical_probabilities(&half, 0.0, 0.0).unwrap();
        assert_probs(o.joint, [0.25; 4], 1e-15);
        let q = FringeModel::quantum(Scheme::PsiQuantum, 0.0, 1.0).unwrap();
        assert!(classical_probabilities(&q, 0.0, 0.0).is_err());
    }

    #[test]
    fn classical_joint_is_product() {
        let mut x = 0.123_f64;
        for _ in 0..100 {
            // cheap deterministic sequence in [0, 1)
            x = (x * 9301.0 + 0.4929).fract();
            let b1 = x * TAU;
            x = (x * 9301.0 + 0.4929).fract();
            let a2 = x * PI - FRAC_PI_2;
            let v = 0.05 + 0.95 * x;
            let m = FringeModel::classical(b1, 0.3, v).unwrap();
            let o = classical_probabilities(&m, 0.1, a2).unwrap();
            assert!((o.joint[0] - o.p1 * o.p2).abs() < 1e-15);
            assert!((o.joint.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn scheme_parsing() {
        assert_eq!("psi".parse::<Scheme>().unwrap(), Scheme::PsiQuantum);
        assert_eq!("phi_quantum".parse::<Scheme>().unwrap(), Scheme::PhiQuantum);
        assert!("noon".parse::<Scheme>().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn scheme() -> impl Strategy<Value = Scheme> {
            prop_oneof![Just(Scheme::PhiQuantum), Just(Scheme::PsiQuantum)]
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(1000))]

            #[test]
            fn quantum_fringes(s in scheme(), bias in -10.0f64..10.0, v in 0.0f64..=1.0, theta in -20.0f64..20.0) {
                let m = FringeModel::quantum(s, bias, v).unwrap();
                let p = quantum_probabilities(&m, theta);
                prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert!(p.iter().all(|x| *x >= 0.0));
                prop_assert_eq!(p[0], p[3]);
                prop_assert_eq!(p[1], p[2]);
                let ideal = quantum_probabilities(&FringeModel::quantum(s, bias, 1.0).unwrap(), theta);
                for k in 0..4 {
                    prop_assert!((p[k] - (v * ideal[k] + (1.0 - v) * 0.25)).abs() < 1e-12);
                }
            }

            #[test]
            fn classical_outcomes_normalized(b1 in -7.0f64..7.0, b2 in -7.0f64..7.0, v in 0.0f64..=1.0, a1 in -2.0f64..2.0, a2 in -2.0f64..2.0) {
                let m = FringeModel::classical(b1, b2, v).unwrap();
                let o = classical_probabilities(&m, a1, a2).unwrap();
                prop_assert!((o.joint.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert!((0.0..=1.0).contains(&o.p1) && (0.0..=1.0).contains(&o.p2));
            }
        }
    }
}
