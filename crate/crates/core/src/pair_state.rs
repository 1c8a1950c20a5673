//! Two-photon polarization states in the circular basis.
//!
//! Amplitudes are indexed by the ordered product basis `RR, RL, LR, LL`, where
//! the first letter is the photon in path 1. The linear basis is fixed as
//!
//! ```text
//! |H> = (|R> + |L>) / sqrt(2)
//! |V> = i (|R> - |L>) / sqrt(2)
//! ```
//!
//! With this convention the correlated state `(|RR> + e^{iθ}|LL>)/sqrt(2)` and
//! the anti-correlated state `(|RL> + e^{iθ}|LR>)/sqrt(2)` both give
//! `P(HH) = P(VV) = (1 + cos θ)/4` and `P(HV) = P(VH) = (1 - cos θ)/4`.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::Probabilities;

const NORM_TOLERANCE: f64 = 1e-12;
const ENERGY_TOLERANCE: f64 = 1e-9;

/// Lower edge of the band the dispersion model and pair generator accept, nm.
pub const BAND_MIN_NM: f64 = 700.0;
/// Upper edge of the accepted band, nm.
pub const BAND_MAX_NM: f64 = 900.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarization {
    L,
    R,
    H,
    V,
}

impl Polarization {
    /// Helicity of a circular polarization: `+1` for `L`, `-1` for `R`.
    /// Linear polarizations have no definite helicity.
    pub fn helicity(self) -> Option<i8> {
        match self {
            Polarization::L => Some(1),
            Polarization::R => Some(-1),
            Polarization::H | Polarization::V => None,
        }
    }
}

/// Index into the circular product basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CircularBasis {
    RR = 0,
    RL = 1,
    LR = 2,
    LL = 3,
}

impl CircularBasis {
    pub const ALL: [CircularBasis; 4] = [
        CircularBasis::RR,
        CircularBasis::RL,
        CircularBasis::LR,
        CircularBasis::LL,
    ];

    /// Polarizations of photon 1 and photon 2.
    pub fn polarizations(self) -> (Polarization, Polarization) {
        match self {
            CircularBasis::RR => (Polarization::R, Polarization::R),
            CircularBasis::RL => (Polarization::R, Polarization::L),
            CircularBasis::LR => (Polarization::L, Polarization::R),
            CircularBasis::LL => (Polarization::L, Polarization::L),
        }
    }

    /// Helicities of photon 1 and photon 2.
    pub fn helicities(self) -> (f64, f64) {
        let (a, b) = self.polarizations();
        // circular by construction
        (
            f64::from(a.helicity().unwrap()),
            f64::from(b.helicity().unwrap()),
        )
    }
}

/// Wavelengths of the two photons and of the pump they were generated from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WavelengthPair {
    lambda1: f64,
    lambda2: f64,
    pump: f64,
}

impl WavelengthPair {
    /// Validates the band limits and energy conservation
    /// `1/λ1 + 1/λ2 = 1/λp` (relative tolerance 1e-9).
    pub fn new(lambda1_nm: f64, lambda2_nm: f64, pump_nm: f64) -> Result<Self> {
        if !(pump_nm > 0.0) || !pump_nm.is_finite() {
            return Err(Error::Domain(format!("pump wavelength must be positive, got {pump_nm}")));
        }
        for (name, l) in [("lambda1", lambda1_nm), ("lambda2", lambda2_nm)] {
            if !(BAND_MIN_NM..=BAND_MAX_NM).contains(&l) {
                return Err(Error::Domain(format!(
                    "{name} = {l} nm outside [{BAND_MIN_NM}, {BAND_MAX_NM}] nm"
                )));
            }
        }
        let lhs = 1.0 / lambda1_nm + 1.0 / lambda2_nm;
        let rhs = 1.0 / pump_nm;
        if ((lhs - rhs) / rhs).abs() > ENERGY_TOLERANCE {
            return Err(Error::Domain(format!(
                "energy not conserved: 1/{lambda1_nm} + 1/{lambda2_nm} != 1/{pump_nm}"
            )));
        }
        Ok(Self {
            lambda1: lambda1_nm,
            lambda2: lambda2_nm,
            pump: pump_nm,
        })
    }

    /// Both photons at twice the pump wavelength.
    pub fn degenerate(pump_nm: f64) -> Result<Self> {
        Self::new(2.0 * pump_nm, 2.0 * pump_nm, pump_nm)
    }

    pub fn lambda1(&self) -> f64 {
        self.lambda1
    }

    pub fn lambda2(&self) -> f64 {
        self.lambda2
    }

    pub fn pump(&self) -> f64 {
        self.pump
    }

    pub fn separation(&self) -> f64 {
        self.lambda2 - self.lambda1
    }
}

/// Pure two-photon polarization state with wavelength metadata.
///
/// The wavelengths do not enter the state algebra; polarization and
/// wavelength degrees of freedom factorize.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoPhotonState {
    amplitudes: [Complex64; 4],
    wavelengths: WavelengthPair,
}

impl TwoPhotonState {
    /// Builds a state from amplitudes that must already be normalized.
    pub fn new(amplitudes: [Complex64; 4], wavelengths: WavelengthPair) -> Result<Self> {
        let norm = norm_sqr(&amplitudes);
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::Input(format!("state not normalized: norm² = {norm}")));
        }
        Ok(Self {
            amplitudes,
            wavelengths,
        })
    }

    /// Builds a state by rescaling arbitrary non-zero amplitudes to unit norm.
    pub fn normalized(amplitudes: [Complex64; 4], wavelengths: WavelengthPair) -> Result<Self> {
        let norm = norm_sqr(&amplitudes).sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Input("cannot normalize a zero or non-finite vector".into()));
        }
        Ok(Self {
            amplitudes: amplitudes.map(|a| a / norm),
            wavelengths,
        })
    }

    /// Skips the normalization check; for exercising error paths.
    #[doc(hidden)]
    pub fn from_amplitudes_unchecked(amplitudes: [Complex64; 4], wavelengths: WavelengthPair) -> Self {
        Self {
            amplitudes,
            wavelengths,
        }
    }

    pub fn amplitudes(&self) -> &[Complex64; 4] {
        &self.amplitudes
    }

    pub fn amplitude(&self, basis: CircularBasis) -> Complex64 {
        self.amplitudes[basis as usize]
    }

    pub fn wavelengths(&self) -> &WavelengthPair {
        &self.wavelengths
    }

    pub fn norm_sqr(&self) -> f64 {
        norm_sqr(&self.amplitudes)
    }

    /// Phase of `second` relative to `first`, in (-π, π].
    pub fn relative_phase(&self, first: CircularBasis, second: CircularBasis) -> f64 {
        (self.amplitude(second) / self.amplitude(first)).arg()
    }
}

fn norm_sqr(amplitudes: &[Complex64; 4]) -> f64 {
    amplitudes.iter().map(|a| a.norm_sqr()).sum()
}

/// Correlated-helicity input state `(|RR> + e^{i α0}|LL>)/sqrt(2)`.
pub fn make_phi(bias_phase: f64, wavelengths: WavelengthPair) -> TwoPhotonState {
    let zero = Complex64::new(0.0, 0.0);
    TwoPhotonState {
        amplitudes: [
            Complex64::new(FRAC_1_SQRT_2, 0.0),
            zero,
            zero,
            Complex64::from_polar(FRAC_1_SQRT_2, bias_phase),
        ],
        wavelengths,
    }
}

/// Anti-correlated input state `(|RL> + e^{i α0}|LR>)/sqrt(2)`.
pub fn make_psi(bias_phase: f64, wavelengths: WavelengthPair) -> TwoPhotonState {
    let zero = Complex64::new(0.0, 0.0);
    TwoPhotonState {
        amplitudes: [
            zero,
            Complex64::new(FRAC_1_SQRT_2, 0.0),
            Complex64::from_polar(FRAC_1_SQRT_2, bias_phase),
            zero,
        ],
        wavelengths,
    }
}

/// Applies `exp(-i Λ α_m)` to each photon, where `Λ` is its helicity and
/// `α_m` the rotation angle (rad) experienced in path `m`.
///
/// The operator is diagonal in the circular basis so the result stays
/// normalized up to rounding.
pub fn apply_optical_activity(state: &TwoPhotonState, alpha1: f64, alpha2: f64) -> TwoPhotonState {
    let mut amplitudes = state.amplitudes;
    for basis in CircularBasis::ALL {
        let (h1, h2) = basis.helicities();
        let phase = -(h1 * alpha1 + h2 * alpha2);
        amplitudes[basis as usize] *= Complex64::from_polar(1.0, phase);
    }
    TwoPhotonState {
        amplitudes,
        wavelengths: state.wavelengths,
    }
}

/// Components `<R|p>`, `<L|p>` of the linear analyzer states.
fn linear_in_circular(p: Polarization) -> [Complex64; 2] {
    let s = FRAC_1_SQRT_2;
    match p {
        Polarization::H => [Complex64::new(s, 0.0), Complex64::new(s, 0.0)],
        Polarization::V => [Complex64::new(0.0, s), Complex64::new(0.0, -s)],
        _ => unreachable!("only linear analyzers are used"),
    }
}

/// Probabilities of the coincidence outcomes `(HH, HV, VH, VV)`.
pub fn hv_projection_probabilities(state: &TwoPhotonState) -> Probabilities {
    let outcomes = [
        (Polarization::H, Polarization::H),
        (Polarization::H, Polarization::V),
        (Polarization::V, Polarization::H),
        (Polarization::V, Polarization::V),
    ];
    outcomes.map(|(p1, p2)| {
        let a = linear_in_circular(p1);
        let b = linear_in_circular(p2);
        // <p1 p2|ψ> = Σ conj(a_i) conj(b_j) ψ_ij
        let mut overlap = Complex64::new(0.0, 0.0);
        for i in 0..2 {
            for j in 0..2 {
                overlap += a[i].conj() * b[j].conj() * state.amplitudes[2 * i + j];
            }
        }
        overlap.norm_sqr()
    })
}
