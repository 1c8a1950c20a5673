//! Chiral solution model: Drude-type optical rotatory dispersion, rotation
//! angles and energy-conserving wavelength pairs.
//!
//! Units follow polarimetry convention: specific rotation in
//! deg·ml·g⁻¹·dm⁻¹, concentration in g/ml, path length in dm, wavelengths in
//! nm. The dispersion model is isothermal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pair_state::{WavelengthPair, BAND_MAX_NM, BAND_MIN_NM};

/// Largest pair separation [`wavelength_pair`] accepts, nm.
pub const MAX_SEPARATION_NM: f64 = 20.0;

/// One term `A / (λ² - λ0²)` of a Drude expansion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrudeTerm {
    /// Strength in deg·nm²·ml·g⁻¹·dm⁻¹.
    pub a: f64,
    /// Resonance wavelength in nm.
    pub lambda0_nm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DispersionConfig", into = "DispersionConfig")]
pub struct DispersionModel {
    terms: Vec<DrudeTerm>,
}

/// Serialized form of [`DispersionModel`]; validated on conversion.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DispersionConfig {
    pub terms: Vec<DrudeTerm>,
}

impl TryFrom<DispersionConfig> for DispersionModel {
    type Error = Error;

    fn try_from(cfg: DispersionConfig) -> Result<Self> {
        DispersionModel::new(cfg.terms)
    }
}

impl From<DispersionModel> for DispersionConfig {
    fn from(model: DispersionModel) -> Self {
        DispersionConfig { terms: model.terms }
    }
}

impl std::fmt::Display for DispersionModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{:e}/(λ² - {}²)", t.a, t.lambda0_nm)?;
        }
        Ok(())
    }
}

impl DispersionModel {
    pub fn new(terms: Vec<DrudeTerm>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Domain("dispersion model needs at least one term".into()));
        }
        for (i, t) in terms.iter().enumerate() {
            if !t.a.is_finite() || !t.lambda0_nm.is_finite() {
                return Err(Error::Domain(format!("term {i}: non-finite constant")));
            }
            if t.lambda0_nm < 0.0 || t.lambda0_nm >= BAND_MIN_NM {
                return Err(Error::Domain(format!(
                    "term {i}: lambda0 = {} nm must lie in [0, {BAND_MIN_NM}) nm",
                    t.lambda0_nm
                )));
            }
        }
        Ok(Self { terms })
    }

    /// One-term Drude fit for aqueous sucrose,
    /// `[α](λ) = 21.648 / (λ² − 0.0213)` with λ in µm.
    pub fn sucrose() -> Self {
        Self {
            terms: vec![DrudeTerm {
                a: 21.648e6,
                lambda0_nm: 21_300.0f64.sqrt(),
            }],
        }
    }

    pub fn terms(&self) -> &[DrudeTerm] {
        &self.terms
    }

    /// Evaluates the Drude sum without the band check.
    pub fn evaluate(&self, lambda_nm: f64) -> f64 {
        let l2 = lambda_nm * lambda_nm;
        self.terms
            .iter()
            .map(|t| t.a / (l2 - t.lambda0_nm * t.lambda0_nm))
            .sum()
    }

    /// Analytic derivative d[α]/dλ without the band check.
    pub fn derivative(&self, lambda_nm: f64) -> f64 {
        let l2 = lambda_nm * lambda_nm;
        self.terms
            .iter()
            .map(|t| {
                let d = l2 - t.lambda0_nm * t.lambda0_nm;
                -2.0 * lambda_nm * t.a / (d * d)
            })
            .sum()
    }
}

impl Default for DispersionModel {
    fn default() -> Self {
        Self::sucrose()
    }
}

fn check_band(lambda_nm: f64) -> Result<()> {
    if (BAND_MIN_NM..=BAND_MAX_NM).contains(&lambda_nm) {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "wavelength {lambda_nm} nm outside [{BAND_MIN_NM}, {BAND_MAX_NM}] nm"
        )))
    }
}

/// Specific rotation `[α](λ)` in deg·ml·g⁻¹·dm⁻¹.
pub fn specific_rotation(model: &DispersionModel, lambda_nm: f64) -> Result<f64> {
    check_band(lambda_nm)?;
    Ok(model.evaluate(lambda_nm))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    concentration: f64,
    path_length_dm: f64,
    model: DispersionModel,
    is_blank: bool,
}

impl Sample {
    pub fn solution(concentration: f64, path_length_dm: f64, model: DispersionModel) -> Result<Self> {
        if !(concentration >= 0.0) || !concentration.is_finite() {
            return Err(Error::Domain(format!("concentration must be >= 0, got {concentration}")));
        }
        if !(path_length_dm > 0.0) || !path_length_dm.is_finite() {
            return Err(Error::Domain(format!("path length must be > 0, got {path_length_dm}")));
        }
        Ok(Self {
            concentration,
            path_length_dm,
            model,
            is_blank: false,
        })
    }

    /// Solvent-only reference; rotation is identically zero.
    pub fn blank(path_length_dm: f64, model: DispersionModel) -> Result<Self> {
        let mut s = Self::solution(0.0, path_length_dm, model)?;
        s.is_blank = true;
        Ok(s)
    }

    pub fn concentration(&self) -> f64 {
        self.concentration
    }

    pub fn path_length_dm(&self) -> f64 {
        self.path_length_dm
    }

    pub fn model(&self) -> &DispersionModel {
        &self.model
    }

    pub fn is_blank(&self) -> bool {
        self.is_blank
    }

    /// Same sample at `factor` times the concentration.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let mut s = Self::solution(self.concentration * factor, self.path_length_dm, self.model.clone())?;
        s.is_blank = self.is_blank;
        Ok(s)
    }
}

/// Rotation of linear polarization, in degrees: `[α](λ)·C·L`.
pub fn rotation_angle(sample: &Sample, lambda_nm: f64) -> Result<f64> {
    let specific = specific_rotation(&sample.model, lambda_nm)?;
    if sample.is_blank || sample.concentration == 0.0 {
        return Ok(0.0);
    }
    Ok(specific * sample.concentration * sample.path_length_dm)
}

/// dα/dλ in degrees per nm.
pub fn rotation_angle_derivative(sample: &Sample, lambda_nm: f64) -> Result<f64> {
    check_band(lambda_nm)?;
    if sample.is_blank {
        return Ok(0.0);
    }
    Ok(sample.model.derivative(lambda_nm) * sample.concentration * sample.path_length_dm)
}

/// Mean and difference of the rotations experienced by the two photons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationPair {
    /// `(α(λ1) + α(λ2)) / 2`
    pub mean: f64,
    /// `α(λ2) - α(λ1)`
    pub difference: f64,
}

impl RotationPair {
    pub fn from_individual(alpha1: f64, alpha2: f64) -> Self {
        Self {
            mean: 0.5 * (alpha1 + alpha2),
            difference: alpha2 - alpha1,
        }
    }

    /// Rotation of photon 1 and photon 2.
    pub fn individual(&self) -> (f64, f64) {
        (self.mean - 0.5 * self.difference, self.mean + 0.5 * self.difference)
    }

    pub fn to_radians(self) -> Self {
        Self {
            mean: self.mean.to_radians(),
            difference: self.difference.to_radians(),
        }
    }
}

/// Mean and difference rotation in degrees for a wavelength pair.
pub fn mean_and_difference(sample: &Sample, pair: &WavelengthPair) -> Result<RotationPair> {
    let a1 = rotation_angle(sample, pair.lambda1())?;
    let a2 = rotation_angle(sample, pair.lambda2())?;
    Ok(RotationPair::from_individual(a1, a2))
}

/// Photon pair separated by `delta_lambda_nm` that conserves pump energy.
///
/// Solves `1/λ1 + 1/(λ1 + Δ) = 1/λp` for its positive root
/// `λ1 = λp - Δ/2 + sqrt(λp² + Δ²/4)`.
pub fn wavelength_pair(delta_lambda_nm: f64, pump_nm: f64) -> Result<WavelengthPair> {
    if !(0.0..=MAX_SEPARATION_NM).contains(&delta_lambda_nm) {
        return Err(Error::Domain(format!(
            "separation {delta_lambda_nm} nm outside [0, {MAX_SEPARATION_NM}] nm"
        )));
    }
    if !(pump_nm > 0.0) {
        return Err(Error::Domain(format!("pump wavelength must be positive, got {pump_nm}")));
    }
    let half = 0.5 * delta_lambda_nm;
    let disc = pump_nm * pump_nm + half * half;
    if !(disc >= 0.0) {
        return Err(Error::Domain("no real wavelength pair".into()));
    }
    let lambda1 = pump_nm - half + disc.sqrt();
    let lambda2 = lambda1 + delta_lambda_nm;
    WavelengthPair::new(lambda1, lambda2, pump_nm)
}
