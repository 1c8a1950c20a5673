//! TOML run configuration.
//!
//! Angles are given in degrees (`*_deg`); a `bias_phase_rad` key is accepted
//! as an alternative to `bias_phase_deg`. Every validation failure reports the
//! file and, where it can be located, the line of the offending key.
//!
//! ```toml
//! [experiment]
//! visibility = 0.925
//! bias_phase_deg = 90.0
//! seed = 1
//!
//! [dispersion]
//! terms = [{ a = 2.1648e7, lambda0_nm = 145.94519519 }]
//!
//! [grid]
//! schemes = ["phi_quantum", "psi_quantum"]
//! concentrations_g_per_ml = [0.2, 0.4]
//! delta_lambda_nm = [3.0, 7.0, 11.0, 15.0, 19.0]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::chiral_sample::{DispersionModel, Sample, MAX_SEPARATION_NM};
use crate::error::{Error, Result};
use crate::estimation::HwpMapping;
use crate::measurement::Scheme;
use crate::protocol::grid::RateOverride;
use crate::protocol::{derive_seed, GridConfig, RunPlan, DEFAULT_BIN_DURATION_S, DEFAULT_N_BINS, DEFAULT_PAIR_RATE, DEFAULT_PATH_LENGTH_DM, DEFAULT_PUMP_NM};

fn default_visibility() -> f64 {
    0.925
}
fn default_pump() -> f64 {
    DEFAULT_PUMP_NM
}
fn default_path_length() -> f64 {
    DEFAULT_PATH_LENGTH_DM
}
fn default_rate() -> f64 {
    DEFAULT_PAIR_RATE
}
fn default_bin_duration() -> f64 {
    DEFAULT_BIN_DURATION_S
}
fn default_n_bins() -> usize {
    DEFAULT_N_BINS
}
fn default_seed() -> u64 {
    1
}

/// Settings shared by all subcommands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default = "default_visibility")]
    pub visibility: f64,
    #[serde(default)]
    pub bias_phase_deg: Option<f64>,
    #[serde(default)]
    pub bias_phase_rad: Option<f64>,
    #[serde(default = "default_pump")]
    pub pump_nm: f64,
    #[serde(default = "default_path_length")]
    pub path_length_dm: f64,
    /// Detected pairs per second.
    #[serde(default = "default_rate")]
    pub pair_rate: f64,
    #[serde(default = "default_bin_duration")]
    pub bin_duration_s: f64,
    #[serde(default = "default_n_bins")]
    pub n_bins: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            visibility: default_visibility(),
            bias_phase_deg: None,
            bias_phase_rad: None,
            pump_nm: DEFAULT_PUMP_NM,
            path_length_dm: DEFAULT_PATH_LENGTH_DM,
            pair_rate: DEFAULT_PAIR_RATE,
            bin_duration_s: DEFAULT_BIN_DURATION_S,
            n_bins: DEFAULT_N_BINS,
            seed: 1,
        }
    }
}

fn default_schemes() -> Vec<Scheme> {
    vec![Scheme::PhiQuantum, Scheme::PsiQuantum]
}
fn default_concentrations() -> Vec<f64> {
    vec![0.2, 0.4]
}
fn default_separations() -> Vec<f64> {
    vec![3.0, 7.0, 11.0, 15.0, 19.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "default_schemes")]
    pub schemes: Vec<Scheme>,
    #[serde(default = "default_concentrations")]
    pub concentrations_g_per_ml: Vec<f64>,
    #[serde(default = "default_separations")]
    pub delta_lambda_nm: Vec<f64>,
    #[serde(default)]
    pub rate_overrides: Vec<RateOverride>,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            schemes: default_schemes(),
            concentrations_g_per_ml: default_concentrations(),
            delta_lambda_nm: default_separations(),
            rate_overrides: Vec::new(),
        }
    }
}

fn default_half_width() -> f64 {
    90.0
}
fn default_points() -> usize {
    181
}

/// Fisher-information curve over Δα.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FisherSection {
    /// Overrides the experiment visibility.
    #[serde(default)]
    pub visibility: Option<f64>,
    #[serde(default)]
    pub bias_phase_deg: Option<f64>,
    /// The curve spans `[-half_width, +half_width]` in Δα.
    #[serde(default = "default_half_width")]
    pub half_width_deg: f64,
    #[serde(default = "default_points")]
    pub points: usize,
}

impl Default for FisherSection {
    fn default() -> Self {
        Self {
            visibility: None,
            bias_phase_deg: None,
            half_width_deg: default_half_width(),
            points: default_points(),
        }
    }
}

fn default_scheme() -> Scheme {
    Scheme::PsiQuantum
}

/// A single acquisition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    /// Zero or absent means a blank.
    #[serde(default)]
    pub concentration_g_per_ml: f64,
    #[serde(default)]
    pub delta_lambda_nm: f64,
    /// Fractional rate change per bin. Only meant for noise studies.
    #[serde(default)]
    pub rate_drift_per_bin: f64,
    #[serde(default)]
    pub label: Option<String>,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            scheme: default_scheme(),
            concentration_g_per_ml: 0.0,
            delta_lambda_nm: 0.0,
            rate_drift_per_bin: 0.0,
            label: None,
        }
    }
}

fn default_settings() -> usize {
    16
}
fn default_bins_per_setting() -> usize {
    10
}

/// Bias sweep for the visibility calibration. With `files` the sweep is
/// read from disk, otherwise it is simulated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateSection {
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default)]
    pub files: Vec<String>,
    /// Linear waveplate-to-bias mapping, `α0 = slope·φ + offset`.
    #[serde(default)]
    pub hwp_slope: Option<f64>,
    #[serde(default)]
    pub hwp_offset_deg: Option<f64>,
    #[serde(default = "default_settings")]
    pub settings: usize,
    #[serde(default = "default_bins_per_setting")]
    pub bins_per_setting: usize,
    #[serde(default)]
    pub delta_lambda_nm: f64,
}

impl Default for CalibrateSection {
    fn default() -> Self {
        Self {
            scheme: default_scheme(),
            files: Vec::new(),
            hwp_slope: None,
            hwp_offset_deg: None,
            settings: default_settings(),
            bins_per_setting: default_bins_per_setting(),
            delta_lambda_nm: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatePair {
    pub reference: String,
    pub sample: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateSection {
    #[serde(default)]
    pub pairs: Vec<EstimatePair>,
    /// Calibration JSON whose pooled visibility replaces the experiment one.
    #[serde(default)]
    pub calibration: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseSection {
    /// Counts files; when empty the grid is simulated and every run checked.
    #[serde(default)]
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub dispersion: DispersionModel,
    #[serde(default)]
    pub grid: Option<GridSection>,
    #[serde(default)]
    pub fisher: Option<FisherSection>,
    #[serde(default)]
    pub simulate: Option<SimulateSection>,
    #[serde(default)]
    pub calibrate: Option<CalibrateSection>,
    #[serde(default)]
    pub estimate: Option<EstimateSection>,
    #[serde(default)]
    pub diagnose: Option<DiagnoseSection>,
    #[serde(skip)]
    source: Option<PathBuf>,
    #[serde(skip)]
    text: String,
}

/// 1-based line of a byte offset.
fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of `key = ...` inside `[section]`, falling back to the section
/// header and then to nothing.
fn line_of_key(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut in_section = section.is_empty();
    let mut header = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            let name = line.trim_matches(|c| c == '[' || c == ']').trim();
            in_section = name == section || name.starts_with(&format!("{section}."));
            if in_section && header.is_none() {
                header = Some(i + 1);
            }
            continue;
        }
        if in_section {
            if let Some(rest) = line.strip_prefix(key) {
                if rest.trim_start().starts_with('=') {
                    return Some(i + 1);
                }
            }
        }
    }
    header
}

impl Config {
    /// Reads, parses and validates a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, Some(path))
    }

    pub fn parse(text: &str, source: Option<&Path>) -> Result<Self> {
        let path = source.map(|p| p.display().to_string());
        let mut cfg: Config = toml::from_str(text).map_err(|e| Error::Config {
            path: path.clone(),
            line: e.span().map(|s| line_of_offset(text, s.start)),
            message: e.message().to_string(),
        })?;
        cfg.source = source.map(Path::to_path_buf);
        cfg.text = text.to_string();
        cfg.validate()?;
        Ok(cfg)
    }

    fn invalid(&self, section: &str, key: &str, message: impl Into<String>) -> Error {
        Error::Config {
            path: self.source.as_ref().map(|p| p.display().to_string()),
            line: line_of_key(&self.text, section, key),
            message: format!("{section}.{key}: {}", message.into()),
        }
    }

    fn validate(&self) -> Result<()> {
        let e = &self.experiment;
        if !(e.visibility > 0.0 && e.visibility <= 1.0) {
            return Err(self.invalid("experiment", "visibility", format!("must lie in (0, 1], got {}", e.visibility)));
        }
        if e.bias_phase_deg.is_some() && e.bias_phase_rad.is_some() {
            return Err(self.invalid("experiment", "bias_phase_rad", "give either bias_phase_deg or bias_phase_rad"));
        }
        if !self.bias_phase_rad().is_finite() {
            return Err(self.invalid("experiment", "bias_phase_deg", "must be finite"));
        }
        if !(e.pump_nm > 0.0) || !e.pump_nm.is_finite() {
            return Err(self.invalid("experiment", "pump_nm", format!("must be positive, got {}", e.pump_nm)));
        }
        if !(e.path_length_dm > 0.0) || !e.path_length_dm.is_finite() {
            return Err(self.invalid("experiment", "path_length_dm", format!("must be positive, got {}", e.path_length_dm)));
        }
        if !(e.pair_rate > 0.0) || !e.pair_rate.is_finite() {
            return Err(self.invalid("experiment", "pair_rate", format!("must be positive, got {}", e.pair_rate)));
        }
        if !(e.bin_duration_s > 0.0) || !e.bin_duration_s.is_finite() {
            return Err(self.invalid("experiment", "bin_duration_s", format!("must be positive, got {}", e.bin_duration_s)));
        }
        if e.n_bins == 0 {
            return Err(self.invalid("experiment", "n_bins", "must be at least 1"));
        }

        if let Some(g) = &self.grid {
            if g.schemes.is_empty() {
                return Err(self.invalid("grid", "schemes", "must not be empty"));
            }
            if let Some(s) = g.schemes.iter().find(|s| !s.is_quantum()) {
                return Err(self.invalid("grid", "schemes", format!("{s} cannot be differenced against a blank")));
            }
            if g.concentrations_g_per_ml.is_empty() {
                return Err(self.invalid("grid", "concentrations_g_per_ml", "must not be empty"));
            }
            if let Some(c) = g.concentrations_g_per_ml.iter().find(|c| !(**c >= 0.0) || !c.is_finite()) {
                return Err(self.invalid("grid", "concentrations_g_per_ml", format!("must be >= 0, got {c}")));
            }
            if g.delta_lambda_nm.is_empty() {
                return Err(self.invalid("grid", "delta_lambda_nm", "must not be empty"));
            }
            if g.delta_lambda_nm.iter().any(|d| !d.is_finite()) {
                return Err(self.invalid("grid", "delta_lambda_nm", "must be finite"));
            }
            if let Some(o) = g.rate_overrides.iter().find(|o| !(o.pair_rate > 0.0)) {
                return Err(self.invalid("grid", "pair_rate", format!("rate override must be positive, got {}", o.pair_rate)));
            }
        }

        if let Some(f) = &self.fisher {
            if let Some(v) = f.visibility {
                if !(v > 0.0 && v <= 1.0) {
                    return Err(self.invalid("fisher", "visibility", format!("must lie in (0, 1], got {v}")));
                }
            }
            if !(f.half_width_deg > 0.0 && f.half_width_deg <= 90.0) {
                return Err(self.invalid("fisher", "half_width_deg", format!("must lie in (0, 90], got {}", f.half_width_deg)));
            }
            if f.points < 3 {
                return Err(self.invalid("fisher", "points", "need at least 3 points"));
            }
            if f.bias_phase_deg.is_some_and(|b| !b.is_finite()) {
                return Err(self.invalid("fisher", "bias_phase_deg", "must be finite"));
            }
        }

        if let Some(s) = &self.simulate {
            if !(0.0..=MAX_SEPARATION_NM).contains(&s.delta_lambda_nm) {
                return Err(self.invalid(
                    "simulate",
                    "delta_lambda_nm",
                    format!("must lie in [0, {MAX_SEPARATION_NM}] nm, got {}", s.delta_lambda_nm),
                ));
            }
            if !(s.concentration_g_per_ml >= 0.0) || !s.concentration_g_per_ml.is_finite() {
                return Err(self.invalid("simulate", "concentration_g_per_ml", format!("must be >= 0, got {}", s.concentration_g_per_ml)));
            }
            let last = 1.0 + s.rate_drift_per_bin * (e.n_bins - 1) as f64;
            if !(last >= 0.0) {
                return Err(self.invalid("simulate", "rate_drift_per_bin", "drives the rate negative"));
            }
        }

        if let Some(c) = &self.calibrate {
            if c.files.is_empty() && c.settings < 8 {
                return Err(self.invalid("calibrate", "settings", format!("need at least 8 settings, got {}", c.settings)));
            }
            if c.bins_per_setting == 0 {
                return Err(self.invalid("calibrate", "bins_per_setting", "must be at least 1"));
            }
            if c.hwp_slope.is_some_and(|k| !(k.is_finite() && k != 0.0)) {
                return Err(self.invalid("calibrate", "hwp_slope", "must be finite and non-zero"));
            }
            if !(0.0..=MAX_SEPARATION_NM).contains(&c.delta_lambda_nm) {
                return Err(self.invalid("calibrate", "delta_lambda_nm", format!("must lie in [0, {MAX_SEPARATION_NM}] nm")));
            }
        }

        if let Some(est) = &self.estimate {
            if est.pairs.is_empty() {
                return Err(self.invalid("estimate", "pairs", "list at least one reference/sample pair"));
            }
        }
        Ok(())
    }

    /// α0 in radians; 90° when not configured.
    pub fn bias_phase_rad(&self) -> f64 {
        match (self.experiment.bias_phase_deg, self.experiment.bias_phase_rad) {
            (_, Some(r)) => r,
            (Some(d), None) => d.to_radians(),
            (None, None) => std::f64::consts::FRAC_PI_2,
        }
    }

    pub fn seed(&self, seed_override: Option<u64>) -> u64 {
        seed_override.unwrap_or(self.experiment.seed)
    }

    /// Resolves a path from the config relative to the config's directory.
    pub fn resolve(&self, relative: &str) -> PathBuf {
        let p = Path::new(relative);
        match self.source.as_ref().and_then(|s| s.parent()) {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn grid_config(&self, seed_override: Option<u64>) -> GridConfig {
        let g = self.grid.clone().unwrap_or_default();
        let e = &self.experiment;
        GridConfig {
            schemes: g.schemes,
            concentrations_g_per_ml: g.concentrations_g_per_ml,
            delta_lambda_nm: g.delta_lambda_nm,
            bias_phase_rad: self.bias_phase_rad(),
            visibility: e.visibility,
            pair_rate: e.pair_rate,
            bin_duration_s: e.bin_duration_s,
            n_bins: e.n_bins,
            seed: self.seed(seed_override),
            pump_nm: e.pump_nm,
            path_length_dm: e.path_length_dm,
            dispersion: self.dispersion.clone(),
            rate_overrides: g.rate_overrides,
        }
    }

    /// Plan of the `[simulate]` acquisition.
    pub fn run_plan(&self, seed_override: Option<u64>) -> Result<RunPlan> {
        let s = self.simulate.clone().unwrap_or_default();
        let e = &self.experiment;
        let sample = if s.concentration_g_per_ml == 0.0 {
            Sample::blank(e.path_length_dm, self.dispersion.clone())?
        } else {
            Sample::solution(s.concentration_g_per_ml, e.path_length_dm, self.dispersion.clone())?
        };
        let mut plan = RunPlan::new(s.scheme, sample, s.delta_lambda_nm, self.bias_phase_rad(), e.visibility, self.seed(seed_override));
        if let Some(label) = s.label {
            plan.sample_label = label;
        }
        plan.pump_nm = e.pump_nm;
        plan.pair_rate = e.pair_rate;
        plan.bin_duration_s = e.bin_duration_s;
        plan.n_bins = e.n_bins;
        plan.rate_drift_per_bin = s.rate_drift_per_bin;
        Ok(plan)
    }

    pub fn hwp_mapping(&self) -> Option<HwpMapping> {
        let c = self.calibrate.as_ref()?;
        c.hwp_slope.map(|slope| HwpMapping {
            slope,
            offset_rad: c.hwp_offset_deg.unwrap_or(0.0).to_radians(),
        })
    }

    /// One blank plan per bias setting, evenly spaced over a full period.
    pub fn calibration_plans(&self, seed_override: Option<u64>) -> Result<Vec<(f64, RunPlan)>> {
        let c = self.calibrate.clone().unwrap_or_default();
        let e = &self.experiment;
        let seed = self.seed(seed_override);
        (0..c.settings)
            .map(|k| {
                let bias = std::f64::consts::TAU * k as f64 / c.settings as f64;
                let sample = Sample::blank(e.path_length_dm, self.dispersion.clone())?;
                let mut plan = RunPlan::new(c.scheme, sample, c.delta_lambda_nm, bias, e.visibility, derive_seed(seed, &[k as u64]));
                plan.pump_nm = e.pump_nm;
                plan.pair_rate = e.pair_rate;
                plan.bin_duration_s = e.bin_duration_s;
                plan.n_bins = c.bins_per_setting;
                Ok((bias, plan))
            })
            .collect()
    }

    /// Visibility and bias used by the Fisher-information curve.
    pub fn fisher_settings(&self) -> (f64, f64, FisherSection) {
        let f = self.fisher.clone().unwrap_or_default();
        let v = f.visibility.unwrap_or(self.experiment.visibility);
        let bias = f.bias_phase_deg.map_or(self.bias_phase_rad(), f64::to_radians);
        (v, bias, f)
    }
}
