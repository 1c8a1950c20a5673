//! Seeded Monte Carlo of the acquisition protocol.
//!
//! Every bin draws a Poisson number of detected pairs and splits it
//! multinomially across `(HH, HV, VH, VV)`, which is equivalent to four
//! independent Poisson channels. Runs are deterministic given their seed.

pub mod diagnostics;
pub mod grid;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::chiral_sample::{mean_and_difference, wavelength_pair, Sample};
use crate::error::{Error, Result};
use crate::estimation::{BinCounts, CoincidenceSet, RunMetadata};
use crate::measurement::{probabilities_for_rotations, FringeModel, Probabilities, Scheme};
use crate::pair_state::WavelengthPair;

pub use diagnostics::{noise_diagnostics, ChannelNoise};
pub use grid::{run_experiment_grid, write_bundle, CellKind, GridCell, GridConfig, GridResult};

pub const DEFAULT_PAIR_RATE: f64 = 1.837e4;
pub const DEFAULT_BIN_DURATION_S: f64 = 1.0;
pub const DEFAULT_N_BINS: usize = 420;
pub const DEFAULT_PUMP_NM: f64 = 404.85;
pub const DEFAULT_PATH_LENGTH_DM: f64 = 0.2;

/// Settings of one simulated acquisition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunPlan {
    pub scheme: Scheme,
    pub sample: Sample,
    pub sample_label: String,
    pub delta_lambda_nm: f64,
    pub pump_nm: f64,
    /// α0 for the entangled schemes, common analyzer offset for the
    /// classical pair.
    pub bias_phase: f64,
    pub visibility: f64,
    /// Detected pairs per second.
    pub pair_rate: f64,
    pub bin_duration_s: f64,
    pub n_bins: usize,
    pub rng_seed: u64,
    /// Fractional change of the rate per bin; zero for the stationary source.
    #[serde(default)]
    pub rate_drift_per_bin: f64,
}

impl RunPlan {
    /// Full-length defaults: 420 one-second bins at 1.837e4 pairs/s.
    pub fn new(scheme: Scheme, sample: Sample, delta_lambda_nm: f64, bias_phase: f64, visibility: f64, rng_seed: u64) -> Self {
        let sample_label = if sample.is_blank() {
            "blank".to_string()
        } else {
            format!("c={:.3}", sample.concentration())
        };
        Self {
            scheme,
            sample,
            sample_label,
            delta_lambda_nm,
            pump_nm: DEFAULT_PUMP_NM,
            bias_phase,
            visibility,
            pair_rate: DEFAULT_PAIR_RATE,
            bin_duration_s: DEFAULT_BIN_DURATION_S,
            n_bins: DEFAULT_N_BINS,
            rng_seed,
            rate_drift_per_bin: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let config = |m: String| Error::Config {
            path: None,
            line: None,
            message: m,
        };
        if !(self.pair_rate > 0.0) || !self.pair_rate.is_finite() {
            return Err(config(format!("pair rate must be positive, got {}", self.pair_rate)));
        }
        if !(self.bin_duration_s > 0.0) {
            return Err(config(format!("bin duration must be positive, got {}", self.bin_duration_s)));
        }
        if self.n_bins == 0 {
            return Err(config("n_bins must be at least 1".into()));
        }
        if !(self.visibility > 0.0 && self.visibility <= 1.0) {
            return Err(config(format!("visibility must lie in (0, 1], got {}", self.visibility)));
        }
        let last = 1.0 + self.rate_drift_per_bin * (self.n_bins - 1) as f64;
        if !(last >= 0.0) {
            return Err(config("rate drift drives the rate negative".into()));
        }
        if !self.bias_phase.is_finite() {
            return Err(config("bias phase must be finite".into()));
        }
        Ok(())
    }

    pub fn wavelengths(&self) -> Result<WavelengthPair> {
        wavelength_pair(self.delta_lambda_nm, self.pump_nm)
    }

    pub fn fringe_model(&self) -> Result<FringeModel> {
        match self.scheme {
            Scheme::ClassicalPair => FringeModel::classical(self.bias_phase, self.bias_phase, self.visibility),
            scheme => FringeModel::quantum(scheme, self.bias_phase, self.visibility),
        }
    }

    /// Outcome probabilities at the rotations the sample produces.
    pub fn probabilities(&self) -> Result<Probabilities> {
        let pair = self.wavelengths()?;
        let rotations = mean_and_difference(&self.sample, &pair)?.to_radians();
        probabilities_for_rotations(&self.fringe_model()?, rotations)
    }

    pub fn metadata(&self) -> Result<RunMetadata> {
        let pair = self.wavelengths()?;
        Ok(RunMetadata {
            scheme: self.scheme,
            bias_phase_rad: self.bias_phase,
            visibility: self.visibility,
            lambda1_nm: pair.lambda1(),
            lambda2_nm: pair.lambda2(),
            sample_label: self.sample_label.clone(),
            bin_duration_s: self.bin_duration_s,
            hwp_angle_deg: None,
        })
    }
}

/// Splits `n` pairs across four outcomes by successive binomial draws.
pub fn multinomial_split<R: Rng + ?Sized>(rng: &mut R, n: u64, p: &Probabilities) -> Result<BinCounts> {
    let mut out = [0u64; 4];
    let mut remaining = n;
    let mut mass = 1.0;
    for k in 0..3 {
        if remaining == 0 {
            break;
        }
        let q = if mass > 0.0 { (p[k] / mass).clamp(0.0, 1.0) } else { 0.0 };
        let draw = Binomial::new(remaining, q)
            .map_err(|e| Error::Model(format!("binomial({remaining}, {q}): {e}")))?
            .sample(rng);
        out[k] = draw;
        remaining -= draw;
        mass -= p[k];
    }
    out[3] = remaining;
    Ok(out)
}

/// Draws one Poisson count; zero for a zero mean.
pub fn poisson_count<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> Result<u64> {
    if mean <= 0.0 {
        return Ok(0);
    }
    let d = Poisson::new(mean).map_err(|e| Error::Model(format!("poisson({mean}): {e}")))?;
    Ok(d.sample(rng) as u64)
}

/// Simulates one acquisition; bit-identical for equal plans.
pub fn simulate_run(plan: &RunPlan) -> Result<CoincidenceSet> {
    plan.validate()?;
    let p = plan.probabilities()?;
    if p.iter().any(|x| !(*x >= -1e-15)) {
        return Err(Error::Model(format!("invalid outcome probabilities {p:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(plan.rng_seed);
    let base = plan.pair_rate * plan.bin_duration_s;
    let bins = (0..plan.n_bins)
        .map(|b| {
            let mean = base * (1.0 + plan.rate_drift_per_bin * b as f64);
            let n = poisson_count(&mut rng, mean)?;
            multinomial_split(&mut rng, n, &p)
        })
        .collect::<Result<Vec<_>>>()?;
    CoincidenceSet::new(bins, plan.metadata()?)
}

/// Derives an independent seed for a sub-task from a master seed and the
/// task coordinates, so results do not depend on execution order.
pub fn derive_seed(master: u64, coordinates: &[u64]) -> u64 {
    // SplitMix64 finalizer applied over the coordinates
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    coordinates.iter().fold(mix(master), |acc, &c| mix(acc ^ mix(c)))
}
