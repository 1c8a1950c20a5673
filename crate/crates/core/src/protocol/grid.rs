//! The full measurement campaign: every scheme, concentration and wavelength
//! separation, each with a blank and a sample acquisition.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{derive_seed, simulate_run, RunPlan, DEFAULT_BIN_DURATION_S, DEFAULT_N_BINS, DEFAULT_PAIR_RATE, DEFAULT_PATH_LENGTH_DM, DEFAULT_PUMP_NM};
use crate::chiral_sample::{mean_and_difference, wavelength_pair, DispersionModel, RotationPair, Sample};
use crate::error::{Error, Result};
use crate::estimation::{extract_rotation, CoincidenceSet, Estimate, EstimateRecord};
use crate::info_metrics::Parameter;
use crate::io;
use crate::measurement::Scheme;

/// Pair rate for one cell, overriding the grid-wide value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateOverride {
    pub scheme: Scheme,
    pub concentration_g_per_ml: f64,
    pub delta_lambda_nm: f64,
    pub pair_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub schemes: Vec<Scheme>,
    pub concentrations_g_per_ml: Vec<f64>,
    pub delta_lambda_nm: Vec<f64>,
    pub bias_phase_rad: f64,
    pub visibility: f64,
    pub pair_rate: f64,
    pub bin_duration_s: f64,
    pub n_bins: usize,
    pub seed: u64,
    pub pump_nm: f64,
    pub path_length_dm: f64,
    pub dispersion: DispersionModel,
    #[serde(default)]
    pub rate_overrides: Vec<RateOverride>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            schemes: vec![Scheme::PhiQuantum, Scheme::PsiQuantum],
            concentrations_g_per_ml: vec![0.2, 0.4],
            delta_lambda_nm: vec![3.0, 7.0, 11.0, 15.0, 19.0],
            bias_phase_rad: std::f64::consts::FRAC_PI_2,
            visibility: 0.925,
            pair_rate: DEFAULT_PAIR_RATE,
            bin_duration_s: DEFAULT_BIN_DURATION_S,
            n_bins: DEFAULT_N_BINS,
            seed: 1,
            pump_nm: DEFAULT_PUMP_NM,
            path_length_dm: DEFAULT_PATH_LENGTH_DM,
            dispersion: DispersionModel::sucrose(),
            rate_overrides: Vec::new(),
        }
    }
}

impl GridConfig {
    /// Checks everything that can be checked before any run starts.
    /// Separations outside the supported range are left to fail per cell.
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Error::Config {
            path: None,
            line: None,
            message: m,
        };
        if self.schemes.is_empty() || self.concentrations_g_per_ml.is_empty() || self.delta_lambda_nm.is_empty() {
            return Err(err("grid needs at least one scheme, concentration and separation".into()));
        }
        for s in &self.schemes {
            if !s.is_quantum() {
                return Err(err(format!("scheme {s} cannot be differenced against a blank")));
            }
        }
        for &c in &self.concentrations_g_per_ml {
            if !(c >= 0.0) || !c.is_finite() {
                return Err(err(format!("concentration must be >= 0, got {c}")));
            }
        }
        if self.delta_lambda_nm.iter().any(|d| !d.is_finite()) {
            return Err(err("separations must be finite".into()));
        }
        if !(self.path_length_dm > 0.0) {
            return Err(err(format!("path length must be positive, got {}", self.path_length_dm)));
        }
        for o in &self.rate_overrides {
            if !(o.pair_rate > 0.0) {
                return Err(err(format!("rate override must be positive, got {}", o.pair_rate)));
            }
        }
        // the per-run checks do not depend on the cell
        self.plan(&self.cells()[0], CellKind::Sample)?.validate()
    }

    /// Estimate cells ordered by (scheme, concentration, separation).
    pub fn cells(&self) -> Vec<GridCell> {
        let mut out = Vec::new();
        for (i, &scheme) in self.schemes.iter().enumerate() {
            for (j, &concentration) in self.concentrations_g_per_ml.iter().enumerate() {
                for (k, &delta_lambda_nm) in self.delta_lambda_nm.iter().enumerate() {
                    out.push(GridCell {
                        coordinates: [i, j, k],
                        scheme,
                        concentration_g_per_ml: concentration,
                        delta_lambda_nm,
                    });
                }
            }
        }
        out
    }

    fn rate_for(&self, cell: &GridCell) -> f64 {
        self.rate_overrides
            .iter()
            .find(|o| {
                o.scheme == cell.scheme
                    && o.concentration_g_per_ml == cell.concentration_g_per_ml
                    && o.delta_lambda_nm == cell.delta_lambda_nm
            })
            .map_or(self.pair_rate, |o| o.pair_rate)
    }

    pub fn seed_for(&self, cell: &GridCell, kind: CellKind) -> u64 {
        let [i, j, k] = cell.coordinates;
        derive_seed(self.seed, &[i as u64, j as u64, k as u64, kind as u64])
    }

    pub fn sample_for(&self, cell: &GridCell, kind: CellKind) -> Result<Sample> {
        match kind {
            CellKind::Blank => Sample::blank(self.path_length_dm, self.dispersion.clone()),
            CellKind::Sample => Sample::solution(cell.concentration_g_per_ml, self.path_length_dm, self.dispersion.clone()),
        }
    }

    pub fn plan(&self, cell: &GridCell, kind: CellKind) -> Result<RunPlan> {
        let sample = self.sample_for(cell, kind)?;
        let mut plan = RunPlan::new(
            cell.scheme,
            sample,
            cell.delta_lambda_nm,
            self.bias_phase_rad,
            self.visibility,
            self.seed_for(cell, kind),
        );
        plan.sample_label = match kind {
            CellKind::Blank => "blank".into(),
            CellKind::Sample => format!("sucrose_{}", cell.concentration_g_per_ml),
        };
        plan.pump_nm = self.pump_nm;
        plan.pair_rate = self.rate_for(cell);
        plan.bin_duration_s = self.bin_duration_s;
        plan.n_bins = self.n_bins;
        Ok(plan)
    }

    /// Model rotations in radians for the cell's sample.
    pub fn prediction(&self, cell: &GridCell) -> Result<RotationPair> {
        let pair = wavelength_pair(cell.delta_lambda_nm, self.pump_nm)?;
        let sample = self.sample_for(cell, CellKind::Sample)?;
        Ok(mean_and_difference(&sample, &pair)?.to_radians())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    Blank = 0,
    Sample = 1,
}

impl CellKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CellKind::Blank => "blank",
            CellKind::Sample => "sample",
        }
    }
}

/// One (scheme, concentration, separation) point of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    /// Indices into the configured scheme, concentration and separation lists.
    pub coordinates: [usize; 3],
    pub scheme: Scheme,
    pub concentration_g_per_ml: f64,
    pub delta_lambda_nm: f64,
}

impl GridCell {
    /// File stem for the cell's counts, e.g. `psi_quantum_c0.2_dl19_sample`.
    pub fn file_stem(&self, kind: CellKind) -> String {
        format!(
            "{}_c{}_dl{}_{}",
            self.scheme.as_str(),
            self.concentration_g_per_ml,
            self.delta_lambda_nm,
            kind.as_str()
        )
    }

    pub fn parameter(&self) -> Parameter {
        match self.scheme {
            Scheme::PhiQuantum => Parameter::MeanRotation,
            _ => Parameter::DifferenceRotation,
        }
    }
}

/// Result of one acquisition within a cell.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub kind: CellKind,
    pub seed: u64,
    pub data: std::result::Result<CoincidenceSet, String>,
}

/// Everything produced for one cell; `error` is set when any step failed.
#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub cell: GridCell,
    pub runs: [RunOutcome; 2],
    pub estimate: Option<Estimate>,
    /// Model value of the sensed parameter in radians.
    pub prediction: Option<f64>,
    pub error: Option<String>,
}

impl CellOutcome {
    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }

    pub fn blank(&self) -> Option<&CoincidenceSet> {
        self.runs[0].data.as_ref().ok()
    }

    pub fn sample(&self) -> Option<&CoincidenceSet> {
        self.runs[1].data.as_ref().ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridStatus {
    Complete,
    Partial,
    Failed,
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub cells: Vec<CellOutcome>,
}

impl GridResult {
    pub fn estimates(&self) -> impl Iterator<Item = &Estimate> {
        self.cells.iter().filter_map(|c| c.estimate.as_ref())
    }

    pub fn n_failed(&self) -> usize {
        self.cells.iter().filter(|c| !c.succeeded()).count()
    }

    pub fn status(&self) -> GridStatus {
        match self.n_failed() {
            0 => GridStatus::Complete,
            n if n == self.cells.len() => GridStatus::Failed,
            _ => GridStatus::Partial,
        }
    }
}

fn run_cell(config: &GridConfig, cell: GridCell) -> CellOutcome {
    let simulate = |kind: CellKind| RunOutcome {
        kind,
        seed: config.seed_for(&cell, kind),
        data: config
            .plan(&cell, kind)
            .and_then(|p| simulate_run(&p))
            .map_err(|e| e.to_string()),
    };
    let runs = [simulate(CellKind::Blank), simulate(CellKind::Sample)];
    let prediction = config.prediction(&cell).ok().map(|p| match cell.parameter() {
        Parameter::MeanRotation => p.mean,
        _ => p.difference,
    });
    let estimate = match (&runs[0].data, &runs[1].data) {
        (Ok(blank), Ok(sample)) => extract_rotation(blank, sample, config.visibility).map_err(|e| e.to_string()),
        (Err(e), _) | (_, Err(e)) => Err(e.clone()),
    };
    let (estimate, error) = match estimate {
        Ok(e) => (Some(e), None),
        Err(e) => (None, Some(e)),
    };
    CellOutcome {
        cell,
        runs,
        estimate,
        prediction,
        error,
    }
}

/// Runs every cell in parallel; results come back in cell order.
/// A failing cell is recorded and does not stop the others.
pub fn run_experiment_grid(config: &GridConfig) -> Result<GridResult> {
    config.validate()?;
    let cells = config
        .cells()
        .into_par_iter()
        .map(|cell| run_cell(config, cell))
        .collect();
    Ok(GridResult { cells })
}

/// One line of `estimates.jsonl`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridEstimateLine {
    pub concentration_g_per_ml: f64,
    pub delta_lambda_nm: f64,
    pub prediction_rad: f64,
    #[serde(flatten)]
    pub estimate: EstimateRecord,
}

/// One row of the results table; empty estimate fields for failed cells.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableRow {
    pub scheme: Scheme,
    pub parameter: Parameter,
    pub concentration_g_per_ml: f64,
    pub delta_lambda_nm: f64,
    pub lambda1_nm: Option<f64>,
    pub lambda2_nm: Option<f64>,
    pub estimate_rad: Option<f64>,
    pub std_error_rad: Option<f64>,
    pub prediction_rad: Option<f64>,
    pub estimate_deg: Option<f64>,
    pub std_error_deg: Option<f64>,
    pub prediction_deg: Option<f64>,
    pub status: String,
}

pub const TABLE_FILE: &str = "fig4_table.csv";
pub const ESTIMATES_FILE: &str = "estimates.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_ECHO_FILE: &str = "config.json";
pub const COUNTS_DIR: &str = "counts";

pub fn table_rows(result: &GridResult) -> Vec<TableRow> {
    result
        .cells
        .iter()
        .map(|c| {
            let e = c.estimate.as_ref();
            TableRow {
                scheme: c.cell.scheme,
                parameter: c.cell.parameter(),
                concentration_g_per_ml: c.cell.concentration_g_per_ml,
                delta_lambda_nm: c.cell.delta_lambda_nm,
                lambda1_nm: e.map(|e| e.lambda1_nm),
                lambda2_nm: e.map(|e| e.lambda2_nm),
                estimate_rad: e.map(|e| e.value),
                std_error_rad: e.map(|e| e.std_error),
                prediction_rad: c.prediction,
                estimate_deg: e.map(|e| e.value.to_degrees()),
                std_error_deg: e.map(|e| e.std_error.to_degrees()),
                prediction_deg: c.prediction.map(f64::to_degrees),
                status: if c.succeeded() { "ok".into() } else { "failed".into() },
            }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestRun {
    pub kind: CellKind,
    pub seed: u64,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counts_file: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_pairs: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestCell {
    pub scheme: Scheme,
    pub concentration_g_per_ml: f64,
    pub delta_lambda_nm: f64,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub runs: Vec<ManifestRun>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub status: GridStatus,
    pub n_cells: usize,
    pub n_failed: usize,
    pub cells: Vec<ManifestCell>,
    pub files: Vec<String>,
}

fn relative(path: &Path, root: &Path) -> String {
    path.strip_prefix(root)
        .unwrap_or(path)
        .to_string_lossy()
        .replace('\\', "/")
}

/// Writes the counts, estimates, results table, configuration echo and
/// manifest under `out_dir`. Contents depend only on the inputs.
pub fn write_bundle(result: &GridResult, config: &GridConfig, out_dir: &Path) -> Result<Manifest> {
    let counts_dir = out_dir.join(COUNTS_DIR);
    std::fs::create_dir_all(&counts_dir).map_err(|e| Error::io(&counts_dir, e))?;
    let mut files: Vec<PathBuf> = Vec::new();
    let mut cells = Vec::with_capacity(result.cells.len());

    for outcome in &result.cells {
        let mut runs = Vec::with_capacity(2);
        for run in &outcome.runs {
            let (status, counts_file, n_pairs) = match &run.data {
                Ok(set) => {
                    let path = counts_dir.join(format!("{}.csv", outcome.cell.file_stem(run.kind)));
                    let sidecar = io::write_counts(&path, set)?;
                    let rel = relative(&path, out_dir);
                    files.push(path);
                    files.push(sidecar);
                    ("ok".to_string(), Some(rel), Some(set.n_pairs()))
                }
                Err(_) => ("failed".to_string(), None, None),
            };
            runs.push(ManifestRun {
                kind: run.kind,
                seed: run.seed,
                status,
                counts_file,
                n_pairs,
            });
        }
        cells.push(ManifestCell {
            scheme: outcome.cell.scheme,
            concentration_g_per_ml: outcome.cell.concentration_g_per_ml,
            delta_lambda_nm: outcome.cell.delta_lambda_nm,
            status: if outcome.succeeded() { "ok".into() } else { "failed".into() },
            error: outcome.error.clone(),
            runs,
        });
    }

    let lines: Vec<GridEstimateLine> = result
        .cells
        .iter()
        .filter_map(|c| {
            c.estimate.as_ref().map(|e| GridEstimateLine {
                concentration_g_per_ml: c.cell.concentration_g_per_ml,
                delta_lambda_nm: c.cell.delta_lambda_nm,
                prediction_rad: c.prediction.unwrap_or(f64::NAN),
                estimate: e.record(),
            })
        })
        .collect();
    let path = out_dir.join(ESTIMATES_FILE);
    io::write_jsonl(&path, &lines)?;
    files.push(path);

    let path = out_dir.join(TABLE_FILE);
    io::write_csv(&path, &table_rows(result))?;
    files.push(path);

    let path = out_dir.join(CONFIG_ECHO_FILE);
    io::write_json(&path, config)?;
    files.push(path);

    let manifest = Manifest {
        seed: config.seed,
        status: result.status(),
        n_cells: result.cells.len(),
        n_failed: result.n_failed(),
        cells,
        files: files.iter().map(|p| relative(p, out_dir)).collect(),
    };
    let path = out_dir.join(MANIFEST_FILE);
    io::write_json(&path, &manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GridConfig {
        GridConfig {
            n_bins: 40,
            pair_rate: 2000.0,
            ..GridConfig::default()
        }
    }

    #[test]
    fn default_grid_shape() {
        let cfg = GridConfig::default();
        let cells = cfg.cells();
        assert_eq!(cells.len(), 20);
        assert_eq!(cells[0].coordinates, [0, 0, 0]);
        assert_eq!(cells[19].coordinates, [1, 1, 4]);
        let mut seeds: Vec<u64> = cells
            .iter()
            .flat_map(|c| [cfg.seed_for(c, CellKind::Blank), cfg.seed_for(c, CellKind::Sample)])
            .collect();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), 40);
    }

    #[test]
    fn small_grid_runs_all_cells() {
        let result = run_experiment_grid(&small()).unwrap();
        assert_eq!(result.cells.len(), 20);
        assert_eq!(result.status(), GridStatus::Complete);
        assert_eq!(result.estimates().count(), 20);
        for c in &result.cells {
            assert_eq!(c.blank().unwrap().metadata().sample_label, "blank");
        }
    }

    #[test]
    fn bad_separation_fails_only_its_cell() {
        let cfg = GridConfig {
            delta_lambda_nm: vec![5.0, 25.0],
            ..small()
        };
        let result = run_experiment_grid(&cfg).unwrap();
        assert_eq!(result.status(), GridStatus::Partial);
        assert_eq!(result.n_failed(), 4);
        for c in &result.cells {
            assert_eq!(c.succeeded(), c.cell.delta_lambda_nm == 5.0);
        }
        let cfg = GridConfig {
            delta_lambda_nm: vec![25.0],
            ..small()
        };
        assert_eq!(run_experiment_grid(&cfg).unwrap().status(), GridStatus::Failed);
    }

    #[test]
    fn classical_scheme_rejected_up_front() {
        let cfg = GridConfig {
            schemes: vec![Scheme::ClassicalPair],
            ..small()
        };
        assert!(matches!(run_experiment_grid(&cfg), Err(Error::Config { .. })));
    }

    #[test]
    fn doubling_concentration_doubles_predictions() {
        let cfg = GridConfig::default();
        let double = GridConfig {
            concentrations_g_per_ml: cfg.concentrations_g_per_ml.iter().map(|c| 2.0 * c).collect(),
            ..cfg.clone()
        };
        for (a, b) in cfg.cells().iter().zip(double.cells().iter()) {
            let pa = cfg.prediction(a).unwrap();
            let pb = double.prediction(b).unwrap();
            assert_eq!(2.0 * pa.mean, pb.mean);
            assert_eq!(2.0 * pa.difference, pb.difference);
        }
    }

    #[test]
    fn rate_override_applies_to_one_cell() {
        let mut cfg = small();
        cfg.rate_overrides.push(RateOverride {
            scheme: Scheme::PsiQuantum,
            concentration_g_per_ml: 0.4,
            delta_lambda_nm: 19.0,
            pair_rate: 1234.0,
        });
        let rates: Vec<f64> = cfg
            .cells()
            .iter()
            .map(|c| cfg.plan(c, CellKind::Sample).unwrap().pair_rate)
            .collect();
        assert_eq!(rates.iter().filter(|&&r| r == 1234.0).count(), 1);
        assert_eq!(rates[19], 1234.0);
    }
}
