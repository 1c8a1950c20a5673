//! `qord`: simulate, calibrate, estimate and benchmark two-wavelength
//! entangled-photon polarimetry runs.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 some grid
//! cells failed, 3 everything failed.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use serde::Serialize;

use qord_core::config::Config;
use qord_core::estimation::{extract_rotation, fit_calibration, recorded_bias_phase, CalibrationCurve, EstimateRecord};
use qord_core::info_metrics::{fi_curve, summarize_fi_curve, symmetric_grid};
use qord_core::io;
use qord_core::protocol::grid::{table_rows, GridStatus};
use qord_core::protocol::{noise_diagnostics, run_experiment_grid, simulate_run, write_bundle, ChannelNoise};

#[derive(Debug, Parser)]
#[command(name = "qord", version, about = "Entangled-photon polarimetry toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Overrides the configured master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Suppress the human-readable summary.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the `[simulate]` acquisition and write its counts.
    Simulate,
    /// Fit fringe visibility and phase from a bias sweep.
    Calibrate,
    /// Extract rotations from the `[estimate]` blank/sample pairs.
    Estimate,
    /// Fisher-information curve over the rotation difference.
    Fisher,
    /// Run the full scheme × concentration × separation grid.
    Grid,
    /// Per-channel Fano factors of counts files or of a simulated grid.
    Diagnose,
}

enum Failure {
    Validation(anyhow::Error),
    Partial(String),
    Total(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        let validation = e
            .chain()
            .find_map(|c| c.downcast_ref::<qord_core::Error>())
            .is_some_and(qord_core::Error::is_validation);
        if validation {
            Failure::Validation(e)
        } else {
            Failure::Total(e)
        }
    }
}

impl From<qord_core::Error> for Failure {
    fn from(e: qord_core::Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

type Outcome = std::result::Result<(), Failure>;

struct Session {
    config: Config,
    out: PathBuf,
    seed: Option<u64>,
    quiet: bool,
}

impl Session {
    fn say(&self, line: impl AsRef<str>) {
        if !self.quiet {
            // a closed pipe (`qord ... | head`) is not an error worth reporting
            let _ = writeln!(std::io::stdout(), "{}", line.as_ref());
        }
    }

    fn out_file(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Partial(msg)) => {
            eprintln!("warning: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Total(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: Cli) -> Outcome {
    // the whole config is validated before anything runs
    let config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::parse("", None)?,
    };
    let ctx = Session {
        config,
        out: cli.out,
        seed: cli.seed,
        quiet: cli.quiet,
    };
    std::fs::create_dir_all(&ctx.out)
        .with_context(|| format!("creating output directory {}", ctx.out.display()))
        .map_err(Failure::Total)?;
    match cli.command {
        Command::Simulate => cmd_simulate(&ctx),
        Command::Calibrate => cmd_calibrate(&ctx),
        Command::Estimate => cmd_estimate(&ctx),
        Command::Fisher => cmd_fisher(&ctx),
        Command::Grid => cmd_grid(&ctx),
        Command::Diagnose => cmd_diagnose(&ctx),
    }
}

fn file_safe(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') { c } else { '_' })
        .collect()
}

fn cmd_simulate(ctx: &Session) -> Outcome {
    let plan = ctx.config.run_plan(ctx.seed)?;
    let set = simulate_run(&plan)?;
    let path = ctx.out_file(&format!("{}.csv", file_safe(&plan.sample_label)));
    let sidecar = io::write_counts(&path, &set)?;
    ctx.say(format!(
        "{} run '{}': {} bins, {} pairs, seed {}",
        plan.scheme,
        plan.sample_label,
        set.n_bins(),
        set.n_pairs(),
        plan.rng_seed
    ));
    ctx.say(format!("wrote {} and {}", path.display(), sidecar.display()));
    Ok(())
}

fn cmd_calibrate(ctx: &Session) -> Outcome {
    let section = ctx.config.calibrate.clone().unwrap_or_default();
    let sweep = if section.files.is_empty() {
        ctx.config
            .calibration_plans(ctx.seed)?
            .into_iter()
            .map(|(bias, plan)| Ok((bias, simulate_run(&plan)?)))
            .collect::<qord_core::Result<Vec<_>>>()?
    } else {
        let mapping = ctx.config.hwp_mapping();
        section
            .files
            .iter()
            .map(|f| {
                let set = io::read_counts(&ctx.config.resolve(f))?;
                Ok((recorded_bias_phase(set.metadata(), mapping.as_ref()), set))
            })
            .collect::<qord_core::Result<Vec<_>>>()?
    };
    let curve: CalibrationCurve = fit_calibration(&sweep)?;
    let path = ctx.out_file("calibration.json");
    io::write_json(&path, &curve)?;
    ctx.say(format!(
        "visibility {:.4} ± {:.4} over {} settings, phase offset {:.3}°, reduced χ² {:.3}",
        curve.visibility,
        curve.visibility_se,
        curve.n_settings,
        curve.phase_offset_rad.to_degrees(),
        curve.reduced_chi2
    ));
    for ch in &curve.channels {
        ctx.say(format!(
            "  {}: v = {:.4} ± {:.4}, phase {:.3}°{}",
            ch.channel,
            ch.visibility,
            ch.visibility_se,
            ch.phase_rad.to_degrees(),
            if ch.at_bound { " (at bound)" } else { "" }
        ));
    }
    if !curve.phase_consistent {
        ctx.say("  channel phases disagree beyond 3 standard errors");
    }
    ctx.say(format!("wrote {}", path.display()));
    Ok(())
}

fn cmd_estimate(ctx: &Session) -> Outcome {
    let Some(section) = ctx.config.estimate.clone() else {
        return Err(Failure::Validation(anyhow::anyhow!(
            "estimate needs an [estimate] section listing reference/sample pairs"
        )));
    };
    let calibrated = match &section.calibration {
        Some(f) => Some(io::read_json::<CalibrationCurve>(&ctx.config.resolve(f))?.visibility),
        None => None,
    };
    let mut records: Vec<EstimateRecord> = Vec::new();
    for pair in &section.pairs {
        let reference = io::read_counts(&ctx.config.resolve(&pair.reference))?;
        let sample = io::read_counts(&ctx.config.resolve(&pair.sample))?;
        let visibility = calibrated.unwrap_or(sample.metadata().visibility);
        let estimate = extract_rotation(&reference, &sample, visibility)
            .with_context(|| format!("{} against {}", pair.sample, pair.reference))?;
        ctx.say(format!(
            "{} {}: {} = {:.5}° ± {:.5}°, ratio to classical bound {:.3}",
            estimate.scheme,
            estimate.sample_label,
            estimate.parameter.as_str(),
            estimate.value_deg(),
            estimate.std_error_deg(),
            estimate.ratio_to_classical_crb
        ));
        records.push(estimate.record());
    }
    let path = ctx.out_file("estimates.jsonl");
    io::write_jsonl(&path, &records)?;
    ctx.say(format!("wrote {}", path.display()));
    Ok(())
}

fn cmd_fisher(ctx: &Session) -> Outcome {
    let (visibility, bias, section) = ctx.config.fisher_settings();
    let grid = symmetric_grid(section.half_width_deg.to_radians(), section.points);
    let rows = fi_curve(visibility, bias, &grid)?;
    let summary = summarize_fi_curve(visibility, bias, &rows)?;
    let curve_path = ctx.out_file("fi_curve.csv");
    io::write_csv(&curve_path, &rows)?;
    let summary_path = ctx.out_file("fisher_summary.json");
    io::write_json(&summary_path, &summary)?;
    ctx.say(format!("visibility {visibility}, bias {:.3}°", bias.to_degrees()));
    ctx.say(format!(
        "max FI {:.3} rad⁻² at Δα = {:.3}°",
        summary.max_fi_exp,
        summary.argmax_delta_alpha_rad.to_degrees()
    ));
    ctx.say(format!("enhancement ratio {:.3}", summary.enhancement_ratio));
    ctx.say(format!("break-even visibility {:.4}", summary.break_even_visibility));
    let crossings: Vec<String> = summary
        .classical_crossings_rad
        .iter()
        .map(|c| format!("{:.3}°", c.to_degrees()))
        .collect();
    ctx.say(format!(
        "above classical on {:.1}% of the grid; crossings at [{}]",
        100.0 * summary.fraction_above_classical,
        crossings.join(", ")
    ));
    ctx.say(format!("wrote {} and {}", curve_path.display(), summary_path.display()));
    Ok(())
}

fn cmd_grid(ctx: &Session) -> Outcome {
    let grid = ctx.config.grid_config(ctx.seed);
    let result = run_experiment_grid(&grid)?;
    let manifest = write_bundle(&result, &grid, &ctx.out)?;
    ctx.say(format!(
        "{:<12} {:>8} {:>6}  {:>12} {:>12} {:>12}",
        "scheme", "c g/ml", "Δλ nm", "estimate °", "std err °", "model °"
    ));
    for row in table_rows(&result) {
        let fmt = |x: Option<f64>| x.map_or("failed".to_string(), |v| format!("{v:.5}"));
        ctx.say(format!(
            "{:<12} {:>8} {:>6}  {:>12} {:>12} {:>12}",
            row.scheme.as_str(),
            row.concentration_g_per_ml,
            row.delta_lambda_nm,
            fmt(row.estimate_deg),
            fmt(row.std_error_deg),
            fmt(row.prediction_deg)
        ));
    }
    ctx.say(format!("wrote {} files under {}", manifest.files.len() + 1, ctx.out.display()));
    match result.status() {
        GridStatus::Complete => Ok(()),
        GridStatus::Partial => Err(Failure::Partial(format!(
            "{} of {} cells failed; see the manifest",
            manifest.n_failed, manifest.n_cells
        ))),
        GridStatus::Failed => {
            let first = result.cells.iter().find_map(|c| c.error.clone()).unwrap_or_default();
            Err(Failure::Total(anyhow::anyhow!("all {} cells failed: {first}", manifest.n_cells)))
        }
    }
}

/// One line of `noise.csv`.
#[derive(Serialize)]
struct NoiseRow {
    source: String,
    channel: String,
    mean: f64,
    variance: f64,
    fano: f64,
    fano_sigma: f64,
    overdispersed: bool,
    consistent_with_poisson: bool,
}

impl NoiseRow {
    fn new(source: &str, n: &ChannelNoise) -> Self {
        Self {
            source: source.to_string(),
            channel: n.channel.clone(),
            mean: n.mean,
            variance: n.variance,
            fano: n.fano,
            fano_sigma: n.fano_sigma,
            overdispersed: n.overdispersed,
            consistent_with_poisson: n.consistent_with_poisson,
        }
    }
}

fn cmd_diagnose(ctx: &Session) -> Outcome {
    let files = ctx.config.diagnose.clone().unwrap_or_default().files;
    let mut reports: Vec<(String, Vec<ChannelNoise>)> = Vec::new();
    if files.is_empty() {
        let grid = ctx.config.grid_config(ctx.seed);
        let result = run_experiment_grid(&grid)?;
        for cell in &result.cells {
            for run in &cell.runs {
                if let Ok(set) = &run.data {
                    reports.push((cell.cell.file_stem(run.kind), noise_diagnostics(set)?));
                }
            }
        }
    } else {
        for f in &files {
            let set = io::read_counts(&ctx.config.resolve(f))?;
            reports.push((f.clone(), noise_diagnostics(&set)?));
        }
    }
    let rows: Vec<NoiseRow> = reports
        .iter()
        .flat_map(|(source, chans)| chans.iter().map(move |n| NoiseRow::new(source, n)))
        .collect();
    let path = ctx.out_file("noise.csv");
    io::write_csv(&path, &rows)?;
    let consistent = rows.iter().filter(|r| r.consistent_with_poisson).count();
    let over = rows.iter().filter(|r| r.overdispersed).count();
    ctx.say(format!(
        "{consistent} of {} channels consistent with Poisson within 3σ, {over} overdispersed",
        rows.len()
    ));
    for r in rows.iter().filter(|r| !r.consistent_with_poisson) {
        ctx.say(format!(
            "  {} {}: Fano {:.3} ± {:.3}",
            r.source, r.channel, r.fano, r.fano_sigma
        ));
    }
    ctx.say(format!("wrote {}", path.display()));
    Ok(())
}
