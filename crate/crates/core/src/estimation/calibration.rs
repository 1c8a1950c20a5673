//! Calibration of the count-to-phase mapping.
//!
//! Each channel is fitted with `N(α0) = t·A·(1 + v cos(α0 + φ))`, where `t`
//! is the exposure of the setting. Residuals are weighted by
//! `1 / max(N, 1)`. The model is linear in `(A, A v cos φ, -A v sin φ)`, which
//! gives a closed-form starting point; Levenberg–Marquardt then refines
//! `(A, v, φ)` and the covariance comes from the weighted normal matrix.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::theta::wrap_angle;
use super::{CoincidenceSet, RunMetadata};
use crate::error::{Error, Result};
use crate::measurement::CHANNELS;

const MIN_SETTINGS: usize = 8;
const MAX_ITERATIONS: usize = 200;

/// Linear map from a half-waveplate angle to the bias phase,
/// `α0 = slope·φ_HWP + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HwpMapping {
    pub slope: f64,
    pub offset_rad: f64,
}

impl HwpMapping {
    pub fn bias_phase(&self, hwp_angle_rad: f64) -> f64 {
        self.slope * hwp_angle_rad + self.offset_rad
    }
}

/// Bias phase of a recorded calibration run: from the waveplate angle when
/// both the angle and a mapping are known, otherwise as recorded.
pub fn recorded_bias_phase(meta: &RunMetadata, mapping: Option<&HwpMapping>) -> f64 {
    match (meta.hwp_angle_deg, mapping) {
        (Some(deg), Some(m)) => m.bias_phase(deg.to_radians()),
        _ => meta.bias_phase_rad,
    }
}

/// Exposure-summed counts at one bias setting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationPoint {
    pub bias_phase: f64,
    pub exposure_s: f64,
    pub counts: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelFit {
    pub channel: String,
    /// Mean rate per second, A.
    pub amplitude: f64,
    pub amplitude_se: f64,
    pub visibility: f64,
    pub visibility_se: f64,
    /// φ wrapped to (-π, π].
    pub phase_rad: f64,
    pub phase_se_rad: f64,
    pub chi2: f64,
    pub dof: usize,
    pub iterations: usize,
    /// The visibility hit the physical bound 1 and was held there.
    pub at_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    pub channels: Vec<ChannelFit>,
    /// Inverse-variance weighted mean of the channel visibilities.
    pub visibility: f64,
    pub visibility_se: f64,
    /// Circular mean of the same-channel phases and the mixed-channel
    /// phases shifted by π.
    pub phase_offset_rad: f64,
    /// Same and mixed channels are π apart within 3 standard errors.
    pub phase_consistent: bool,
    /// Pooled χ² per degree of freedom.
    pub reduced_chi2: f64,
    pub n_settings: usize,
}

/// Fits a bias sweep of coincidence sets.
pub fn fit_calibration(sweep: &[(f64, CoincidenceSet)]) -> Result<CalibrationCurve> {
    let points: Vec<CalibrationPoint> = sweep
        .iter()
        .map(|(bias, set)| {
            let t = set.totals();
            CalibrationPoint {
                bias_phase: *bias,
                exposure_s: set.exposure_s(),
                counts: t.map(|c| c as f64),
            }
        })
        .collect();
    fit_calibration_points(&points)
}

fn check_coverage(points: &[CalibrationPoint]) -> Result<()> {
    let mut settings: Vec<f64> = points.iter().map(|p| p.bias_phase).collect();
    settings.sort_by(f64::total_cmp);
    settings.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    if settings.len() == 1 && points.len() > 1 {
        return Err(Error::Input("degenerate sweep: all bias settings are equal".into()));
    }
    if settings.len() < MIN_SETTINGS {
        return Err(Error::Input(format!(
            "need at least {MIN_SETTINGS} distinct bias settings, got {}",
            settings.len()
        )));
    }
    let n = settings.len() as f64;
    let span = settings[settings.len() - 1] - settings[0];
    // evenly spaced settings over one period have span 2π(n-1)/n
    if span * n / (n - 1.0) < TAU - 1e-9 {
        return Err(Error::Input(format!(
            "bias sweep spans {span:.4} rad; at least one full fringe is required"
        )));
    }
    if points.iter().any(|p| !(p.exposure_s > 0.0)) {
        return Err(Error::Input("every setting needs a positive exposure".into()));
    }
    Ok(())
}

/// Fits all four channels and pools the visibility.
pub fn fit_calibration_points(points: &[CalibrationPoint]) -> Result<CalibrationCurve> {
    check_coverage(points)?;
    let mut channels = Vec::with_capacity(4);
    for (k, name) in CHANNELS.iter().enumerate() {
        let data: Vec<(f64, f64, f64)> = points
            .iter()
            .map(|p| (p.bias_phase, p.exposure_s, p.counts[k]))
            .collect();
        channels.push(fit_channel(name, &data)?);
    }

    let (mut wsum, mut vsum) = (0.0, 0.0);
    for c in &channels {
        let w = 1.0 / (c.visibility_se * c.visibility_se).max(f64::MIN_POSITIVE);
        wsum += w;
        vsum += w * c.visibility;
    }
    let visibility = vsum / wsum;
    let visibility_se = wsum.recip().sqrt();

    // HH, VV in phase; HV, VH shifted by π
    let shifted: Vec<f64> = channels
        .iter()
        .enumerate()
        .map(|(k, c)| if k == 1 || k == 2 { c.phase_rad - PI } else { c.phase_rad })
        .collect();
    let (s, co) = shifted
        .iter()
        .fold((0.0, 0.0), |(s, c), x| (s + x.sin(), c + x.cos()));
    let phase_offset_rad = s.atan2(co);
    let phase_consistent = channels.iter().zip(&shifted).all(|(c, x)| {
        wrap_angle(x - phase_offset_rad).abs() <= 3.0 * c.phase_se_rad.max(1e-12) + 1e-9
    });

    let chi2: f64 = channels.iter().map(|c| c.chi2).sum();
    let dof: usize = channels.iter().map(|c| c.dof).sum();
    Ok(CalibrationCurve {
        channels,
        visibility,
        visibility_se,
        phase_offset_rad,
        phase_consistent,
        reduced_chi2: if dof > 0 { chi2 / dof as f64 } else { f64::NAN },
        n_settings: points.len(),
    })
}

fn model(params: &Vector3<f64>, bias: f64, exposure: f64) -> f64 {
    exposure * params[0] * (1.0 + params[1] * (bias + params[2]).cos())
}

fn jacobian_row(params: &Vector3<f64>, bias: f64, exposure: f64) -> Vector3<f64> {
    let (s, c) = (bias + params[2]).sin_cos();
    Vector3::new(
        exposure * (1.0 + params[1] * c),
        exposure * params[0] * c,
        -exposure * params[0] * params[1] * s,
    )
}

fn chi2(params: &Vector3<f64>, data: &[(f64, f64, f64)]) -> f64 {
    data.iter()
        .map(|&(b, t, n)| {
            let r = n - model(params, b, t);
            r * r / n.max(1.0)
        })
        .sum()
}

fn normal_equations(params: &Vector3<f64>, data: &[(f64, f64, f64)]) -> (Matrix3<f64>, Vector3<f64>) {
    let mut jtj = Matrix3::zeros();
    let mut jtr = Vector3::zeros();
    for &(b, t, n) in data {
        let w = 1.0 / n.max(1.0);
        let j = jacobian_row(params, b, t);
        let r = n - model(params, b, t);
        jtj += w * j * j.transpose();
        jtr += w * r * j;
    }
    (jtj, jtr)
}

/// Weighted linear solve of `N/t = a + b cos α0 + c sin α0`.
fn linear_start(data: &[(f64, f64, f64)]) -> Result<Vector3<f64>> {
    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    for &(b, t, n) in data {
        let w = 1.0 / n.max(1.0);
        let row = Vector3::new(t, t * b.cos(), t * b.sin());
        ata += w * row * row.transpose();
        atb += w * n * row;
    }
    let coef = ata
        .lu()
        .solve(&atb)
        .ok_or_else(|| Error::Input("calibration design matrix is singular".into()))?;
    let a = coef[0];
    if !(a > 0.0) {
        return Err(Error::Fit {
            iterations: 0,
            diagnostics: format!("non-positive mean rate {a} from linear start"),
        });
    }
    let amp = coef[1].hypot(coef[2]);
    Ok(Vector3::new(a, (amp / a).min(1.0), (-coef[2]).atan2(coef[1])))
}

fn fit_channel(name: &str, data: &[(f64, f64, f64)]) -> Result<ChannelFit> {
    let mut params = linear_start(data)?;
    let mut cost = chi2(&params, data);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let (jtj, jtr) = normal_equations(&params, data);
        let mut damped = jtj;
        for i in 0..3 {
            damped[(i, i)] *= 1.0 + lambda;
        }
        let Some(step) = damped.lu().solve(&jtr) else {
            lambda *= 10.0;
            continue;
        };
        let mut trial = params + step;
        trial[1] = trial[1].clamp(0.0, 1.0);
        let trial_cost = chi2(&trial, data);
        if trial_cost <= cost {
            let small_step = (trial - params).iter().zip(params.iter()).all(|(d, p)| d.abs() <= 1e-12 * p.abs().max(1.0));
            let small_gain = cost - trial_cost <= 1e-14 * cost.max(1e-300);
            params = trial;
            cost = trial_cost;
            lambda = (lambda * 0.1).max(1e-12);
            if small_step || small_gain {
                converged = true;
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                // no downhill direction left: at the minimum to machine precision
                converged = true;
                break;
            }
        }
    }
    if !converged {
        return Err(Error::Fit {
            iterations,
            diagnostics: format!("channel {name}: chi2 = {cost:.6e}, params = {:?}", params.as_slice()),
        });
    }
    if !(params[1] > 0.0) {
        return Err(Error::Fit {
            iterations,
            diagnostics: format!("channel {name}: fitted visibility {} is not positive", params[1]),
        });
    }

    let (jtj, _) = normal_equations(&params, data);
    let cov = jtj.try_inverse().ok_or_else(|| Error::Fit {
        iterations,
        diagnostics: format!("channel {name}: singular covariance"),
    })?;
    let dof = data.len().saturating_sub(3);
    Ok(ChannelFit {
        channel: name.to_string(),
        amplitude: params[0],
        amplitude_se: cov[(0, 0)].max(0.0).sqrt(),
        visibility: params[1],
        visibility_se: cov[(1, 1)].max(0.0).sqrt(),
        phase_rad: wrap_angle(params[2]),
        phase_se_rad: cov[(2, 2)].max(0.0).sqrt(),
        chi2: cost,
        dof,
        iterations,
        at_bound: params[1] >= 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noiseless(v: f64, a: f64, settings: usize) -> Vec<CalibrationPoint> {
        (0..settings)
            .map(|k| {
                let bias = TAU * k as f64 / settings as f64;
                let same = a * (1.0 + v * bias.cos());
                let mixed = a * (1.0 - v * bias.cos());
                CalibrationPoint {
                    bias_phase: bias,
                    exposure_s: 1.0,
                    counts: [same, mixed, mixed, same],
                }
            })
            .collect()
    }

    #[test]
    fn noiseless_round_trip() {
        let curve = fit_calibration_points(&noiseless(0.92, 4593.0, 16)).unwrap();
        assert!((curve.visibility - 0.92).abs() < 1e-9);
        for (k, c) in curve.channels.iter().enumerate() {
            assert!((c.visibility - 0.92).abs() < 1e-9, "{c:?}");
            assert!((c.amplitude - 4593.0).abs() < 1e-6);
            let expected = if k == 1 || k == 2 { PI } else { 0.0 };
            assert!(wrap_angle(c.phase_rad - expected).abs() < 1e-9, "{c:?}");
        }
        assert!(curve.phase_offset_rad.abs() < 1e-9);
        assert!(curve.phase_consistent);
        assert!(curve.reduced_chi2 < 1e-12);
    }

    #[test]
    fn shifted_sweep_recovers_offset() {
        let mut pts = noiseless(0.9, 1000.0, 12);
        for p in &mut pts {
            let bias = p.bias_phase;
            let same = 1000.0 * (1.0 + 0.9 * (bias + 0.4).cos());
            let mixed = 1000.0 * (1.0 - 0.9 * (bias + 0.4).cos());
            p.counts = [same, mixed, mixed, same];
        }
        let curve = fit_calibration_points(&pts).unwrap();
        assert!((curve.phase_offset_rad - 0.4).abs() < 1e-9);
    }

    #[test]
    fn too_few_settings() {
        assert!(matches!(
            fit_calibration_points(&noiseless(0.9, 100.0, 6)),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn degenerate_sweep() {
        let mut pts = noiseless(0.9, 100.0, 10);
        for p in &mut pts {
            p.bias_phase = 0.3;
        }
        let err = fit_calibration_points(&pts).unwrap_err();
        assert!(err.to_string().contains("degenerate"), "{err}");
    }

    #[test]
    fn partial_fringe_rejected() {
        let mut pts = noiseless(0.9, 100.0, 10);
        for p in &mut pts {
            p.bias_phase *= 0.5;
        }
        assert!(fit_calibration_points(&pts).is_err());
    }

    #[test]
    fn hwp_mapping() {
        let m = HwpMapping { slope: 4.0, offset_rad: 0.1 };
        assert!((m.bias_phase(0.25) - 1.1).abs() < 1e-15);
    }
}
