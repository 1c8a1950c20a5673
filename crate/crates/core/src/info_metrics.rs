//! Fisher information, quantum Fisher information and Cramér–Rao bounds.
//!
//! Everything is expressed per detected pair and in rad⁻². Chain-rule factors
//! from the fringe phase to the physical parameters are 16 for the mean
//! rotation (Φ, `dθ/dᾱ = -4`) and 4 for the rotation difference
//! (Ψ, `dθ/dΔα = 2`).

use serde::{Deserialize, Serialize};

use crate::chiral_sample::RotationPair;
use crate::error::{Error, Result};
use crate::measurement::{theta_of_rotations, Scheme};
use crate::pair_state::{
    apply_optical_activity, make_phi, make_psi, CircularBasis, TwoPhotonState, WavelengthPair,
};

/// Step of the central difference used by [`fisher_information`].
pub const DEFAULT_STEP: f64 = 1e-6;
/// Outcomes below this probability are dropped from the numeric sum.
pub const PROBABILITY_FLOOR: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameter {
    Theta,
    MeanRotation,
    DifferenceRotation,
}

impl Parameter {
    pub fn as_str(self) -> &'static str {
        match self {
            Parameter::Theta => "theta",
            Parameter::MeanRotation => "mean_rotation",
            Parameter::DifferenceRotation => "difference_rotation",
        }
    }

    /// The parameter an entangled scheme is sensitive to.
    pub fn sensed_by(scheme: Scheme) -> Option<Self> {
        match scheme {
            Scheme::PhiQuantum => Some(Parameter::MeanRotation),
            Scheme::PsiQuantum => Some(Parameter::DifferenceRotation),
            Scheme::ClassicalPair => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FisherReport {
    pub scheme: Scheme,
    pub parameter: Parameter,
    /// rad⁻² per detected pair
    pub fi_per_pair: f64,
    /// Pure-state bound for the ideal input; entangled schemes only.
    pub qfi_per_pair: Option<f64>,
}

impl FisherReport {
    /// Cramér–Rao standard deviation `1/sqrt(n·FI)` in radians.
    pub fn crb_sigma(&self, n_pairs: f64) -> f64 {
        crb_sigma(self.fi_per_pair, n_pairs)
    }
}

/// `1/sqrt(n·FI)`; infinite when there is no information.
pub fn crb_sigma(fi_per_pair: f64, n_pairs: f64) -> f64 {
    let info = fi_per_pair * n_pairs;
    if info > 0.0 {
        1.0 / info.sqrt()
    } else {
        f64::INFINITY
    }
}

/// Numeric Fisher information `Σ (dp/dθ)² / p` of an arbitrary outcome model,
/// using a central difference of width `2·step`.
pub fn fisher_information_with_step<F, const N: usize>(prob_model: F, theta: f64, step: f64) -> Result<f64>
where
    F: Fn(f64) -> [f64; N],
{
    let p = prob_model(theta);
    let plus = prob_model(theta + step);
    let minus = prob_model(theta - step);
    let mut info = 0.0;
    for i in 0..N {
        if p[i] < -PROBABILITY_FLOOR || !p[i].is_finite() {
            return Err(Error::Model(format!("outcome {i} has probability {}", p[i])));
        }
        if p[i] < PROBABILITY_FLOOR {
            continue;
        }
        let dp = (plus[i] - minus[i]) / (2.0 * step);
        info += dp * dp / p[i];
    }
    Ok(info)
}

/// [`fisher_information_with_step`] with the default step.
pub fn fisher_information<F, const N: usize>(prob_model: F, theta: f64) -> Result<f64>
where
    F: Fn(f64) -> [f64; N],
{
    fisher_information_with_step(prob_model, theta, DEFAULT_STEP)
}

/// Closed-form Fisher information of the finite-visibility fringe about θ:
/// `V² sin²θ / (1 - V² cos²θ)`, with the limit 1 at V = 1.
pub fn fringe_fisher_information(visibility: f64, theta: f64) -> f64 {
    if visibility >= 1.0 {
        return 1.0;
    }
    let v2 = visibility * visibility;
    let (s, c) = theta.sin_cos();
    v2 * s * s / (1.0 - v2 * c * c)
}

/// Per-photon Fisher information about its own rotation α for the classical
/// analyzer, `4V² sin²φ / (1 - V² cos²φ)` with `φ = 2α + β`.
pub fn single_photon_fisher_information(visibility: f64, alpha: f64, offset: f64) -> f64 {
    4.0 * fringe_fisher_information(visibility, 2.0 * alpha + offset)
}

/// Fisher matrix of the classical pair in the `(ᾱ, Δα)` parametrization,
/// obtained from the diagonal per-photon matrix with the Jacobian of
/// `α1 = ᾱ - Δα/2`, `α2 = ᾱ + Δα/2`.
pub fn classical_fisher_matrix(visibility: f64, offsets: (f64, f64), rotations: RotationPair) -> [[f64; 2]; 2] {
    let (a1, a2) = rotations.individual();
    let f1 = single_photon_fisher_information(visibility, a1, offsets.0);
    let f2 = single_photon_fisher_information(visibility, a2, offsets.1);
    // J = [[1, -1/2], [1, 1/2]], F' = Jᵀ diag(f1, f2) J
    let off = 0.5 * (f2 - f1);
    [[f1 + f2, off], [off, 0.25 * (f1 + f2)]]
}

/// Information about one parameter with the other treated as unknown
/// (Schur complement of the 2x2 Fisher matrix).
fn efficient_information(matrix: &[[f64; 2]; 2], index: usize) -> f64 {
    let other = 1 - index;
    let (own, cross, rest) = (matrix[index][index], matrix[0][1], matrix[other][other]);
    if rest > 0.0 {
        own - cross * cross / rest
    } else {
        own
    }
}

/// Diagonal generator of a phase family in the circular basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseGenerator {
    pub eigenvalues: [f64; 4],
}

impl PhaseGenerator {
    /// Generator of a phase on a single basis component, e.g. the fringe
    /// phase θ carried by `LL` in the Φ state or `LR` in the Ψ state.
    pub fn relative_phase(on: CircularBasis) -> Self {
        let mut eigenvalues = [0.0; 4];
        eigenvalues[on as usize] = 1.0;
        Self { eigenvalues }
    }

    /// Fringe-phase generator for an entangled scheme.
    pub fn fringe(scheme: Scheme) -> Result<Self> {
        match scheme {
            Scheme::PhiQuantum => Ok(Self::relative_phase(CircularBasis::LL)),
            Scheme::PsiQuantum => Ok(Self::relative_phase(CircularBasis::LR)),
            Scheme::ClassicalPair => Err(Error::InvalidScheme {
                scheme,
                operation: "fringe generator",
            }),
        }
    }

    /// Generator of a common rotation of both photons, `Λ1 + Λ2`.
    pub fn mean_rotation() -> Self {
        Self {
            eigenvalues: CircularBasis::ALL.map(|b| {
                let (h1, h2) = b.helicities();
                h1 + h2
            }),
        }
    }

    /// Generator of the rotation difference, `(Λ2 - Λ1)/2`.
    pub fn difference_rotation() -> Self {
        Self {
            eigenvalues: CircularBasis::ALL.map(|b| {
                let (h1, h2) = b.helicities();
                0.5 * (h2 - h1)
            }),
        }
    }
}

/// Pure-state quantum Fisher information `4(<G²> - <G>²)`.
pub fn qfi_pure_state(state: &TwoPhotonState, generator: &PhaseGenerator) -> Result<f64> {
    let norm = state.norm_sqr();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::Input(format!("state not normalized: norm² = {norm}")));
    }
    let (mut m1, mut m2) = (0.0, 0.0);
    for (amp, g) in state.amplitudes().iter().zip(generator.eigenvalues) {
        let w = amp.norm_sqr();
        m1 += w * g;
        m2 += w * g * g;
    }
    Ok(4.0 * (m2 - m1 * m1))
}

fn chain_factor(scheme: Scheme, parameter: Parameter) -> Result<f64> {
    match (scheme, parameter) {
        (Scheme::PhiQuantum, Parameter::MeanRotation) => Ok(-4.0),
        (Scheme::PsiQuantum, Parameter::DifferenceRotation) => Ok(2.0),
        (Scheme::PhiQuantum, Parameter::DifferenceRotation)
        | (Scheme::PsiQuantum, Parameter::MeanRotation) => Ok(0.0),
        (s, Parameter::Theta) if s.is_quantum() => Ok(1.0),
        (scheme, _) => Err(Error::InvalidScheme {
            scheme,
            operation: "fringe-phase parameter",
        }),
    }
}

/// Fisher information about `parameter` for a scheme operated at
/// `bias_phase` with fringe `visibility`, evaluated at the true rotations
/// `at` (radians).
///
/// For the classical pair `bias_phase` is used as the common analyzer
/// offset of both photons; `π/2` is the optimal half-fringe setting.
/// An entangled scheme asked about the parameter it is blind to reports
/// zero information.
pub fn fi_for_parameter(
    scheme: Scheme,
    parameter: Parameter,
    bias_phase: f64,
    visibility: f64,
    at: RotationPair,
) -> Result<FisherReport> {
    if !(visibility > 0.0 && visibility <= 1.0) {
        return Err(Error::Domain(format!("visibility must lie in (0, 1], got {visibility}")));
    }
    match scheme {
        Scheme::ClassicalPair => {
            let index = match parameter {
                Parameter::MeanRotation => 0,
                Parameter::DifferenceRotation => 1,
                Parameter::Theta => {
                    return Err(Error::InvalidScheme {
                        scheme,
                        operation: "fringe-phase parameter",
                    })
                }
            };
            let matrix = classical_fisher_matrix(visibility, (bias_phase, bias_phase), at);
            Ok(FisherReport {
                scheme,
                parameter,
                fi_per_pair: efficient_information(&matrix, index),
                qfi_per_pair: None,
            })
        }
        _ => {
            let factor = chain_factor(scheme, parameter)?;
            let theta = theta_of_rotations(scheme, bias_phase, at.mean, at.difference)?;
            let fi = factor * factor * fringe_fisher_information(visibility, theta);
            let qfi = factor * factor * ideal_fringe_qfi(scheme)?;
            Ok(FisherReport {
                scheme,
                parameter,
                fi_per_pair: fi,
                qfi_per_pair: Some(qfi),
            })
        }
    }
}

fn ideal_fringe_qfi(scheme: Scheme) -> Result<f64> {
    let wl = WavelengthPair::degenerate(404.85)?;
    let state = match scheme {
        Scheme::PhiQuantum => make_phi(0.0, wl),
        _ => make_psi(0.0, wl),
    };
    qfi_pure_state(&state, &PhaseGenerator::fringe(scheme)?)
}

/// QFI about a physical parameter for an input state after the sample.
pub fn qfi_for_rotation(state: &TwoPhotonState, parameter: Parameter, at: RotationPair) -> Result<f64> {
    let (a1, a2) = at.individual();
    let evolved = apply_optical_activity(state, a1, a2);
    let generator = match parameter {
        Parameter::MeanRotation => PhaseGenerator::mean_rotation(),
        Parameter::DifferenceRotation => PhaseGenerator::difference_rotation(),
        Parameter::Theta => {
            return Err(Error::Input("θ has no state-independent generator".into()));
        }
    };
    qfi_pure_state(&evolved, &generator)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiCurveRow {
    pub delta_alpha_rad: f64,
    pub fi_exp: f64,
    pub fi_quantum_ideal: f64,
    pub fi_classical_ideal: f64,
}

/// Fisher information about Δα for the Ψ scheme at finite visibility, next
/// to the ideal entangled and ideal classical values, over `grid` (rad).
pub fn fi_curve(visibility: f64, bias_phase: f64, grid: &[f64]) -> Result<Vec<FiCurveRow>> {
    let half_pi = std::f64::consts::FRAC_PI_2;
    let ideal_q = fi_for_parameter(
        Scheme::PsiQuantum,
        Parameter::DifferenceRotation,
        half_pi,
        1.0,
        RotationPair::from_individual(0.0, 0.0),
    )?
    .fi_per_pair;
    let ideal_c = fi_for_parameter(
        Scheme::ClassicalPair,
        Parameter::DifferenceRotation,
        half_pi,
        1.0,
        RotationPair::from_individual(0.0, 0.0),
    )?
    .fi_per_pair;
    grid.iter()
        .map(|&delta| {
            if !(delta.abs() <= half_pi) {
                return Err(Error::Domain(format!("Δα = {delta} rad outside ±π/2")));
            }
            let at = RotationPair {
                mean: 0.0,
                difference: delta,
            };
            let exp = fi_for_parameter(
                Scheme::PsiQuantum,
                Parameter::DifferenceRotation,
                bias_phase,
                visibility,
                at,
            )?;
            Ok(FiCurveRow {
                delta_alpha_rad: delta,
                fi_exp: exp.fi_per_pair,
                fi_quantum_ideal: ideal_q,
                fi_classical_ideal: ideal_c,
            })
        })
        .collect()
}

/// Evenly spaced grid of `points` values over `[-half_width, half_width]`.
pub fn symmetric_grid(half_width: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![0.0],
        n => (0..n)
            .map(|k| -half_width + 2.0 * half_width * k as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Bisection for a sign change of `f` on `[lo, hi]`.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> Option<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Some(lo);
    }
    if fhi == 0.0 {
        return Some(hi);
    }
    if flo.signum() == fhi.signum() {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 || (hi - lo) < tol {
            return Some(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Headline numbers accompanying an FI curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherSummary {
    pub visibility: f64,
    pub bias_phase_rad: f64,
    pub max_fi_exp: f64,
    pub argmax_delta_alpha_rad: f64,
    /// Ideal entangled over ideal classical FI about Δα.
    pub enhancement_ratio: f64,
    /// Visibility at which the best experimental FI equals the classical one.
    pub break_even_visibility: f64,
    /// Δα values where the experimental curve crosses the classical line.
    pub classical_crossings_rad: Vec<f64>,
    /// Fraction of grid points where the experimental FI exceeds classical.
    pub fraction_above_classical: f64,
}

pub fn summarize_fi_curve(visibility: f64, bias_phase: f64, rows: &[FiCurveRow]) -> Result<FisherSummary> {
    if rows.is_empty() {
        return Err(Error::Input("empty FI curve".into()));
    }
    let half_pi = std::f64::consts::FRAC_PI_2;
    let classical = rows[0].fi_classical_ideal;
    let exp_at = |delta: f64| {
        fi_for_parameter(
            Scheme::PsiQuantum,
            Parameter::DifferenceRotation,
            bias_phase,
            visibility,
            RotationPair {
                mean: 0.0,
                difference: delta,
            },
        )
        .map(|r| r.fi_per_pair)
        .unwrap_or(f64::NAN)
    };

    // equal peaks recur every π/2 in Δα; report the one nearest zero
    let better = |b: (f64, f64), a: (f64, f64)| b.1 > a.1 + 1e-12 || (b.1 >= a.1 - 1e-12 && b.0.abs() < a.0.abs());

    // the peak sits where θ = α0 + 2Δα hits ±π/2; refine the best grid point
    // against the closed-form maximum when it falls inside the grid
    let (mut argmax, mut max_fi) = rows
        .iter()
        .map(|r| (r.delta_alpha_rad, r.fi_exp))
        .fold((0.0, f64::NEG_INFINITY), |a, b| if better(b, a) { b } else { a });
    let (lo, hi) = (rows[0].delta_alpha_rad, rows[rows.len() - 1].delta_alpha_rad);
    for k in -2..=2 {
        let candidate = (half_pi + k as f64 * std::f64::consts::PI - bias_phase) / 2.0;
        if candidate >= lo && candidate <= hi {
            let v = exp_at(candidate);
            if better((candidate, v), (argmax, max_fi)) {
                max_fi = v;
                argmax = candidate;
            }
        }
    }

    let mut crossings = Vec::new();
    for w in rows.windows(2) {
        let (a, b) = (w[0].fi_exp - classical, w[1].fi_exp - classical);
        if a == 0.0 {
            crossings.push(w[0].delta_alpha_rad);
        } else if a.signum() != b.signum() && b != 0.0 {
            if let Some(root) = bisect(|d| exp_at(d) - classical, w[0].delta_alpha_rad, w[1].delta_alpha_rad, 1e-14) {
                crossings.push(root);
            }
        }
    }
    if let Some(last) = rows.last() {
        if last.fi_exp - classical == 0.0 {
            crossings.push(last.delta_alpha_rad);
        }
    }

    let ideal = rows[0].fi_quantum_ideal;
    let break_even = bisect(
        |v| {
            fi_for_parameter(
                Scheme::PsiQuantum,
                Parameter::DifferenceRotation,
                half_pi,
                v,
                RotationPair::from_individual(0.0, 0.0),
            )
            .map(|r| r.fi_per_pair - classical)
            .unwrap_or(f64::NAN)
        },
        1e-6,
        1.0,
        1e-14,
    )
    .unwrap_or(f64::NAN);

    let above = rows.iter().filter(|r| r.fi_exp > r.fi_classical_ideal).count();
    Ok(FisherSummary {
        visibility,
        bias_phase_rad: bias_phase,
        max_fi_exp: max_fi,
        argmax_delta_alpha_rad: argmax,
        enhancement_ratio: ideal / classical,
        break_even_visibility: break_even,
        classical_crossings_rad: crossings,
        fraction_above_classical: above as f64 / rows.len() as f64,
    })
}
