//! The discrete Kosterlitz–Thouless flow in rescaled couplings
//! (x, y) = (b s, √(ab) z), with an optional scalar surrogate κ for the
//! irrelevant polymer activity.
//!
//! One step reads
//!
//! ```text
//! x' = x − y² + F̃_j(x, y, κ)
//! y' = y − x y + M̃_j(x, y, κ)
//! κ' = ρ κ + c_R (κ² + κ m + m³),   m = max(|x|, |y|)
//! ```
//!
//! where F̃, M̃ collect the per-scale corrections (a_j − a, L²e^{−α²Γ_j(0)/2} − 1,
//! b_j − b) and the surrogate feedback c_F κ, c_M κ y.

use std::io::Write;

use thiserror::Error;

use crate::lattice_covariance::{coulomb_constant_c, CovarianceStack};
use crate::numeric::fit_line;
use crate::rg_coefficients::{coeff_a, coeff_b, limit_constants, volume_factor, RgError};

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("invalid flow configuration: {0}")]
    InvalidConfig(String),
    #[error("{0}")]
    MissingData(String),
    #[error("deviations are all below 1e-14; no exponent to fit")]
    Undefined,
    #[error(transparent)]
    Coefficients(#[from] RgError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type FlowResult<T> = Result<T, FlowError>;

/// q_j = q₁/(1 + |q₁|(j − 1)).
pub fn kosterlitz_q(q1: f64, j: usize) -> f64 {
    q1 / (1.0 + q1.abs() * (j as f64 - 1.0))
}

/// Per-scale data of the flow at scale j.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleCorrection {
    pub a: f64,
    pub b: f64,
    /// L² e^{−(α²/2)Γ_j(0)}
    pub volume: f64,
}

/// Limit constants, plus per-scale values for the first scales when known.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowCoefficients {
    pub a: f64,
    pub b: f64,
    /// L² e^{−(α²/2)Γ_0(0)}, needed to start from original variables
    pub volume0: Option<f64>,
    /// entry j − 1 holds scale j; scales beyond the list use the limits
    pub scales: Vec<ScaleCorrection>,
}

impl FlowCoefficients {
    pub fn limit(a: f64, b: f64) -> FlowCoefficients {
        FlowCoefficients { a, b, volume0: None, scales: Vec::new() }
    }

    /// Limits from the continuum constant of the stack's cutoffs, per-scale
    /// values for j = 1..=last (α² = 8π).
    pub fn from_stack(stack: &CovarianceStack, last: usize) -> FlowResult<FlowCoefficients> {
        let alpha_sq = crate::rg_coefficients::ALPHA_SQ_KT;
        let c = coulomb_constant_c(stack.cutoffs()).map_err(RgError::from)?;
        let (a, b) = limit_constants(stack.lattice().l(), alpha_sq, c.c)?;
        let scales = (1..=last)
            .map(|j| {
                Ok(ScaleCorrection {
                    a: coeff_a(stack, j, alpha_sq)?,
                    b: coeff_b(stack, j, alpha_sq)?,
                    volume: volume_factor(stack, j, alpha_sq),
                })
            })
            .collect::<FlowResult<Vec<_>>>()?;
        Ok(FlowCoefficients { a, b, volume0: Some(volume_factor(stack, 0, alpha_sq)), scales })
    }

    fn at(&self, j: usize) -> Option<&ScaleCorrection> {
        j.checked_sub(1).and_then(|i| self.scales.get(i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoefficientMode {
    Limit,
    PerScale,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Surrogate {
    /// contraction of the linear part
    pub rho: f64,
    pub c_r: f64,
    pub c_f: f64,
    pub c_m: f64,
}

impl Default for Surrogate {
    fn default() -> Self {
        Surrogate { rho: 0.2, c_r: 1.0, c_f: 1.0, c_m: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowConfig {
    pub mode: CoefficientMode,
    pub surrogate: Option<Surrogate>,
    pub ceiling: f64,
    pub horizon: usize,
    pub stop_on_divergence: bool,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            mode: CoefficientMode::Limit,
            surrogate: None,
            ceiling: 1.0,
            horizon: 100_000,
            stop_on_divergence: true,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> FlowResult<()> {
        if !(self.ceiling > 0.0 && self.ceiling.is_finite()) {
            return Err(FlowError::InvalidConfig(format!("ceiling {} must be positive", self.ceiling)));
        }
        if self.horizon == 0 {
            return Err(FlowError::InvalidConfig("horizon must be at least 1".into()));
        }
        if let Some(s) = self.surrogate {
            if !(s.rho > 0.0 && s.rho < 1.0) {
                return Err(FlowError::InvalidConfig(format!("rho = {} must lie in (0, 1)", s.rho)));
            }
            if s.c_r < 0.0 || s.c_f < 0.0 || s.c_m < 0.0 {
                return Err(FlowError::InvalidConfig("surrogate gains must be nonnegative".into()));
            }
        }
        Ok(())
    }

    /// (F̃_j, M̃_j) at (x, y, κ).
    pub fn corrections(&self, coeffs: &FlowCoefficients, j: usize, x: f64, y: f64, kappa: f64) -> (f64, f64) {
        let (mut f, mut m) = (0.0, 0.0);
        if self.mode == CoefficientMode::PerScale {
            if let Some(c) = coeffs.at(j) {
                f -= (c.a - coeffs.a) / coeffs.a * y * y;
                m += (c.volume - 1.0) * y - (c.volume * c.b - coeffs.b) / coeffs.b * x * y;
            }
        }
        if let Some(s) = self.surrogate {
            f += s.c_f * kappa;
            m += s.c_m * kappa * y;
        }
        (f, m)
    }

    /// κ_{j+1} given (x_j, y_j, κ_j); zero without a surrogate.
    pub fn next_kappa(&self, x: f64, y: f64, kappa: f64) -> f64 {
        match self.surrogate {
            None => 0.0,
            Some(s) => {
                let m = x.abs().max(y.abs());
                s.rho * kappa + s.c_r * (kappa * kappa + kappa * m + m * m * m)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowState {
    pub j: usize,
    pub x: f64,
    pub y: f64,
    pub kappa: f64,
    pub diverged: bool,
}

impl FlowState {
    pub fn new(j: usize, x: f64, y: f64, kappa: f64) -> FlowState {
        FlowState { j, x, y, kappa, diverged: false }
    }
}

/// One RG step; flags the state when |x| or |y| passes the ceiling.
pub fn step(state: &FlowState, coeffs: &FlowCoefficients, config: &FlowConfig) -> FlowState {
    let FlowState { j, x, y, kappa, .. } = *state;
    let (f, m) = config.corrections(coeffs, j, x, y, kappa);
    let x1 = x - y * y + f;
    let y1 = y - x * y + m;
    let k1 = config.next_kappa(x, y, kappa);
    let bad = !(x1.abs() <= config.ceiling && y1.abs() <= config.ceiling);
    FlowState { j: j + 1, x: x1, y: y1, kappa: k1, diverged: state.diverged || bad }
}

/// The scale-0 step from original couplings (s, z):
/// s₁ = s, z₁ = L²e^{−(α²/2)Γ_0(0)} z, κ₁ = c_R max(|s|, |z|)².
pub fn from_original(s: f64, z: f64, coeffs: &FlowCoefficients, config: &FlowConfig) -> FlowResult<FlowState> {
    let v0 = coeffs
        .volume0
        .ok_or_else(|| FlowError::MissingData("the scale-0 volume factor is unknown".into()))?;
    let z1 = v0 * z;
    let kappa = config.surrogate.map_or(0.0, |sur| sur.c_r * s.abs().max(z.abs()).powi(2));
    let (x, y) = to_rescaled(s, z1, coeffs);
    Ok(FlowState::new(1, x, y, kappa))
}

/// (x, y) = (b s, √(ab) z).
pub fn to_rescaled(s: f64, z: f64, coeffs: &FlowCoefficients) -> (f64, f64) {
    (coeffs.b * s, (coeffs.a * coeffs.b).sqrt() * z)
}

/// (s, z) = (x/b, y/√(ab)).
pub fn to_original(x: f64, y: f64, coeffs: &FlowCoefficients) -> (f64, f64) {
    (x / coeffs.b, y / (coeffs.a * coeffs.b).sqrt())
}

#[derive(Debug, Clone)]
pub struct FlowTrajectory {
    pub states: Vec<FlowState>,
    pub config: FlowConfig,
    /// first scale whose state is flagged
    pub divergence: Option<usize>,
}

/// States j = 1..=horizon starting from `start` (normally at j = 1).
pub fn trajectory_from(start: FlowState, config: &FlowConfig, coeffs: &FlowCoefficients) -> FlowResult<FlowTrajectory> {
    config.validate()?;
    let mut states = Vec::with_capacity(config.horizon);
    let mut divergence = None;
    let mut s = start;
    loop {
        if s.diverged && divergence.is_none() {
            divergence = Some(s.j);
        }
        states.push(s);
        if states.len() >= config.horizon || (divergence.is_some() && config.stop_on_divergence) {
            break;
        }
        s = step(&s, coeffs, config);
    }
    Ok(FlowTrajectory { states, config: *config, divergence })
}

pub fn trajectory(x1: f64, y1: f64, config: &FlowConfig, coeffs: &FlowCoefficients) -> FlowResult<FlowTrajectory> {
    trajectory_from(FlowState::new(1, x1, y1, 0.0), config, coeffs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviationFit {
    /// slope of ln|x_j − |q_j|| against ln j
    pub x_exponent: f64,
    pub x_amplitude: f64,
    /// the same for |y_j − q_j|; NaN when y tracks q to 1e−14
    pub y_exponent: f64,
    pub y_amplitude: f64,
}

fn fit_tail(js: &[f64], dev: &[f64]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = js.iter().zip(dev).filter(|(_, d)| **d > 1e-14).map(|(j, d)| (j.ln(), d.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    let (slope, intercept, _) = fit_line(&xs, &ys);
    Some((slope, intercept.exp()))
}

/// Power-law fit of the deviations from q_j over the second half of the trajectory.
pub fn deviation_profile(traj: &FlowTrajectory, q1: f64) -> FlowResult<DeviationFit> {
    if traj.divergence.is_some() {
        return Err(FlowError::InvalidConfig("trajectory diverged".into()));
    }
    let half = &traj.states[traj.states.len() / 2..];
    let js: Vec<f64> = half.iter().map(|s| s.j as f64).collect();
    let dx: Vec<f64> = half.iter().map(|s| (s.x - kosterlitz_q(q1, s.j).abs()).abs()).collect();
    let dy: Vec<f64> = half.iter().map(|s| (s.y - kosterlitz_q(q1, s.j)).abs()).collect();
    let (xe, xa) = fit_tail(&js, &dx).ok_or(FlowError::Undefined)?;
    let (ye, ya) = fit_tail(&js, &dy).unwrap_or((f64::NAN, f64::NAN));
    Ok(DeviationFit { x_exponent: xe, x_amplitude: xa, y_exponent: ye, y_amplitude: ya })
}

/// CSV rows (j, x, y, kappa, q_j, x − |q_j|, y − q_j).
pub fn write_trajectory_csv<W: Write>(traj: &FlowTrajectory, q1: f64, out: W) -> FlowResult<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let err = |e: csv::Error| FlowError::Io(std::io::Error::other(e.to_string()));
    w.write_record(["j", "x", "y", "kappa", "q", "x_minus_q", "y_minus_q"]).map_err(err)?;
    for s in &traj.states {
        let q = kosterlitz_q(q1, s.j);
        w.write_record(&[
            s.j.to_string(),
            s.x.to_string(),
            s.y.to_string(),
            s.kappa.to_string(),
            q.to_string(),
            (s.x - q.abs()).to_string(),
            (s.y - q).to_string(),
        ])
        .map_err(err)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub x1: f64,
    pub y1: f64,
    pub divergence: Option<usize>,
}

/// Independent trajectories from each (x₁, y₁), run in parallel.
pub fn sweep(starts: &[(f64, f64)], config: &FlowConfig, coeffs: &FlowCoefficients) -> FlowResult<Vec<SweepRow>> {
    config.validate()?;
    crate::par::map(starts.len(), |i| {
        let (x1, y1) = starts[i];
        trajectory(x1, y1, config, coeffs).map(|t| SweepRow { x1, y1, divergence: t.divergence })
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn limit() -> FlowCoefficients {
        FlowCoefficients::limit(0.004, 2.0 * 9f64.ln())
    }

    #[test]
    fn kosterlitz_sequence() {
        assert!((kosterlitz_q(0.1, 11) - 0.05).abs() < 1e-15);
        assert_eq!(kosterlitz_q(0.0, 7), 0.0);
        for &q1 in &[0.3, 0.01, -0.02, 1e-4] {
            for j in [1usize, 2, 10, 1000, 123_456] {
                let (a, b) = (kosterlitz_q(q1, j), kosterlitz_q(q1, j + 1));
                // the identity holds for q₁ > 0; for q₁ < 0 with the sign flipped
                let id = if q1 > 0.0 { b - a + a * b } else { b - a - a * b };
                assert!(id.abs() < 1e-14 * a.abs().max(1e-300) + 1e-17, "{q1} {j} {id}");
            }
        }
    }

    #[test]
    fn axis_is_invariant() {
        let c = limit();
        let cfg = FlowConfig { horizon: 50, ..FlowConfig::default() };
        let s = step(&FlowState::new(1, 0.3, 0.0, 0.0), &c, &cfg);
        assert_eq!((s.x, s.y, s.kappa), (0.3, 0.0, 0.0));
        let t = trajectory(0.7, 0.0, &cfg, &c).unwrap();
        assert!(t.divergence.is_none() && t.states.iter().all(|s| s.x == 0.7 && s.y == 0.0));
        let t = trajectory(0.0, 0.0, &cfg, &c).unwrap();
        assert!(matches!(deviation_profile(&t, 0.0), Err(FlowError::Undefined)));
    }

    #[test]
    fn below_the_separatrix_y_escapes() {
        let cfg = FlowConfig { horizon: 10_000, ..FlowConfig::default() };
        let t = trajectory(-0.05, 0.05, &cfg, &limit()).unwrap();
        let d = t.divergence.expect("escapes");
        assert!(t.states[d - 1].y.abs() > 1.0);
        assert!(t.states.windows(2).all(|w| w[1].y >= w[0].y));
    }

    #[test]
    fn y_parity() {
        let sur = Surrogate::default();
        for surrogate in [None, Some(sur)] {
            let cfg = FlowConfig { horizon: 500, surrogate, ..FlowConfig::default() };
            let a = trajectory(0.02, 0.03, &cfg, &limit()).unwrap();
            let b = trajectory(0.02, -0.03, &cfg, &limit()).unwrap();
            for (p, q) in a.states.iter().zip(&b.states) {
                assert_eq!(p.x, q.x);
                assert_eq!(p.y, -q.y);
                assert_eq!(p.kappa, q.kappa);
            }
        }
    }

    #[test]
    fn original_variables_round_trip() {
        let mut c = limit();
        let (x, y) = to_rescaled(0.013, -0.002, &c);
        let (s, z) = to_original(x, y, &c);
        assert!((s - 0.013).abs() < 1e-17 && (z + 0.002).abs() < 1e-17);
        assert!(from_original(0.0, 0.01, &c, &FlowConfig::default()).is_err());
        c.volume0 = Some(1.5);
        let st = from_original(0.01, 0.02, &c, &FlowConfig::default()).unwrap();
        assert_eq!(st.j, 1);
        assert!((st.y - (c.a * c.b).sqrt() * 0.03).abs() < 1e-15);
    }

    #[test]
    fn bad_configs_are_rejected() {
        let bad = FlowConfig { surrogate: Some(Surrogate { rho: 1.0, ..Surrogate::default() }), ..FlowConfig::default() };
        assert!(bad.validate().is_err());
        let bad = FlowConfig { horizon: 0, ..FlowConfig::default() };
        assert!(trajectory(0.0, 0.0, &bad, &limit()).is_err());
    }
}
