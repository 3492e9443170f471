//! Continuum limits of the decomposition: the unit-scale kernel C̃ and the
//! massless sum Γ̃_{∞,0}(x|0), both as radial Hankel integrals of u(p).

use std::f64::consts::PI;

use super::{CovError, CovResult, CutoffFamily};
use crate::numeric::{bessel_j0, fit_line, integrate};

/// Target absolute error of the radial integrals.
const QUAD_TOL: f64 = 1e-10;

/// Where u(p) has fallen below 1e-15 on a whole octave.
fn p_max(cutoffs: &CutoffFamily) -> f64 {
    let mut p = 10.0;
    while p < 1e5 {
        let peak = (0..64)
            .map(|i| cutoffs.continuum_u(p * (1.0 + i as f64 / 63.0)))
            .fold(0.0f64, |a, v| a.max(v.abs()));
        if peak < 1e-15 {
            break;
        }
        p *= 1.5;
    }
    p
}

/// Integrate over [a, b] in panels no wider than half an oscillation of J0(pr).
fn radial(f: impl Fn(f64) -> f64, a: f64, b: f64, r: f64) -> CovResult<f64> {
    let width = if r > 0.0 { (PI / r).min(1.0) } else { 1.0 };
    let panels = ((b - a) / width).ceil().max(1.0) as usize;
    let q = integrate(f, a, b, panels, QUAD_TOL);
    if !q.converged || q.error > 10.0 * QUAD_TOL {
        return Err(CovError::Quadrature { residual: q.error });
    }
    Ok(q.value)
}

/// C̃(x) = ∫ d²p/(2π)² e^{ipx}(u(p) − u(γp))/p².
pub fn tilde_c(cutoffs: &CutoffFamily, x: [f64; 2]) -> CovResult<f64> {
    let r = x[0].hypot(x[1]);
    let g = f64::from(cutoffs.gamma());
    let top = p_max(cutoffs);
    let f = |p: f64| {
        if p == 0.0 {
            return 0.0;
        }
        bessel_j0(p * r) * (cutoffs.continuum_u(p) - cutoffs.continuum_u(g * p)) / p
    };
    Ok(radial(f, 0.0, top, r)? / (2.0 * PI))
}

/// Γ̃_{∞,0}(x|0) = ∫ d²p/(2π)² (e^{ipx} − 1) u(p)/p² at |x| = r.
pub fn gamma_tilde(cutoffs: &CutoffFamily, r: f64) -> CovResult<f64> {
    let top = p_max(cutoffs);
    let u = |p: f64| cutoffs.continuum_u(p);
    let near = radial(|p| if p == 0.0 { 0.0 } else { (bessel_j0(p * r) - 1.0) * u(p) / p }, 0.0, 1.0, r)?;
    let osc = radial(|p| bessel_j0(p * r) * u(p) / p, 1.0, top, r)?;
    let flat = radial(|p| u(p) / p, 1.0, top, 0.0)?;
    Ok((near + osc - flat) / (2.0 * PI))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoulombConstant {
    /// lim [Γ̃_{∞,0}(x|0) + (1/2π) ln|x|]
    pub c: f64,
    /// fitted slope of Γ̃_{∞,0} against ln|x|; −1/2π in the limit
    pub slope: f64,
    /// largest deviation of Γ̃ + (1/2π)ln|x| from c over the window
    pub residual: f64,
    /// the same limit from the closed form
    /// (1/2π)[ln 2 − γ_E + ∫_0^1 (1−u)/p − ∫_1^∞ u/p]
    pub closed_form: f64,
}

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Fit c on |x| ∈ [50, 200].
pub fn coulomb_constant_c(cutoffs: &CutoffFamily) -> CovResult<CoulombConstant> {
    coulomb_constant_window(cutoffs, 50.0, 200.0, 1e-4)
}

/// Fit c on |x| ∈ [r_lo, r_hi]; fails when the tail is not flat to `flat_tol`.
pub fn coulomb_constant_window(cutoffs: &CutoffFamily, r_lo: f64, r_hi: f64, flat_tol: f64) -> CovResult<CoulombConstant> {
    const POINTS: usize = 13;
    let rs: Vec<f64> = (0..POINTS)
        .map(|i| r_lo * (r_hi / r_lo).powf(i as f64 / (POINTS - 1) as f64))
        .collect();
    let vals = crate::par::map(POINTS, |i| gamma_tilde(cutoffs, rs[i]));
    let vals = vals.into_iter().collect::<CovResult<Vec<_>>>()?;
    let logs: Vec<f64> = rs.iter().map(|r| r.ln()).collect();
    let (slope, _, _) = fit_line(&logs, &vals);
    let shifted: Vec<f64> = vals.iter().zip(&logs).map(|(v, l)| v + l / (2.0 * PI)).collect();
    let c = shifted.iter().sum::<f64>() / POINTS as f64;
    let residual = shifted.iter().map(|v| (v - c).abs()).fold(0.0, f64::max);

    let top = p_max(cutoffs);
    let u = |p: f64| cutoffs.continuum_u(p);
    let low = radial(|p| if p == 0.0 { 0.0 } else { (1.0 - u(p)) / p }, 0.0, 1.0, 0.0)?;
    let high = radial(|p| u(p) / p, 1.0, top, 0.0)?;
    let closed_form = (std::f64::consts::LN_2 - EULER_GAMMA + low - high) / (2.0 * PI);

    if residual > flat_tol {
        return Err(CovError::NonFlatTail { residual });
    }
    Ok(CoulombConstant { c, slope, residual, closed_form })
}

/// w(y) = y⁴ e^{−α² Γ̃_{∞,0}(0|y)} at α² = 8π; tends to e^{8πc}.
pub fn w_profile(cutoffs: &CutoffFamily, y: f64) -> CovResult<f64> {
    let g = gamma_tilde(cutoffs, y)?;
    Ok(y.powi(4) * (8.0 * PI * g).exp())
}
