//! Second-order RG data of one scale: the coefficients a_j, b_j of the flow,
//! the energy coefficients ê_{2,j}, ê_{3,j}, ê_{4,j}, the volume factor, and
//! the irrelevant kernels w_{a..e,j}.
//!
//! Sums over y run over the finite support of the Γ's. When a table is strided,
//! quadratic sums in Γ_j are done in momentum space (Parseval on the period
//! L^{j+1} grid) and the remaining sums use full-resolution resampled values.

mod fields;
mod kernels;

use std::f64::consts::PI;
use std::io::Write;

use thiserror::Error;

use crate::lattice_covariance::{CovError, CovarianceStack};
use fields::{check_scale, Fields};

pub use kernels::{kernel_summability, kernels, KernelNorms, SquareTable, WKernels, DIRECTIONS};

#[derive(Debug, Error)]
pub enum RgError {
    #[error("scale {j} outside 1..={max}")]
    ScaleOutOfRange { j: usize, max: usize },
    #[error("scale {j}: exponential of the Γ-sums overflows at n = {n}")]
    Overflow { j: usize, n: usize },
    #[error("scale {j}: {entries} full-resolution entries exceed the budget of {budget}")]
    Budget { j: usize, entries: usize, budget: usize },
    #[error("limit constants are defined only at α² = 8π, got {0}")]
    NotKtPoint(f64),
    #[error(transparent)]
    Covariance(#[from] CovError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type RgResult<T> = Result<T, RgError>;

/// α² at the Kosterlitz–Thouless point.
pub const ALPHA_SQ_KT: f64 = 8.0 * PI;

/// One row of the coefficient report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleCoefficients {
    pub j: usize,
    pub a: f64,
    pub b: f64,
    pub e2: f64,
    pub e3: f64,
    pub e4: f64,
    pub volume_factor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RgCoefficients {
    pub alpha_sq: f64,
    pub l: u32,
    pub rows: Vec<ScaleCoefficients>,
}

impl RgCoefficients {
    /// CSV with columns j, a, b, e2, e3, e4, volume_factor.
    pub fn write_csv<W: Write>(&self, out: W) -> RgResult<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        let err = |e: csv::Error| RgError::Io(std::io::Error::other(e.to_string()));
        w.write_record(["j", "a", "b", "e2", "e3", "e4", "volume_factor"]).map_err(err)?;
        for r in &self.rows {
            w.write_record(&[
                r.j.to_string(),
                r.a.to_string(),
                r.b.to_string(),
                r.e2.to_string(),
                r.e3.to_string(),
                r.e4.to_string(),
                r.volume_factor.to_string(),
            ])
            .map_err(err)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// All coefficients for the given scales.
pub fn coefficients(stack: &CovarianceStack, scales: &[usize], alpha_sq: f64) -> RgResult<RgCoefficients> {
    let rows = scales
        .iter()
        .map(|&j| {
            let (e2, e3, e4) = energy_coeffs(stack, j, alpha_sq)?;
            Ok(ScaleCoefficients {
                j,
                a: coeff_a(stack, j, alpha_sq)?,
                b: coeff_b(stack, j, alpha_sq)?,
                e2,
                e3,
                e4,
                volume_factor: volume_factor(stack, j, alpha_sq),
            })
        })
        .collect::<RgResult<Vec<_>>>()?;
    Ok(RgCoefficients { alpha_sq, l: stack.lattice().l(), rows })
}

/// L² e^{−(α²/2)Γ_j(0)}.
pub fn volume_factor(stack: &CovarianceStack, j: usize, alpha_sq: f64) -> f64 {
    let l = f64::from(stack.lattice().l());
    l * l * (-0.5 * alpha_sq * stack.gamma_origin(j)).exp()
}

/// (a, b) = (8π² e^{8πc} ln L, 2 ln L), where c is the constant of
/// Γ̃_{∞,0}(x|0) ≈ −(1/2π) ln|x| + c.
pub fn limit_constants(l: u32, alpha_sq: f64, c: f64) -> RgResult<(f64, f64)> {
    if (alpha_sq - ALPHA_SQ_KT).abs() > 1e-12 * ALPHA_SQ_KT {
        return Err(RgError::NotKtPoint(alpha_sq));
    }
    let ln_l = f64::from(l).ln();
    Ok((8.0 * PI * PI * (ALPHA_SQ_KT * c).exp() * ln_l, 2.0 * ln_l))
}

/// Σ_y |y|² e^{−α²Γ_j(0)}(e^{α²Γ_j(y)} − 1) and the same sum without |y|².
fn local_sums(stack: &CovarianceStack, j: usize, alpha_sq: f64) -> RgResult<(f64, f64)> {
    let t = stack.table(j)?;
    let pre = (-alpha_sq * t.origin()).exp();
    let second = t.lattice_sum(|y, v| (y[0] * y[0] + y[1] * y[1]) * (alpha_sq * v).exp_m1());
    let zeroth = t.lattice_sum(|_, v| (alpha_sq * v).exp_m1());
    Ok((pre * second, pre * zeroth))
}

/// a_j = (α²/2) Σ_y |y|² [w_b(y)(e^{−α²Γ_j(0|y)} − 1) + e^{−α²Γ_j(0)}(e^{α²Γ_j(y)} − 1) L^{−4j}].
pub fn coeff_a(stack: &CovarianceStack, j: usize, alpha_sq: f64) -> RgResult<f64> {
    let f = Fields::new(stack, j, alpha_sq, 0, true)?;
    let weights = f.wb_weights();
    let gj0 = f.origin(j);
    let near = f.quarter_sum(|y| {
        let r2 = (y[0] * y[0] + y[1] * y[1]) as f64;
        r2 * f.w_b(&weights, y) * (-alpha_sq * (gj0 - f.g(j, y))).exp_m1()
    });
    let (far, _) = local_sums(stack, j, alpha_sq)?;
    Ok(0.5 * alpha_sq * (near + far * f.lpow(-4 * j as i32)))
}

/// Σ_k λ f_n(λ) f_j(λ) / P² over the momentum disk of scale j, for n = 0..=j
/// (the y-sums Σ_{y, μ∈{e₁,e₂}} ∂^μΓ_n ∂^μΓ_j, by Parseval).
fn gradient_overlaps(stack: &CovarianceStack, j: usize, power: i32) -> RgResult<Vec<f64>> {
    let p = stack.table(j)?.period() as f64;
    let disk = stack.momentum_disk(j);
    Ok((0..=j)
        .map(|n| {
            crate::par::sum(disk.len(), |i| {
                let (_, _, lam, mult) = disk[i];
                mult * lam.powi(power) * stack.symbol(n, lam) * stack.symbol(j, lam)
            }) / (p * p)
        })
        .collect())
}

fn b_from_overlaps(stack: &CovarianceStack, j: usize, alpha_sq: f64, s: &[f64]) -> f64 {
    let l = f64::from(stack.lattice().l());
    let mut acc = s[j];
    for (n, &snj) in s.iter().enumerate().take(j) {
        acc += 2.0 * snj * (-0.5 * alpha_sq * stack.prefix_origin(j - 1, n)).exp() * l.powi(2 * (j - n) as i32);
    }
    0.5 * alpha_sq * acc
}

/// b_j = (α²/2) Σ_{y,μ} [(∂^μΓ_j)² + 2 Σ_{n<j} ∂^μΓ_n ∂^μΓ_j e^{−(α²/2)Γ_{j−1,n}(0)} L^{2(j−n)}],
/// the μ-sum carrying weight ½ over the four unit vectors.
pub fn coeff_b(stack: &CovarianceStack, j: usize, alpha_sq: f64) -> RgResult<f64> {
    check_scale(stack, j)?;
    fields::check_exponents(stack, j, alpha_sq)?;
    let s = gradient_overlaps(stack, j, 1)?;
    Ok(b_from_overlaps(stack, j, alpha_sq, &s))
}

/// b_j by the position-space sum; needs full-resolution tables up to scale j.
pub fn coeff_b_direct(stack: &CovarianceStack, j: usize, alpha_sq: f64) -> RgResult<f64> {
    require_full(stack, j, alpha_sq)?;
    let g = |n: usize, y: [i64; 2]| stack.gamma(n, y);
    let rad = stack.table(j)?.radius() as i64 + 1;
    let overlap = |n: usize| {
        crate::par::sum((2 * rad + 1) as usize, |k| {
            let a = k as i64 - rad;
            let mut acc = 0.0;
            for b in -rad..=rad {
                for mu in [[1, 0], [0, 1]] {
                    let dn = g(n, [a + mu[0], b + mu[1]]) - g(n, [a, b]);
                    let dj = g(j, [a + mu[0], b + mu[1]]) - g(j, [a, b]);
                    acc += dn * dj;
                }
            }
            acc
        })
    };
    let s: Vec<f64> = (0..=j).map(overlap).collect();
    Ok(b_from_overlaps(stack, j, alpha_sq, &s))
}

fn require_full(stack: &CovarianceStack, j: usize, alpha_sq: f64) -> RgResult<()> {
    check_scale(stack, j)?;
    fields::check_exponents(stack, j, alpha_sq)?;
    for n in 0..=j {
        let t = stack.table(n)?;
        if t.stride() != 1 {
            let side = 2 * t.radius() + 1;
            return Err(RgError::Budget { j, entries: side * side, budget: stack.options().max_table_entries });
        }
    }
    Ok(())
}

/// (ê₂, ê₃, ê₄) of scale j.
///
/// ê₂ = −(L^{2j}/2) Σ_μ (∂^μ∂^μΓ_j)(0), ê₃ = (L^{2j}/4) Σ_{y,μ,ν} [∂∂Γ_{j,0} + 2∂∂Γ_{j−1,0}](y) ∂∂Γ_j(y|0),
/// ê₄ = 2L^{2j} Σ_y w_b(y)[e^{−α²Γ_j(0|y)} − 1 − (α²/2)Σ_{μν}∂^μ∂^νΓ_j(0)y^μy^ν]
///      + L^{−2j} Σ_y e^{−α²Γ_j(0)}(e^{α²Γ_j(y)} − 1).
pub fn energy_coeffs(stack: &CovarianceStack, j: usize, alpha_sq: f64) -> RgResult<(f64, f64, f64)> {
    let f = Fields::new(stack, j, alpha_sq, 0, true)?;
    let l2j = f.lpow(2 * j as i32);
    let g = |y: [i64; 2]| stack.gamma_exact(j, y);
    let (g0, g1, g2) = (g([0, 0]), g([1, 0]), g([2, 0]));
    // the two axes agree by symmetry of the symbol
    let e2 = -0.5 * l2j * 2.0 * (g2 - 2.0 * g1 + g0);

    let s = gradient_overlaps(stack, j, 2)?;
    let lower: f64 = s[..j].iter().sum();
    let e3 = 0.25 * l2j * (s[j] + 3.0 * lower);

    let weights = f.wb_weights();
    let half_curv = 0.5 * (g2 - g0);
    let near = f.quarter_sum(|y| {
        let t = half_curv * (y[0] * y[0] + y[1] * y[1]) as f64;
        let wb = f.w_b(&weights, y);
        if wb == 0.0 {
            return 0.0;
        }
        wb * ((-alpha_sq * (g0 - f.g(j, y))).exp_m1() - 0.5 * alpha_sq * t)
    });
    let (_, zeroth) = local_sums(stack, j, alpha_sq)?;
    let e4 = 2.0 * l2j * near + zeroth / l2j;
    Ok((e2, e3, e4))
}

/// ê₃ by the position-space sum with forward differences; full tables only.
pub fn e3_direct(stack: &CovarianceStack, j: usize, alpha_sq: f64) -> RgResult<f64> {
    require_full(stack, j, alpha_sq)?;
    let g = |n: usize, y: [i64; 2]| stack.gamma(n, y);
    let rad = stack.table(j)?.radius() as i64 + 2;
    let dd = |n: usize, y: [i64; 2], mu: [i64; 2], nu: [i64; 2]| {
        g(n, [y[0] + mu[0] + nu[0], y[1] + mu[1] + nu[1]]) - g(n, [y[0] + mu[0], y[1] + mu[1]])
            - g(n, [y[0] + nu[0], y[1] + nu[1]])
            + g(n, y)
    };
    let dirs = [[1i64, 0], [0, 1], [-1, 0], [0, -1]];
    let total = crate::par::sum((2 * rad + 1) as usize, |k| {
        let a = k as i64 - rad;
        let mut acc = 0.0;
        for b in -rad..=rad {
            let y = [a, b];
            for mu in dirs {
                for nu in dirs {
                    let dj = dd(j, y, mu, nu);
                    let lower: f64 = (0..j).map(|n| dd(n, y, mu, nu)).sum();
                    let dj0 = dd(j, [0, 0], mu, nu);
                    acc += (dj + 3.0 * lower) * (dj - dj0);
                }
            }
        }
        acc
    });
    // weight ½ for each of the two direction sums
    let l = f64::from(stack.lattice().l());
    Ok(0.25 * l.powi(2 * j as i32) * 0.25 * total)
}

/// The summand of the first sum of ê₄ at y, for the Taylor check near y = 0.
pub fn e4_summand(stack: &CovarianceStack, j: usize, alpha_sq: f64, y: [i64; 2]) -> RgResult<f64> {
    let f = Fields::new(stack, j, alpha_sq, 0, true)?;
    let weights = f.wb_weights();
    let (g0, g2) = (stack.gamma_exact(j, [0, 0]), stack.gamma_exact(j, [2, 0]));
    let t = 0.5 * (g2 - g0) * (y[0] * y[0] + y[1] * y[1]) as f64;
    let gy = stack.gamma_exact(j, y);
    Ok(f.w_b(&weights, y) * ((-alpha_sq * (g0 - gy)).exp_m1() - 0.5 * alpha_sq * t))
}

/// Σ_y ∂^μ∂^νΓ_j(y) for μ, ν ∈ {e₁, e₂}, and the off-diagonal and diagonal
/// entries of Σ_y e^{−α²Γ_j(0)}(e^{α²Γ_j(y)} − 1) y^μ y^ν. Full tables only.
pub fn cancellation_sums(stack: &CovarianceStack, j: usize, alpha_sq: f64) -> RgResult<([f64; 3], [f64; 3])> {
    let t = stack.table(j)?;
    if t.stride() != 1 {
        let entries = t.radius() * t.radius();
        return Err(RgError::Budget { j, entries, budget: 0 });
    }
    let rad = t.radius() as i64 + 2;
    let pre = (-alpha_sq * t.origin()).exp();
    let rows = crate::par::map((2 * rad + 1) as usize, |k| {
        let a = k as i64 - rad;
        let mut d = [0.0; 3];
        let mut m = [0.0; 3];
        for b in -rad..=rad {
            let g = |u: i64, v: i64| t.value([a + u, b + v]);
            let g0 = g(0, 0);
            d[0] += g(2, 0) - 2.0 * g(1, 0) + g0;
            d[1] += g(1, 1) - g(1, 0) - g(0, 1) + g0;
            d[2] += g(0, 2) - 2.0 * g(0, 1) + g0;
            let e = pre * (alpha_sq * g0).exp_m1();
            m[0] += e * (a * a) as f64;
            m[1] += e * (a * b) as f64;
            m[2] += e * (b * b) as f64;
        }
        (d, m)
    });
    let mut d = [0.0; 3];
    let mut m = [0.0; 3];
    for (rd, rm) in rows {
        for i in 0..3 {
            d[i] += rd[i];
            m[i] += rm[i];
        }
    }
    Ok((d, m))
}
