//! Full-resolution views of Γ_0, …, Γ_j around the origin, as needed by the
//! y-sums of one scale.

use std::borrow::Cow;

use super::{RgError, RgResult};
use crate::lattice_covariance::{CovarianceStack, QuarterGrid};

/// Largest exponent we let through to `exp`.
const EXP_LIMIT: f64 = 700.0;

pub(crate) struct Fields<'a> {
    pub j: usize,
    pub alpha_sq: f64,
    pub l: f64,
    /// ℓ¹ support radius of Γ_{j−1}; the lower kernels live inside it
    pub reach: usize,
    grids: Vec<Cow<'a, QuarterGrid>>,
    origin: Vec<f64>,
}

pub(crate) fn check_scale(stack: &CovarianceStack, j: usize) -> RgResult<()> {
    let max = stack.scales().saturating_sub(1);
    if j == 0 || j > max {
        return Err(RgError::ScaleOutOfRange { j, max });
    }
    Ok(())
}

/// Γ_n(0) ≥ |Γ_n(y)|, so every exponential below is bounded by e^{α²Γ_n(0)}.
pub(crate) fn check_exponents(stack: &CovarianceStack, j: usize, alpha_sq: f64) -> RgResult<()> {
    for n in 0..=j {
        let e = alpha_sq * stack.prefix_origin(j, n);
        if !e.is_finite() || e > EXP_LIMIT {
            return Err(RgError::Overflow { j, n });
        }
    }
    Ok(())
}

impl<'a> Fields<'a> {
    /// Γ_n for n < j over its own support, and Γ_j over [0, reach + margin]²
    /// (Γ_j is skipped when `top` is false).
    pub fn new(stack: &'a CovarianceStack, j: usize, alpha_sq: f64, margin: usize, top: bool) -> RgResult<Fields<'a>> {
        check_scale(stack, j)?;
        check_exponents(stack, j, alpha_sq)?;
        let budget = stack.options().max_table_entries;
        let reach = stack.table(j - 1)?.radius();
        let mut grids = Vec::with_capacity(j + 1);
        for n in 0..=j {
            let t = stack.table(n)?;
            if n == j && !top {
                break;
            }
            let want = if n < j { t.radius() + margin } else { (reach + margin).min(t.radius()) };
            if t.stride() == 1 {
                grids.push(Cow::Borrowed(t.samples()));
                continue;
            }
            let entries = (want + 1) * (want + 1);
            if entries > budget {
                return Err(RgError::Budget { j, entries, budget });
            }
            grids.push(Cow::Owned(t.resample(want)));
        }
        let origin = (0..=j).map(|n| stack.gamma_origin(n)).collect();
        Ok(Fields { j, alpha_sq, l: f64::from(stack.lattice().l()), reach, grids, origin })
    }

    /// Γ_n(y), n ≤ j.
    #[inline]
    pub fn g(&self, n: usize, y: [i64; 2]) -> f64 {
        self.grids[n].at(y)
    }

    pub fn origin(&self, n: usize) -> f64 {
        self.origin[n]
    }

    /// Γ_{hi,lo}(0) = Σ_{i=lo}^{hi} Γ_i(0), zero when lo > hi.
    pub fn prefix0(&self, hi: usize, lo: usize) -> f64 {
        if lo > hi {
            return 0.0;
        }
        self.origin[lo..=hi].iter().sum()
    }

    pub fn lpow(&self, e: i32) -> f64 {
        self.l.powi(e)
    }

    /// Per-n constants of w_b: e^{−α²Γ_{j−1,n+1}(0)} e^{−α²Γ_n(0)} L^{−4n}.
    pub fn wb_weights(&self) -> Vec<f64> {
        let a2 = self.alpha_sq;
        (0..self.j)
            .map(|n| (-a2 * (self.prefix0(self.j - 1, n + 1) + self.origin[n])).exp() * self.lpow(-4 * n as i32))
            .collect()
    }

    /// w_b(y), given the weights from [`Fields::wb_weights`].
    #[inline]
    pub fn w_b(&self, weights: &[f64], y: [i64; 2]) -> f64 {
        let a2 = self.alpha_sq;
        // upper holds Γ_{j−1,n+1}(y) while visiting n from the top down
        let mut upper = 0.0;
        let mut acc = 0.0;
        for n in (0..self.j).rev() {
            let gn = self.g(n, y);
            if gn != 0.0 {
                acc += weights[n] * (a2 * upper).exp() * (a2 * gn).exp_m1();
            }
            upper += gn;
        }
        acc
    }

    /// Σ over the quarter y₀, y₁ ≥ 0 with y₀ + y₁ ≤ reach, each point weighted by
    /// the number of its sign images.
    pub fn quarter_sum(&self, f: impl Fn([i64; 2]) -> f64 + Sync + Send) -> f64 {
        let reach = self.reach;
        crate::par::sum(reach + 1, |a| {
            let m0 = if a > 0 { 2.0 } else { 1.0 };
            let mut acc = 0.0;
            for b in 0..=reach - a {
                let m1 = if b > 0 { 2.0 } else { 1.0 };
                acc += m0 * m1 * f([a as i64, b as i64]);
            }
            acc
        })
    }
}
