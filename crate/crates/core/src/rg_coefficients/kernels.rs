//! The kernels w_a^{μν}, w_b, w_c, w_d^μ, w_e of scale j and their weighted
//! ℓ¹ norms.

use super::fields::Fields;
use super::{RgError, RgResult};
use crate::lattice_covariance::CovarianceStack;

/// Unit vectors in the order used for the μ, ν indices.
pub const DIRECTIONS: [[i64; 2]; 4] = [[1, 0], [0, 1], [-1, 0], [0, -1]];

/// Index permutations of DIRECTIONS under y₀ → −y₀ and y₁ → −y₁.
const FLIP0: [usize; 4] = [2, 1, 0, 3];
const FLIP1: [usize; 4] = [0, 3, 2, 1];

/// Largest materialized table, in entries.
const MAX_SQUARE: usize = 1 << 20;

/// Values on [−radius, radius]², zero outside.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareTable {
    radius: i64,
    data: Vec<f64>,
}

impl SquareTable {
    fn zeros(radius: i64) -> SquareTable {
        let side = (2 * radius + 1) as usize;
        SquareTable { radius, data: vec![0.0; side * side] }
    }

    pub fn radius(&self) -> i64 {
        self.radius
    }

    fn index(&self, y: [i64; 2]) -> Option<usize> {
        let r = self.radius;
        if y[0].abs() > r || y[1].abs() > r {
            return None;
        }
        Some(((y[0] + r) * (2 * r + 1) + y[1] + r) as usize)
    }

    pub fn get(&self, y: [i64; 2]) -> f64 {
        self.index(y).map_or(0.0, |i| self.data[i])
    }

    /// (y, value) over the whole square.
    pub fn iter(&self) -> impl Iterator<Item = ([i64; 2], f64)> + '_ {
        let r = self.radius;
        let side = 2 * r + 1;
        self.data.iter().enumerate().map(move |(i, &v)| ([i as i64 / side - r, i as i64 % side - r], v))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |a, v| a.max(v.abs()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WKernels {
    pub j: usize,
    /// w_a^{μν} at index 4μ + ν
    pub a: Vec<SquareTable>,
    pub b: SquareTable,
    pub c: SquareTable,
    pub d: Vec<SquareTable>,
    pub e: SquareTable,
}

impl WKernels {
    pub fn w_a(&self, mu: usize, nu: usize) -> &SquareTable {
        &self.a[4 * mu + nu]
    }
}

/// Weighted ℓ¹ norms, each multiplied by the L-power that should make it flat in j:
/// L^{−j}Σ|w_a||y| (max over μν), L^{−j}Σ|w_b||y|³, L^{2j}Σ|w_c|, L^{j}Σ|w_d| (max over μ)
/// and L^{j}Σ|w_e||y|.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelNorms {
    pub j: usize,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Point {
    a: [f64; 16],
    b: f64,
    c: f64,
    d: [f64; 4],
    e: f64,
}

/// Offsets reached by y + μ + ν.
const OFFSETS: [[i64; 2]; 13] = [
    [0, 0],
    [1, 0],
    [0, 1],
    [-1, 0],
    [0, -1],
    [2, 0],
    [0, 2],
    [-2, 0],
    [0, -2],
    [1, 1],
    [1, -1],
    [-1, 1],
    [-1, -1],
];

fn offset_index(o: [i64; 2]) -> usize {
    OFFSETS.iter().position(|&p| p == o).expect("offset in stencil")
}

struct Evaluator<'a> {
    f: Fields<'a>,
    wb: Vec<f64>,
    wc: Vec<f64>,
    wd: Vec<f64>,
    we: Vec<f64>,
    /// OFFSETS index of μ, of μ + ν
    single: [usize; 4],
    pair: [[usize; 4]; 4],
}

impl<'a> Evaluator<'a> {
    fn new(stack: &'a CovarianceStack, j: usize, alpha_sq: f64) -> RgResult<Evaluator<'a>> {
        let f = Fields::new(stack, j, alpha_sq, 2, false)?;
        let alpha = alpha_sq.sqrt();
        let wb = f.wb_weights();
        let wc = (0..j)
            .map(|n| 0.5 * (-alpha_sq * (f.prefix0(j - 1, n + 1) + f.origin(n))).exp() * f.lpow(-4 * n as i32))
            .collect();
        let half_top = |n: usize| (-0.5 * alpha_sq * f.prefix0(j - 1, n)).exp() * f.lpow(-2 * n as i32);
        let wd = (0..j).map(|n| 0.5 * alpha * half_top(n)).collect();
        let we = (0..j).map(|n| 0.25 * alpha_sq * half_top(n)).collect();
        let mut single = [0; 4];
        let mut pair = [[0; 4]; 4];
        for (m, mu) in DIRECTIONS.iter().enumerate() {
            single[m] = offset_index(*mu);
            for (n, nu) in DIRECTIONS.iter().enumerate() {
                pair[m][n] = offset_index([mu[0] + nu[0], mu[1] + nu[1]]);
            }
        }
        Ok(Evaluator { f, wb, wc, wd, we, single, pair })
    }

    fn eval(&self, y: [i64; 2]) -> Point {
        let j = self.f.j;
        let a2 = self.f.alpha_sq;
        // g[n][o] = Γ_n(y + o); s[n][o] = Γ_{j−1,n}(y + o), s[j] = 0
        let mut g = vec![[0.0; 13]; j];
        let mut s = vec![[0.0; 13]; j + 1];
        for n in (0..j).rev() {
            for (k, o) in OFFSETS.iter().enumerate() {
                g[n][k] = self.f.g(n, [y[0] + o[0], y[1] + o[1]]);
                s[n][k] = s[n + 1][k] + g[n][k];
            }
        }
        let mut p = Point::default();
        let top = &s[0];
        for m in 0..4 {
            for n in 0..4 {
                let (pm, pn, pmn) = (self.single[m], self.single[n], self.pair[m][n]);
                p.a[4 * m + n] = 0.5 * (top[pmn] - top[pm] - top[pn] + top[0]);
            }
        }
        for n in 0..j {
            let gn = g[n][0];
            if gn != 0.0 {
                p.b += self.wb[n] * (a2 * s[n + 1][0]).exp() * (a2 * gn).exp_m1();
                p.c += self.wc[n] * (-a2 * s[n + 1][0]).exp() * (-a2 * gn).exp_m1();
            }
            let mut sq = 0.0;
            for m in 0..4 {
                let k = self.single[m];
                p.d[m] += self.wd[n] * (g[n][k] - g[n][0]);
                let hi = s[n][k] - s[n][0];
                let lo = s[n + 1][k] - s[n + 1][0];
                sq += hi * hi - lo * lo;
            }
            // weight ½ on the four directions
            p.e += self.we[n] * 0.5 * sq;
        }
        p
    }

    fn radius(&self) -> i64 {
        self.f.reach as i64 + 2
    }
}

fn zero_kernels() -> WKernels {
    let z = SquareTable::zeros(0);
    WKernels { j: 0, a: vec![z.clone(); 16], b: z.clone(), c: z.clone(), d: vec![z.clone(); 4], e: z }
}

fn zero_range(stack: &CovarianceStack, j: usize) -> RgResult<bool> {
    if j >= stack.scales() {
        return Err(RgError::ScaleOutOfRange { j, max: stack.scales().saturating_sub(1) });
    }
    Ok(j == 0)
}

/// Kernel tables of scale j over |y|_∞ ≤ ρ_{j−1} + 2, ρ_{j−1} the support radius
/// of Γ_{j−1}. All kernels vanish at j = 0.
pub fn kernels(stack: &CovarianceStack, j: usize, alpha_sq: f64) -> RgResult<WKernels> {
    if zero_range(stack, j)? {
        return Ok(zero_kernels());
    }
    let ev = Evaluator::new(stack, j, alpha_sq)?;
    let r = ev.radius();
    let side = (2 * r + 1) as usize;
    if side * side > MAX_SQUARE {
        return Err(RgError::Budget { j, entries: side * side, budget: MAX_SQUARE });
    }
    let rows = crate::par::map(side, |k| (0..side).map(|l| ev.eval([k as i64 - r, l as i64 - r])).collect::<Vec<_>>());
    let mut out = WKernels {
        j,
        a: vec![SquareTable::zeros(r); 16],
        b: SquareTable::zeros(r),
        c: SquareTable::zeros(r),
        d: vec![SquareTable::zeros(r); 4],
        e: SquareTable::zeros(r),
    };
    for (i, p) in rows.into_iter().flatten().enumerate() {
        for k in 0..16 {
            out.a[k].data[i] = p.a[k];
        }
        for m in 0..4 {
            out.d[m].data[i] = p.d[m];
        }
        out.b.data[i] = p.b;
        out.c.data[i] = p.c;
        out.e.data[i] = p.e;
    }
    Ok(out)
}

/// The rescaled kernel norms of scale j, without storing the kernels.
pub fn kernel_summability(stack: &CovarianceStack, j: usize, alpha_sq: f64) -> RgResult<KernelNorms> {
    if zero_range(stack, j)? {
        return Ok(KernelNorms { j, a: 0.0, b: 0.0, c: 0.0, d: 0.0, e: 0.0 });
    }
    let ev = Evaluator::new(stack, j, alpha_sq)?;
    let r = ev.radius();
    // every kernel vanishes beyond the ℓ¹ radius r; walk the quarter and
    // unfold the sign images, which permute the direction indices
    #[derive(Clone, Copy)]
    struct Acc {
        a: [f64; 16],
        b: f64,
        c: f64,
        d: [f64; 4],
        e: f64,
    }
    let zero = Acc { a: [0.0; 16], b: 0.0, c: 0.0, d: [0.0; 4], e: 0.0 };
    let rows = crate::par::map((r + 1) as usize, |y0| {
        let y0 = y0 as i64;
        let mut acc = zero;
        for y1 in 0..=(r - y0) {
            let p = ev.eval([y0, y1]);
            let norm = ((y0 * y0 + y1 * y1) as f64).sqrt();
            let mut images: Vec<[usize; 4]> = vec![[0, 1, 2, 3]];
            if y0 > 0 {
                images.push(FLIP0);
            }
            if y1 > 0 {
                images.push(FLIP1);
            }
            if y0 > 0 && y1 > 0 {
                images.push([2, 3, 0, 1]);
            }
            let mult = images.len() as f64;
            for perm in &images {
                // the value of w^{μν} at the image point is w^{perm μ, perm ν}(y)
                for m in 0..4 {
                    for n in 0..4 {
                        acc.a[4 * m + n] += p.a[4 * perm[m] + perm[n]].abs() * norm;
                    }
                    acc.d[m] += p.d[perm[m]].abs();
                }
            }
            acc.b += mult * p.b.abs() * norm.powi(3);
            acc.c += mult * p.c.abs();
            acc.e += mult * p.e.abs() * norm;
        }
        acc
    });
    let mut t = zero;
    for a in rows {
        for k in 0..16 {
            t.a[k] += a.a[k];
        }
        for m in 0..4 {
            t.d[m] += a.d[m];
        }
        t.b += a.b;
        t.c += a.c;
        t.e += a.e;
    }
    let l = ev.f.l;
    let lj = l.powi(j as i32);
    Ok(KernelNorms {
        j,
        a: t.a.iter().fold(0.0f64, |x, &v| x.max(v)) / lj,
        b: t.b / lj,
        c: t.c * lj * lj,
        d: t.d.iter().fold(0.0f64, |x, &v| x.max(v)) * lj,
        e: t.e * lj,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice_covariance::{build_cutoffs, decompose, DecomposeOptions, Taper, TorusLattice};
    use crate::rg_coefficients::ALPHA_SQ_KT;

    fn stack(l: u32, r: u32) -> CovarianceStack {
        let lat = TorusLattice::with_l(l, r, 0.0).unwrap();
        let cut = build_cutoffs(3, lat.m_fine(), (r * lat.m_fine()) as usize, Taper::Hann).unwrap();
        let opts = DecomposeOptions { tail_max_side: 0, ..DecomposeOptions::default() };
        decompose(&lat, &cut, &opts).unwrap()
    }

    #[test]
    fn scale_zero_kernels_vanish() {
        let s = stack(3, 3);
        let k = kernels(&s, 0, ALPHA_SQ_KT).unwrap();
        assert!(k.a.iter().chain(&k.d).chain([&k.b, &k.c, &k.e]).all(|t| t.max_abs() == 0.0));
        assert!(kernels(&s, 3, ALPHA_SQ_KT).is_err());
    }

    #[test]
    fn first_scale_w_a_is_half_second_difference() {
        let s = stack(3, 3);
        let k = kernels(&s, 1, ALPHA_SQ_KT).unwrap();
        let g = |y: [i64; 2]| s.gamma(0, y);
        for (m, mu) in DIRECTIONS.iter().enumerate() {
            for (n, nu) in DIRECTIONS.iter().enumerate() {
                for (y, v) in k.w_a(m, n).iter() {
                    let dd = g([y[0] + mu[0] + nu[0], y[1] + mu[1] + nu[1]]) - g([y[0] + mu[0], y[1] + mu[1]])
                        - g([y[0] + nu[0], y[1] + nu[1]])
                        + g(y);
                    assert!((v - 0.5 * dd).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn streamed_norms_match_tables() {
        let s = stack(3, 4);
        for j in 1..3 {
            let k = kernels(&s, j, ALPHA_SQ_KT).unwrap();
            let n = kernel_summability(&s, j, ALPHA_SQ_KT).unwrap();
            let lj = 3f64.powi(j as i32);
            let r = |y: [i64; 2]| ((y[0] * y[0] + y[1] * y[1]) as f64).sqrt();
            let c: f64 = k.c.iter().map(|(_, v)| v.abs()).sum::<f64>() * lj * lj;
            let b: f64 = k.b.iter().map(|(y, v)| v.abs() * r(y).powi(3)).sum::<f64>() / lj;
            let a = (0..16)
                .map(|i| k.a[i].iter().map(|(y, v)| v.abs() * r(y)).sum::<f64>())
                .fold(0.0, f64::max)
                / lj;
            let d = (0..4).map(|i| k.d[i].iter().map(|(_, v)| v.abs()).sum::<f64>()).fold(0.0, f64::max) * lj;
            let e: f64 = k.e.iter().map(|(y, v)| v.abs() * r(y)).sum::<f64>() * lj;
            for (x, y) in [(a, n.a), (b, n.b), (c, n.c), (d, n.d), (e, n.e)] {
                assert!((x - y).abs() <= 1e-12 * x.abs().max(1e-300), "{x} vs {y}");
            }
        }
    }

    #[test]
    fn kernels_are_even_where_expected() {
        let s = stack(3, 4);
        let k = kernels(&s, 2, ALPHA_SQ_KT).unwrap();
        for (y, v) in k.b.iter() {
            assert_eq!(v, k.b.get([-y[0], y[1]]));
            assert!((k.e.get(y) - k.e.get([y[1], -y[0]])).abs() < 1e-15);
        }
        // each w_d^μ is a sum of differences, so it sums to zero
        for m in 0..4 {
            let total: f64 = k.d[m].iter().map(|(_, v)| v).sum();
            assert!(total.abs() < 1e-14);
        }
    }
}
