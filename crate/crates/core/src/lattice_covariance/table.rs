//! Even kernels on a quarter grid: the cosine transform that builds them from a
//! momentum symbol, and strided (coarse) tables with band-limited interpolation.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::numeric::lagrange_weights;
use crate::par;

/// Values g(i₀, i₁) for 0 ≤ i₀, i₁ < n of a kernel even in each coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct QuarterGrid {
    n: usize,
    data: Vec<f64>,
}

impl QuarterGrid {
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64 + Sync + Send) -> QuarterGrid {
        let rows = par::map(n, |i0| (0..n).map(|i1| f(i0, i1)).collect::<Vec<_>>());
        QuarterGrid { n, data: rows.concat() }
    }

    pub fn zeros(n: usize) -> QuarterGrid {
        QuarterGrid { n, data: vec![0.0; n * n] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i0: usize, i1: usize) -> f64 {
        self.data[i0 * self.n + i1]
    }

    pub fn set(&mut self, i0: usize, i1: usize, v: f64) {
        self.data[i0 * self.n + i1] = v;
    }

    pub fn row(&self, i0: usize) -> &[f64] {
        &self.data[i0 * self.n..(i0 + 1) * self.n]
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> QuarterGrid {
        QuarterGrid { n: self.n, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// Value at a signed lattice point, 0 outside the grid.
    pub fn at(&self, y: [i64; 2]) -> f64 {
        let (a, b) = (y[0].unsigned_abs() as usize, y[1].unsigned_abs() as usize);
        if a < self.n && b < self.n {
            self.get(a, b)
        } else {
            0.0
        }
    }

    /// Σ over all of ℤ² of the even extension, weighted by `w(i₀, i₁, value)`.
    pub fn full_sum(&self, w: impl Fn(usize, usize, f64) -> f64 + Sync + Send) -> f64 {
        par::sum(self.n, |i0| {
            let m0 = if i0 > 0 { 2.0 } else { 1.0 };
            let row = self.row(i0);
            let mut acc = 0.0;
            for (i1, &v) in row.iter().enumerate() {
                let m1 = if i1 > 0 { 2.0 } else { 1.0 };
                acc += m0 * m1 * w(i0, i1, v);
            }
            acc
        })
    }
}

/// g(y) = (scale/p²) Σ_{n ∈ [0,p)²} cos(2π n·y/p) S(n₀, n₁) for y ∈ [0, count)².
///
/// `symbol` is called only for n₀, n₁ ≤ (p−1)/2 and must be even under n → p−n
/// in each coordinate. p must be odd. Also returns the smallest symbol value seen.
pub fn even_transform(
    p: usize,
    count: usize,
    scale: f64,
    symbol: impl Fn(usize, usize) -> f64 + Sync + Send,
) -> QuarterGrid {
    even_transform_min(p, count, scale, symbol).0
}

pub(crate) fn even_transform_min(
    p: usize,
    count: usize,
    scale: f64,
    symbol: impl Fn(usize, usize) -> f64 + Sync + Send,
) -> (QuarterGrid, f64) {
    assert!(p % 2 == 1, "transform length must be odd");
    let h = p.div_ceil(2);
    let count = count.min(h);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(p);

    // rows: T[n₀][y₁] = Σ_{n₁} cos(2π n₁ y₁/p) S(n₀, n₁)
    let rows = par::map(h, |n0| {
        let mut buf = vec![Complex::new(0.0, 0.0); p];
        let mut lo = f64::INFINITY;
        for n1 in 0..h {
            let v = symbol(n0, n1);
            lo = lo.min(v);
            buf[n1].re = v;
            if n1 > 0 {
                buf[p - n1].re = v;
            }
        }
        fft.process(&mut buf);
        (buf[..count].iter().map(|c| c.re).collect::<Vec<_>>(), lo)
    });
    let min_symbol = rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);

    // columns: g(y₀, y₁) = Σ_{n₀} cos(2π n₀ y₀/p) T[n₀][y₁]
    let norm = scale / (p as f64 * p as f64);
    let cols = par::map(count, |y1| {
        let mut buf = vec![Complex::new(0.0, 0.0); p];
        for n0 in 0..h {
            let v = rows[n0].0[y1];
            buf[n0].re = v;
            if n0 > 0 {
                buf[p - n0].re = v;
            }
        }
        fft.process(&mut buf);
        buf[..count].iter().map(|c| c.re * norm).collect::<Vec<_>>()
    });
    drop(rows);
    let mut grid = QuarterGrid::zeros(count);
    for (y1, col) in cols.iter().enumerate() {
        for (y0, &v) in col.iter().enumerate() {
            grid.data[y0 * count + y1] = v;
        }
    }
    (grid, min_symbol)
}

/// Number of nodes of the interpolation stencil.
const STENCIL: usize = 12;

/// A finite-range kernel on ℤ², stored as samples g(s·i) on a quarter grid.
///
/// With stride s = 1 the samples are the kernel itself. With s > 1 the kernel
/// is band-limited to |k| ≤ π/(3s) and other points are interpolated. The
/// samples are even and periodic with period q = p/s (p the physical period).
#[derive(Debug, Clone)]
pub struct KernelTable {
    stride: usize,
    period: usize,
    radius: usize,
    samples: QuarterGrid,
}

impl KernelTable {
    /// `samples` must hold g(s·i) for 0 ≤ i ≤ (period/stride − 1)/2.
    pub fn new(stride: usize, period: usize, radius: usize, samples: QuarterGrid) -> KernelTable {
        assert!(stride >= 1 && period % stride == 0);
        assert_eq!(samples.n(), (period / stride).div_ceil(2));
        KernelTable { stride, period, radius, samples }
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    /// Period of the physical sampling torus.
    pub fn period(&self) -> usize {
        self.period
    }

    /// ℓ¹ radius of the support.
    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn samples(&self) -> &QuarterGrid {
        &self.samples
    }

    pub fn origin(&self) -> f64 {
        self.samples.get(0, 0)
    }

    fn q(&self) -> usize {
        self.period / self.stride
    }

    /// Coarse sample at signed coarse index, using evenness and periodicity.
    #[inline]
    fn coarse(&self, i0: i64, i1: i64) -> f64 {
        let q = self.q() as i64;
        let fold = |i: i64| {
            let r = i.rem_euclid(q);
            r.min(q - r) as usize
        };
        self.samples.get(fold(i0), fold(i1))
    }

    /// g(y), zero outside the support.
    pub fn value(&self, y: [i64; 2]) -> f64 {
        let (a, b) = (y[0].unsigned_abs() as usize, y[1].unsigned_abs() as usize);
        if a + b > self.radius {
            return 0.0;
        }
        let s = self.stride;
        if s == 1 {
            return self.samples.get(a, b);
        }
        let (ia, ra) = (a / s, a % s);
        let (ib, rb) = (b / s, b % s);
        if ra == 0 && rb == 0 {
            return self.samples.get(ia, ib);
        }
        let half = (STENCIL / 2 - 1) as i64;
        let mut wa = [0.0; STENCIL];
        let mut wb = [0.0; STENCIL];
        lagrange_weights(STENCIL, half as f64 + ra as f64 / s as f64, &mut wa);
        lagrange_weights(STENCIL, half as f64 + rb as f64 / s as f64, &mut wb);
        let mut acc = 0.0;
        for (u, wu) in wa.iter().enumerate() {
            let mut row = 0.0;
            for (v, wv) in wb.iter().enumerate() {
                row += wv * self.coarse(ia as i64 - half + u as i64, ib as i64 - half + v as i64);
            }
            acc += wu * row;
        }
        acc
    }

    /// Full-resolution values on [0, n]², zeroed outside the ℓ¹ support.
    pub fn resample(&self, n: usize) -> QuarterGrid {
        let s = self.stride;
        let radius = self.radius;
        if s == 1 {
            let m = self.samples.n();
            return QuarterGrid::from_fn(n + 1, |a, b| {
                if a + b <= radius && a < m && b < m {
                    self.samples.get(a, b)
                } else {
                    0.0
                }
            });
        }
        let half = (STENCIL / 2 - 1) as i64;
        let weights: Vec<[f64; STENCIL]> = (0..s)
            .map(|r| {
                let mut w = [0.0; STENCIL];
                lagrange_weights(STENCIL, half as f64 + r as f64 / s as f64, &mut w);
                w
            })
            .collect();
        // first pass along the second coordinate, for every coarse row in reach
        let first_row = -half;
        let last_row = (n / s) as i64 + STENCIL as i64;
        let rows = par::map((last_row - first_row + 1) as usize, |k| {
            let i0 = first_row + k as i64;
            (0..=n)
                .map(|b| {
                    let (ib, rb) = ((b / s) as i64, b % s);
                    let w = &weights[rb];
                    if rb == 0 {
                        return self.coarse(i0, ib);
                    }
                    (0..STENCIL).map(|v| w[v] * self.coarse(i0, ib - half + v as i64)).sum::<f64>()
                })
                .collect::<Vec<_>>()
        });
        QuarterGrid::from_fn(n + 1, |a, b| {
            if a + b > radius {
                return 0.0;
            }
            let (ia, ra) = ((a / s) as i64, a % s);
            if ra == 0 {
                return rows[(ia - first_row) as usize][b];
            }
            let w = &weights[ra];
            (0..STENCIL)
                .map(|u| w[u] * rows[(ia - half + u as i64 - first_row) as usize][b])
                .sum()
        })
    }

    /// Σ_{y∈ℤ²} φ(y, g(y)) for a φ whose y-profile is band-limited below 2π/s,
    /// via the Poisson identity Σ_y f(y) = s² Σ_i f(s·i).
    pub fn lattice_sum(&self, phi: impl Fn([f64; 2], f64) -> f64 + Sync + Send) -> f64 {
        let s = self.stride as f64;
        let m = self.samples.n();
        let rad = self.radius;
        // coarse indices whose physical point lies inside the support
        let lim = (rad / self.stride).min(m - 1);
        s * s
            * par::sum(lim + 1, |i0| {
                let m0 = if i0 > 0 { 2.0 } else { 1.0 };
                let mut acc = 0.0;
                for i1 in 0..=lim {
                    if (i0 + i1) * self.stride > rad {
                        break;
                    }
                    let m1 = if i1 > 0 { 2.0 } else { 1.0 };
                    let y = [s * i0 as f64, s * i1 as f64];
                    acc += m0 * m1 * phi(y, self.samples.get(i0, i1));
                }
                acc
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn direct(p: usize, y: [usize; 2], s: impl Fn(usize, usize) -> f64) -> f64 {
        let mut acc = 0.0;
        for n0 in 0..p {
            for n1 in 0..p {
                let ph = 2.0 * PI * ((n0 * y[0] + n1 * y[1]) % p) as f64 / p as f64;
                acc += ph.cos() * s(n0.min(p - n0), n1.min(p - n1));
            }
        }
        acc / (p * p) as f64
    }

    #[test]
    fn transform_matches_direct_sum() {
        let sym = |a: usize, b: usize| 1.0 / (1.0 + (a * a + 3 * b) as f64);
        for &p in &[1usize, 3, 9, 15, 27] {
            let (g, lo) = even_transform_min(p, p, 1.0, sym);
            assert_eq!(g.n(), p.div_ceil(2));
            assert!(lo > 0.0);
            for a in 0..g.n() {
                for b in 0..g.n() {
                    let d = direct(p, [a, b], sym);
                    assert!((g.get(a, b) - d).abs() < 1e-14, "p={p} ({a},{b})");
                }
            }
        }
    }

    #[test]
    fn delta_symbol_gives_constant() {
        let g = even_transform(9, 5, 81.0, |a, b| if a == 0 && b == 0 { 1.0 } else { 0.0 });
        assert!(g.values().iter().all(|&v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn full_sum_counts_multiplicity() {
        let g = QuarterGrid::from_fn(3, |_, _| 1.0);
        assert_eq!(g.full_sum(|_, _, v| v), 25.0);
        assert_eq!(g.at([-2, 1]), 1.0);
        assert_eq!(g.at([3, 0]), 0.0);
    }

    /// A Gaussian band-limited well inside π/(3s), sampled at stride s.
    fn smooth_table(s: usize, p: usize) -> (KernelTable, impl Fn(f64, f64) -> f64) {
        let sigma = 8.0 * s as f64;
        let f = move |a: f64, b: f64| (-(a * a + b * b) / (2.0 * sigma * sigma)).exp();
        let q = p / s;
        let samples = QuarterGrid::from_fn(q.div_ceil(2), |i0, i1| f((i0 * s) as f64, (i1 * s) as f64));
        (KernelTable::new(s, p, p, samples), f)
    }

    #[test]
    fn interpolation_reproduces_smooth_kernel() {
        let (t, f) = smooth_table(9, 729);
        let full = t.resample(100);
        for &(a, b) in &[(0usize, 0usize), (1, 0), (4, 7), (13, 22), (50, 3), (99, 100)] {
            let exact = f(a as f64, b as f64);
            assert!((t.value([a as i64, b as i64]) - exact).abs() < 1e-9);
            assert!((full.get(a, b) - exact).abs() < 1e-9, "({a},{b})");
            assert_eq!(full.get(a, b).to_bits(), t.value([a as i64, -(b as i64)]).to_bits());
        }
    }

    #[test]
    fn poisson_sum_matches_lattice_sum() {
        let (t, f) = smooth_table(9, 2187);
        let coarse = t.lattice_sum(|_, v| v);
        let mut fine = 0.0;
        for a in -1093i64..=1093 {
            for b in -1093i64..=1093 {
                fine += f(a as f64, b as f64);
            }
        }
        assert!((coarse - fine).abs() < 1e-10 * fine, "{coarse} {fine}");
    }
}
