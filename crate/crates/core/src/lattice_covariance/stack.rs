//! The multiscale stack Γ_0, …, Γ_{R−1} and the tail Γ_{≥R}.
//!
//! Γ_j has symbol f_j = (F_{jM} − F_{(j+1)M})/λ, the kernel of a polynomial of
//! degree (L^{j+1}−1)/2 in λ divided by λ. Its support is the ℓ¹ ball of radius
//! (L^{j+1}−3)/2, so a transform of length L^{j+1} samples it without aliasing.

use std::f64::consts::PI;

use super::cutoff::{theta_of_lambda, CutoffFamily};
use super::table::{even_transform_min, KernelTable, QuarterGrid};
use super::{yukawa_table, CovError, CovResult, TorusLattice};
use crate::par;

#[derive(Debug, Clone, PartialEq)]
pub struct DecomposeOptions {
    /// Allowed |Γ_j(x)|/Γ_j(0) outside the support.
    pub leakage_tol: f64,
    /// Allowed negative Fourier mode, relative to f_j(0).
    pub psd_tol: f64,
    /// Largest quarter table stored at full resolution; above it tables are strided.
    pub max_table_entries: usize,
    /// Tail and fine components are tabulated only up to this torus side.
    pub tail_max_side: u64,
    /// Symbol values below symbol_eps·f_j(0) are dropped.
    pub symbol_eps: f64,
    pub fine_components: bool,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        DecomposeOptions {
            leakage_tol: 1e-6,
            psd_tol: 1e-10,
            max_table_entries: 12_000_000,
            tail_max_side: 729,
            symbol_eps: 1e-17,
            fine_components: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleReport {
    pub j: usize,
    pub period: usize,
    pub stride: usize,
    pub radius: usize,
    pub origin: f64,
    /// max |Γ_j(x)|/Γ_j(0) over sampled x outside the ℓ¹ support
    pub leakage: f64,
    /// smallest symbol value, relative to f_j(0)
    pub min_mode: f64,
    /// momentum radius beyond which the symbol is dropped
    pub cut_momentum: f64,
}

#[derive(Debug, Clone)]
pub struct CovarianceStack {
    lattice: TorusLattice,
    cutoffs: CutoffFamily,
    options: DecomposeOptions,
    tables: Vec<KernelTable>,
    cut_lambda: Vec<f64>,
    reports: Vec<ScaleReport>,
    tail: Option<QuarterGrid>,
    fine: Option<Vec<QuarterGrid>>,
}

fn lambda_grid(p: usize, count: usize) -> Vec<f64> {
    (0..count)
        .map(|n| {
            let s = (PI * n as f64 / p as f64).sin();
            4.0 * s * s
        })
        .collect()
}

fn scale_report(j: usize, table: &KernelTable, min_mode: f64, cut_momentum: f64) -> ScaleReport {
    let samples = table.samples();
    let (stride, radius) = (table.stride(), table.radius());
    let count = samples.n();
    let origin = table.origin();
    let leakage = par::map(count, |i0| {
        let mut worst: f64 = 0.0;
        for i1 in 0..count {
            if (i0 + i1) * stride > radius {
                worst = worst.max(samples.get(i0, i1).abs());
            }
        }
        worst
    })
    .into_iter()
    .fold(0.0, f64::max)
        / origin;
    ScaleReport { j, period: table.period(), stride, radius, origin, leakage, min_mode, cut_momentum }
}

fn check_cutoffs(lattice: &TorusLattice, cutoffs: &CutoffFamily) -> CovResult<()> {
    let r = lattice.r() as usize;
    let m = lattice.m_fine() as usize;
    if cutoffs.gamma() != lattice.gamma() || cutoffs.m_fine() != lattice.m_fine() {
        return Err(CovError::InvalidLattice(format!(
            "cutoffs built for gamma = {}, M = {}; lattice has gamma = {}, M = {}",
            cutoffs.gamma(),
            cutoffs.m_fine(),
            lattice.gamma(),
            lattice.m_fine()
        )));
    }
    if cutoffs.horizon() < r * m {
        return Err(CovError::InvalidLattice(format!(
            "cutoff horizon {} below R·M = {}",
            cutoffs.horizon(),
            r * m
        )));
    }
    Ok(())
}

/// Decompose W_Λ(·;m) over the scales of `lattice`.
pub fn decompose(
    lattice: &TorusLattice,
    cutoffs: &CutoffFamily,
    options: &DecomposeOptions,
) -> CovResult<CovarianceStack> {
    let l = lattice.l() as usize;
    let r = lattice.r() as usize;
    let m = lattice.m_fine() as usize;
    check_cutoffs(lattice, cutoffs)?;

    let mut tables = Vec::with_capacity(r);
    let mut reports = Vec::with_capacity(r);
    let mut cut_lambda = Vec::with_capacity(r);
    let mut p = l;
    for j in 0..r {
        let (h0, h1) = (j * m, (j + 1) * m);
        let radius = cutoffs.band_radius(h1) as usize;
        let theta_c = cutoffs.band_cut(h0, h1, options.symbol_eps);
        let lam_c = 8.0 * (0.5 * theta_c).sin().powi(2);
        let k_c = 0.5 * PI * lam_c.sqrt();

        // smallest stride (a power of γ) that fits the table budget
        let mut stride = 1usize;
        while (p / stride).div_ceil(2).pow(2) > options.max_table_entries {
            stride *= lattice.gamma() as usize;
            if stride >= p {
                return Err(CovError::Decomposition { scale: j, reason: "table budget too small".into() });
            }
        }
        if stride > 1 && stride as f64 * k_c > PI / 3.0 {
            return Err(CovError::Decomposition {
                scale: j,
                reason: format!("band up to |k| = {k_c:.3e} too wide for stride {stride}"),
            });
        }
        let q = p / stride;
        let count = q.div_ceil(2);
        let lam = lambda_grid(p, count);
        let f0 = cutoffs.band_symbol(h0, h1, 0.0);
        let (samples, min_symbol) = even_transform_min(q, count, 1.0 / (stride * stride) as f64, |n0, n1| {
            let x = lam[n0] + lam[n1];
            if x > lam_c {
                0.0
            } else {
                cutoffs.band_symbol(h0, h1, x)
            }
        });
        let min_mode = min_symbol / f0;
        if min_mode < -options.psd_tol {
            return Err(CovError::Decomposition {
                scale: j,
                reason: format!("negative Fourier mode {min_mode:e} relative to f(0)"),
            });
        }
        let table = KernelTable::new(stride, p, radius, samples);
        reports.push(scale_report(j, &table, min_mode, k_c));
        tables.push(table);
        cut_lambda.push(lam_c);
        p *= l;
    }

    let side = lattice.side();
    let (tail, fine) = if side <= options.tail_max_side {
        let s = side as usize;
        let count = s.div_ceil(2);
        let lam = lambda_grid(s, count);
        let hr = r * m;
        let m2 = lattice.mass() * lattice.mass();
        let tail = if m2 > 0.0 {
            even_transform_min(s, count, 1.0, |n0, n1| {
                let x = lam[n0] + lam[n1];
                1.0 / (m2 + x) - cutoffs.band_symbol(0, hr, x)
            })
            .0
        } else {
            let g = even_transform_min(s, count, 1.0, |n0, n1| cutoffs.tail_symbol(hr, lam[n0] + lam[n1])).0;
            let g0 = g.get(0, 0);
            g.map(|v| v - g0)
        };
        let fine = options.fine_components.then(|| {
            (0..hr)
                .map(|h| {
                    even_transform_min(s, count, 1.0, |n0, n1| cutoffs.band_symbol(h, h + 1, lam[n0] + lam[n1])).0
                })
                .collect()
        });
        (Some(tail), fine)
    } else {
        (None, None)
    };

    Ok(CovarianceStack {
        lattice: *lattice,
        cutoffs: cutoffs.clone(),
        options: options.clone(),
        tables,
        cut_lambda,
        reports,
        tail,
        fine,
    })
}

impl CovarianceStack {
    /// Rebuild a stack from stored tables; the symbol cuts and reports are recomputed.
    pub(crate) fn from_parts(
        lattice: TorusLattice,
        cutoffs: CutoffFamily,
        options: DecomposeOptions,
        tables: Vec<KernelTable>,
        tail: Option<QuarterGrid>,
    ) -> CovResult<CovarianceStack> {
        check_cutoffs(&lattice, &cutoffs)?;
        let m = lattice.m_fine() as usize;
        let mut cut_lambda = Vec::with_capacity(tables.len());
        let mut reports = Vec::with_capacity(tables.len());
        for (j, t) in tables.iter().enumerate() {
            let theta_c = cutoffs.band_cut(j * m, (j + 1) * m, options.symbol_eps);
            let lam_c = 8.0 * (0.5 * theta_c).sin().powi(2);
            reports.push(scale_report(j, t, f64::NAN, 0.5 * PI * lam_c.sqrt()));
            cut_lambda.push(lam_c);
        }
        Ok(CovarianceStack { lattice, cutoffs, options, tables, cut_lambda, reports, tail, fine: None })
    }

    pub fn lattice(&self) -> &TorusLattice {
        &self.lattice
    }

    pub fn cutoffs(&self) -> &CutoffFamily {
        &self.cutoffs
    }

    pub fn options(&self) -> &DecomposeOptions {
        &self.options
    }

    /// Number of scales R.
    pub fn scales(&self) -> usize {
        self.tables.len()
    }

    pub fn reports(&self) -> &[ScaleReport] {
        &self.reports
    }

    pub fn table(&self, j: usize) -> CovResult<&KernelTable> {
        self.tables.get(j).ok_or(CovError::ScaleOutOfRange(j))
    }

    /// Γ_j(y) on ℤ² (interpolated between samples of a strided table).
    pub fn gamma(&self, j: usize, y: [i64; 2]) -> f64 {
        self.tables[j].value(y)
    }

    pub fn gamma_origin(&self, j: usize) -> f64 {
        self.tables[j].origin()
    }

    /// Γ_{j,n}(0) = Σ_{i=n}^{j} Γ_i(0); zero when n > j.
    pub fn prefix_origin(&self, j: usize, n: usize) -> f64 {
        if n > j {
            return 0.0;
        }
        self.tables[n..=j].iter().map(KernelTable::origin).sum()
    }

    /// f_j(λ) as used for the tables (dropped beyond the cut).
    pub fn symbol(&self, j: usize, lambda: f64) -> f64 {
        if lambda > self.cut_lambda[j] {
            return 0.0;
        }
        let m = self.lattice.m_fine() as usize;
        self.cutoffs.band_symbol(j * m, (j + 1) * m, lambda)
    }

    /// Momenta (n₀, n₁) ≥ 0 of the period-L^{j+1} grid with f_j possibly nonzero,
    /// with λ and the multiplicity of the four sign choices.
    pub fn momentum_disk(&self, j: usize) -> Vec<(usize, usize, f64, f64)> {
        let p = self.tables[j].period();
        let lam_c = self.cut_lambda[j];
        let theta_c = theta_of_lambda(lam_c);
        // λ ≥ 4 sin²(k/2) per coordinate bounds the index range
        let nmax = ((p as f64 * theta_c / (2.0 * PI)).ceil() as usize + 1).min((p - 1) / 2);
        let lam = lambda_grid(p, nmax + 1);
        let mut out = Vec::new();
        for n0 in 0..=nmax {
            for n1 in 0..=nmax {
                let x = lam[n0] + lam[n1];
                if x <= lam_c {
                    let mult = if n0 > 0 { 2.0 } else { 1.0 } * if n1 > 0 { 2.0 } else { 1.0 };
                    out.push((n0, n1, x, mult));
                }
            }
        }
        out
    }

    /// Γ_j(y) by the momentum sum; exact at every point, also for strided tables.
    pub fn gamma_exact(&self, j: usize, y: [i64; 2]) -> f64 {
        let t = &self.tables[j];
        if t.stride() == 1 {
            return t.value(y);
        }
        let (a, b) = (y[0].unsigned_abs() as usize, y[1].unsigned_abs() as usize);
        if a + b > t.radius() {
            return 0.0;
        }
        let p = t.period();
        let w = 2.0 * PI / p as f64;
        let disk = self.momentum_disk(j);
        let acc = par::sum(disk.len(), |i| {
            let (n0, n1, x, mult) = disk[i];
            // even in each coordinate: the four sign choices give cos·cos
            let c0 = (w * ((n0 * a) % p) as f64).cos();
            let c1 = (w * ((n1 * b) % p) as f64).cos();
            mult * c0 * c1 * self.symbol(j, x)
        });
        acc / (p as f64 * p as f64)
    }

    pub fn tail(&self) -> Option<&QuarterGrid> {
        self.tail.as_ref()
    }

    /// C_h for h < R·M, when requested and the torus is small enough.
    pub fn fine_components(&self) -> Option<&[QuarterGrid]> {
        self.fine.as_deref()
    }

    /// Σ_j Γ_j(x) + Γ_{≥R}(x) for x in the fundamental quarter of the torus.
    pub fn total(&self, x: [i64; 2]) -> Option<f64> {
        let tail = self.tail.as_ref()?;
        let xr = self.lattice.reduce(x);
        let mut v = tail.at(xr);
        for j in 0..self.scales() {
            v += self.gamma(j, xr);
        }
        Some(v)
    }

    /// max_x |Σ_jΓ_j(x) + Γ_{≥R}(x) − W_Λ(x)| / |W_Λ(0)| over the torus.
    /// At m = 0 both sides are taken relative to their value at the origin and the
    /// normalization is the largest |W_Λ(x|0)|.
    pub fn telescoping_error(&self) -> Option<f64> {
        self.tail.as_ref()?;
        let w = yukawa_table(&self.lattice);
        let n = w.n();
        let massless = self.lattice.mass() == 0.0;
        let origin_sum: f64 = if massless { (0..self.scales()).map(|j| self.gamma_origin(j)).sum() } else { 0.0 };
        let scale = if massless {
            w.values().iter().fold(0.0f64, |a, &v| a.max(v.abs()))
        } else {
            w.get(0, 0).abs()
        };
        let worst = par::map(n, |a| {
            let mut e: f64 = 0.0;
            for b in 0..n {
                let t = self.total([a as i64, b as i64]).unwrap_or(f64::NAN) - origin_sum;
                e = e.max((t - w.get(a, b)).abs());
            }
            e
        })
        .into_iter()
        .fold(0.0, f64::max);
        Some(worst / scale)
    }

    /// max over the samples of |∂^μΓ_j| and |∂^μ∂^νΓ_j| (forward differences, all
    /// sign choices). Needs a full-resolution table.
    pub fn derivative_sup(&self, j: usize) -> Option<(f64, f64)> {
        let t = &self.tables[j];
        if t.stride() != 1 {
            return None;
        }
        let rad = t.radius() as i64 + 2;
        let dirs: [[i64; 2]; 4] = [[1, 0], [-1, 0], [0, 1], [0, -1]];
        let rows = par::map((2 * rad + 1) as usize, |k| {
            let a = k as i64 - rad;
            let (mut d1, mut d2): (f64, f64) = (0.0, 0.0);
            for b in -rad..=rad {
                let g = |u: i64, v: i64| t.value([a + u, b + v]);
                let g0 = g(0, 0);
                for mu in dirs {
                    let gm = g(mu[0], mu[1]);
                    d1 = d1.max((gm - g0).abs());
                    for nu in dirs {
                        let v = g(mu[0] + nu[0], mu[1] + nu[1]) - gm - g(nu[0], nu[1]) + g0;
                        d2 = d2.max(v.abs());
                    }
                }
            }
            (d1, d2)
        });
        Some(rows.into_iter().fold((0.0, 0.0), |(a, b), (c, d)| (a.max(c), b.max(d))))
    }
}
