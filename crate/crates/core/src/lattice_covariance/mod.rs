//! Torus Yukawa/Coulomb potentials and their multiscale finite-range
//! decomposition W_Λ(x;m) = Σ_{j<R} Γ_j(x) + Γ_{≥R}(x;m).

mod continuum;
mod cutoff;
mod io;
mod stack;
mod table;

pub use continuum::{coulomb_constant_c, coulomb_constant_window, gamma_tilde, tilde_c, w_profile, CoulombConstant};


pub use cutoff::{build_cutoffs, lambda_of, theta_of_lambda, CutoffFamily, Taper};

pub use io::{read_stack, write_stack};
pub use stack::{decompose, CovarianceStack, DecomposeOptions, ScaleReport};
pub use table::{even_transform, KernelTable, QuarterGrid};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CovError {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),
    #[error("cutoff construction failed: {0}")]
    Construction(String),
    #[error("scale {scale}: {reason}")]
    Decomposition { scale: usize, reason: String },
    #[error("massless potential needs the normalized form (zero mode)")]
    ZeroMode,
    #[error("quadrature did not converge: residual {residual:e}")]
    Quadrature { residual: f64 },
    #[error("tail of the continuum potential is not flat: residual {residual:e}")]
    NonFlatTail { residual: f64 },
    #[error("scale {0} out of range")]
    ScaleOutOfRange(usize),
    #[error("stack file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type CovResult<T> = Result<T, CovError>;

/// Periodic square lattice of side L^R with fine base γ (γ^M = L) and Yukawa mass m.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorusLattice {
    l: u32,
    r: u32,
    gamma: u32,
    m_fine: u32,
    mass: f64,
    side: u64,
}

impl TorusLattice {
    pub fn new(l: u32, r: u32, gamma: u32, mass: f64) -> CovResult<TorusLattice> {
        if l < 3 || l % 2 == 0 {
            return Err(CovError::InvalidLattice(format!("L = {l} must be odd and > 1")));
        }
        if r == 0 {
            return Err(CovError::InvalidLattice("R must be positive".into()));
        }
        if gamma < 3 || gamma % 2 == 0 {
            return Err(CovError::InvalidLattice(format!("gamma = {gamma} must be odd and >= 3")));
        }
        if !(mass >= 0.0 && mass.is_finite()) {
            return Err(CovError::InvalidLattice(format!("mass {mass} must be finite and >= 0")));
        }
        let mut m_fine = 0;
        let mut p = 1u64;
        while p < u64::from(l) {
            p *= u64::from(gamma);
            m_fine += 1;
        }
        if p != u64::from(l) {
            return Err(CovError::InvalidLattice(format!("L = {l} is not a power of gamma = {gamma}")));
        }
        let side = u64::from(l)
            .checked_pow(r)
            .filter(|&s| s < (1 << 40))
            .ok_or_else(|| CovError::InvalidLattice(format!("side {l}^{r} too large")))?;
        Ok(TorusLattice { l, r, gamma, m_fine, mass, side })
    }

    /// The usual choice γ = 3.
    pub fn with_l(l: u32, r: u32, mass: f64) -> CovResult<TorusLattice> {
        TorusLattice::new(l, r, 3, mass)
    }

    pub fn l(&self) -> u32 {
        self.l
    }
    pub fn r(&self) -> u32 {
        self.r
    }
    pub fn gamma(&self) -> u32 {
        self.gamma
    }
    pub fn m_fine(&self) -> u32 {
        self.m_fine
    }
    pub fn mass(&self) -> f64 {
        self.mass
    }
    pub fn side(&self) -> u64 {
        self.side
    }
    pub fn volume(&self) -> f64 {
        (self.side as f64) * (self.side as f64)
    }

    pub fn with_mass(&self, mass: f64) -> TorusLattice {
        TorusLattice { mass, ..*self }
    }

    /// Representative of x in (−side/2, side/2]².
    pub fn reduce(&self, x: [i64; 2]) -> [i64; 2] {
        let s = self.side as i64;
        let red = |v: i64| {
            let r = v.rem_euclid(s);
            if r > s / 2 {
                r - s
            } else {
                r
            }
        };
        [red(x[0]), red(x[1])]
    }
}

/// Cosine table cos(2πn/side), n < side, for direct momentum sums.
fn cos_table(side: usize) -> Vec<f64> {
    (0..side)
        .map(|n| (2.0 * std::f64::consts::PI * n as f64 / side as f64).cos())
        .collect()
}

fn lambda_table(side: usize) -> Vec<f64> {
    (0..side)
        .map(|n| {
            let s = (std::f64::consts::PI * n as f64 / side as f64).sin();
            4.0 * s * s
        })
        .collect()
}

/// W_Λ(x;m) by the direct momentum sum over Λ*.
pub fn torus_yukawa(lattice: &TorusLattice, x: [i64; 2]) -> CovResult<f64> {
    let m2 = lattice.mass * lattice.mass;
    if m2 == 0.0 {
        return Err(CovError::ZeroMode);
    }
    Ok(momentum_sum(lattice, x, |lam| 1.0 / (m2 + lam), true))
}

/// W_Λ(x|0) = (1/|Λ|) Σ_{k≠0} (e^{ikx} − 1)/λ(k).
pub fn normalized_potential(lattice: &TorusLattice, x: [i64; 2]) -> f64 {
    let s = lattice.side as usize;
    let xr = lattice.reduce(x);
    if xr == [0, 0] {
        return 0.0;
    }
    let c = cos_table(s);
    let lam = lambda_table(s);
    let (x0, x1) = (xr[0].rem_euclid(s as i64) as usize, xr[1].rem_euclid(s as i64) as usize);
    let rows = crate::par::map(s, |n0| {
        let mut acc = 0.0;
        for n1 in 0..s {
            if n0 == 0 && n1 == 0 {
                continue;
            }
            let ph = (n0 * x0 + n1 * x1) % s;
            acc += (c[ph] - 1.0) / (lam[n0] + lam[n1]);
        }
        acc
    });
    rows.into_iter().sum::<f64>() / lattice.volume()
}

/// (1/|Λ|) Σ_k cos(k·x) g(λ(k)), optionally including the zero mode.
pub(crate) fn momentum_sum(lattice: &TorusLattice, x: [i64; 2], g: impl Fn(f64) -> f64 + Sync, zero: bool) -> f64 {
    let s = lattice.side as usize;
    let c = cos_table(s);
    let lam = lambda_table(s);
    let xr = lattice.reduce(x);
    let (x0, x1) = (xr[0].rem_euclid(s as i64) as usize, xr[1].rem_euclid(s as i64) as usize);
    let rows = crate::par::map(s, |n0| {
        let mut acc = 0.0;
        for n1 in 0..s {
            if !zero && n0 == 0 && n1 == 0 {
                continue;
            }
            let ph = (n0 * x0 + n1 * x1) % s;
            acc += c[ph] * g(lam[n0] + lam[n1]);
        }
        acc
    });
    rows.into_iter().sum::<f64>() / lattice.volume()
}

/// Full table of W_Λ(·;m) (m > 0) or W_Λ(·|0) (m = 0) on the fundamental quarter.
pub fn yukawa_table(lattice: &TorusLattice) -> QuarterGrid {
    let side = lattice.side as usize;
    let m2 = lattice.mass * lattice.mass;
    let half = (side - 1) / 2;
    let lam = lambda_table(side);
    if m2 > 0.0 {
        even_transform(side, half + 1, 1.0, |n0, n1| 1.0 / (m2 + lam[n0] + lam[n1]))
    } else {
        let g = even_transform(side, half + 1, 1.0, |n0, n1| {
            if n0 == 0 && n1 == 0 {
                0.0
            } else {
                1.0 / (lam[n0] + lam[n1])
            }
        });
        let g0 = g.get(0, 0);
        g.map(|v| v - g0)
    }
}
