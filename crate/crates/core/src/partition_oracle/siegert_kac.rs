//! The Gaussian side of the Siegert–Kac identity, built in real space.
//!
//! With α² = β(1 − s), base mass m_b = m√(1 − s), C = α²(m_b² − Δ)^{−1} and
//! A = (s/α²)(−Δ), every Boltzmann weight at mass m is
//!
//! ```text
//! 𝒩^{1/2} det(1 − CA)^{−1/2} exp(−½ σᵀ(C^{−1} − A)^{−1} σ),
//! 𝒩 = Π_k (m_b² + (1 − s)λ(k)) / (m_b² + λ(k)).
//! ```
//!
//! At m = 0 the zero mode is given unit weight in both C and 𝒩; neutral
//! charge vectors do not see it.

use nalgebra::DMatrix;

use super::{factorial, binomial, ordered_sum, pair_matrix, sector_table, PartitionError, PartitionResult, Potential, DEFAULT_MASSES};
use crate::lattice_covariance::TorusLattice;

#[derive(Debug, Clone, PartialEq)]
pub struct SiegertKacOptions {
    /// split parameters, each in [0, 1/2]
    pub s_values: Vec<f64>,
    /// Yukawa masses; the massless neutral comparison is always added
    pub masses: Vec<f64>,
    /// relative tolerance per coefficient
    pub tolerance: f64,
}

impl Default for SiegertKacOptions {
    fn default() -> Self {
        SiegertKacOptions { s_values: vec![0.0, 0.25], masses: DEFAULT_MASSES.to_vec(), tolerance: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiegertKacRow {
    pub n: usize,
    pub charge: i64,
    /// 0 for the massless neutral comparison
    pub mass: f64,
    pub s: f64,
    pub configuration: f64,
    pub field: f64,
    /// |configuration − field| / max(|configuration|, |field|)
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiegertKacReport {
    pub rows: Vec<SiegertKacRow>,
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// Z(β, z) at m = 0 from the two sides at s = first split value
    pub z_configuration: f64,
    pub z_field: f64,
}

fn laplacian(side: usize) -> DMatrix<f64> {
    let sites = side * side;
    let mut lap = DMatrix::zeros(sites, sites);
    for a in 0..sites {
        let (x0, x1) = (a / side, a % side);
        lap[(a, a)] += 4.0;
        for (d0, d1) in [(1, 0), (side - 1, 0), (0, 1), (0, side - 1)] {
            let b = ((x0 + d0) % side) * side + (x1 + d1) % side;
            lap[(a, b)] -= 1.0;
        }
    }
    lap
}

fn spd_inverse(m: DMatrix<f64>, what: &str) -> PartitionResult<DMatrix<f64>> {
    m.cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| PartitionError::InvalidInput(format!("{what} is not positive definite")))
}

/// (flattened (C^{−1} − A)^{−1}, prefactor 𝒩^{1/2} det(1 − CA)^{−1/2})
fn field_kernel(side: usize, beta: f64, s: f64, mass: f64) -> PartitionResult<(Vec<f64>, f64)> {
    let sites = side * side;
    let lap = laplacian(side);
    let alpha2 = beta * (1.0 - s);
    let mb2 = mass * mass * (1.0 - s);
    let reg = if mass > 0.0 {
        DMatrix::identity(sites, sites) * mb2
    } else {
        DMatrix::from_element(sites, sites, 1.0 / sites as f64)
    };
    let c = spd_inverse(&reg + &lap, "m² − Δ")? * alpha2;
    let a = &lap * (s / alpha2);
    let m = spd_inverse(c.clone(), "C")? - &a;
    let k = spd_inverse(m, "C⁻¹ − A")?;
    let det = (DMatrix::identity(sites, sites) - &c * &a).determinant();
    let mut ln_n = 0.0;
    for n0 in 0..side {
        for n1 in 0..side {
            let lam = [n0, n1].iter().map(|&n| 4.0 * (std::f64::consts::PI * n as f64 / side as f64).sin().powi(2)).sum::<f64>();
            if mass == 0.0 && n0 == 0 && n1 == 0 {
                continue;
            }
            ln_n += ((mb2 + (1.0 - s) * lam) / (mb2 + lam)).ln();
        }
    }
    Ok((k.transpose().as_slice().to_vec(), (0.5 * ln_n).exp() / det.sqrt()))
}

/// Compares the z^n coefficients, per charge sector, of the configuration sum
/// (momentum-space potential) with the Gaussian characteristic-function side
/// (real-space matrices) for every mass and split parameter, and at m = 0 on
/// the neutral sectors.
pub fn siegert_kac_check(
    lattice: &TorusLattice,
    beta: f64,
    z: f64,
    n_max: usize,
    opts: &SiegertKacOptions,
) -> PartitionResult<SiegertKacReport> {
    let side = super::check_input(lattice, beta, z, n_max)?;
    if opts.s_values.is_empty() || opts.s_values.iter().any(|s| !(0.0..=0.5).contains(s)) {
        return Err(PartitionError::InvalidInput("split parameters must lie in [0, 1/2]".into()));
    }
    if opts.masses.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
        return Err(PartitionError::InvalidInput("masses must be positive".into()));
    }
    let sites = side * side;
    let runs = (opts.masses.len() as u64 + 1) * (opts.s_values.len() as u64 + 1);
    super::check_budget(super::leaves(sites, n_max, false).saturating_mul(sites as u64).saturating_mul(runs))?;

    let mut rows = Vec::new();
    let mut push = |n, charge, mass, s, configuration: f64, field: f64| {
        let scale = configuration.abs().max(field.abs());
        let error = if scale == 0.0 { 0.0 } else { (configuration - field).abs() / scale };
        rows.push(SiegertKacRow { n, charge, mass, s, configuration, field, error });
    };
    let mut masses: Vec<f64> = opts.masses.clone();
    masses.push(0.0);
    let (mut z_configuration, mut z_field) = (0.0, 0.0);
    for &mass in &masses {
        let neutral_only = mass == 0.0;
        let w = Potential::new(lattice, mass);
        let conf = sector_table(&pair_matrix(side, beta, |d| w.at(d)), sites, n_max, neutral_only);
        for (si, &s) in opts.s_values.iter().enumerate() {
            let (k, pf) = field_kernel(side, beta, s, mass)?;
            for &(n, q, c) in &conf {
                let kk = ((n as i64 + q) / 2) as usize;
                let f = pf * binomial(n, kk) * ordered_sum(&k, sites, n, kk, false) / factorial(n);
                push(n, q, mass, s, c, f);
                if neutral_only && si == 0 {
                    z_configuration += c * z.powi(n as i32);
                    z_field += f * z.powi(n as i32);
                }
            }
        }
    }
    let max_error = rows.iter().map(|r| r.error).fold(0.0, f64::max);
    let passed = max_error <= opts.tolerance && rows.iter().all(|r| r.configuration.is_finite() && r.field.is_finite());
    Ok(SiegertKacReport { rows, max_error, tolerance: opts.tolerance, passed, z_configuration, z_field })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prefactor_is_one() {
        for (s, m) in [(0.0, 0.3), (0.25, 0.3), (0.5, 0.1), (0.3, 0.0)] {
            let (_, pf) = field_kernel(3, 8.0, s, m).unwrap();
            assert!((pf - 1.0).abs() < 1e-12, "s={s} m={m}: {pf}");
        }
    }

    #[test]
    fn small_torus_matches() {
        let t = TorusLattice::with_l(3, 1, 0.0).unwrap();
        let r = siegert_kac_check(&t, 8.0 * std::f64::consts::PI, 0.05, 4, &SiegertKacOptions::default()).unwrap();
        assert!(r.passed, "max error {:e}", r.max_error);
        let first = &r.rows[0];
        assert_eq!((first.n, first.configuration), (0, 1.0));
        assert!((first.field - 1.0).abs() < 1e-12);
        assert!((r.z_configuration - r.z_field).abs() < 1e-10 * r.z_configuration);
    }

    #[test]
    fn bad_split() {
        let t = TorusLattice::with_l(3, 1, 0.0).unwrap();
        let opts = SiegertKacOptions { s_values: vec![0.7], ..Default::default() };
        assert!(siegert_kac_check(&t, 1.0, 0.1, 2, &opts).is_err());
    }
}
