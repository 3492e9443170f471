//! Exact grand partition function of the ±1 Coulomb gas on tiny tori.
//!
//! Configurations are labeled: n particles, each with a site and a charge, so
//! the z^n coefficient is S_n/n! with S_n the sum of e^{−βH} over (Λ × {±1})^n.
//! Sums are organized by the number k of positive charges; relabeling makes all
//! C(n, k) charge patterns equal, and σ → −σ maps k to n − k.

mod siegert_kac;

use std::io::Write;

use thiserror::Error;

use crate::lattice_covariance::{yukawa_table, TorusLattice};

pub use siegert_kac::{siegert_kac_check, SiegertKacOptions, SiegertKacReport, SiegertKacRow};

/// Largest torus side accepted.
pub const MAX_SIDE: u64 = 7;
/// Largest particle number accepted.
pub const MAX_N: usize = 6;
/// Leaf budget of one enumeration (configurations visited, summed over n and k).
pub const LEAF_BUDGET: u64 = 1_000_000_000;

pub const DEFAULT_MASSES: [f64; 4] = [0.5, 0.25, 0.125, 0.0625];

#[derive(Debug, Error)]
pub enum PartitionError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("enumeration needs {needed} configurations, budget is {budget}")]
    Budget { needed: u64, budget: u64 },
    #[error("partition function {0} is not positive")]
    NonPositive(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type PartitionResult<T> = Result<T, PartitionError>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChargeConfiguration {
    particles: Vec<([i64; 2], i8)>,
}

impl ChargeConfiguration {
    /// Charges must be ±1.
    pub fn new(particles: Vec<([i64; 2], i8)>) -> PartitionResult<ChargeConfiguration> {
        if let Some(p) = particles.iter().find(|p| p.1 != 1 && p.1 != -1) {
            return Err(PartitionError::InvalidInput(format!("charge {} is not ±1", p.1)));
        }
        Ok(ChargeConfiguration { particles })
    }

    pub fn particles(&self) -> &[([i64; 2], i8)] {
        &self.particles
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn charge(&self) -> i64 {
        self.particles.iter().map(|p| i64::from(p.1)).sum()
    }

    pub fn translated(&self, by: [i64; 2]) -> ChargeConfiguration {
        ChargeConfiguration { particles: self.particles.iter().map(|&(x, s)| ([x[0] + by[0], x[1] + by[1]], s)).collect() }
    }
}

/// H = ½Σσσ'W(x − x'|0;m) + (Q²/2)W_Λ(0;m).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Energy {
    pub neutral: f64,
    /// (Q²/2)W_Λ(0;m); infinite at m = 0 unless Q = 0
    pub charged: f64,
}

impl Energy {
    pub fn total(&self) -> f64 {
        self.neutral + self.charged
    }
}

/// W_Λ(·;m) for m > 0, W_Λ(·|0) for m = 0, indexed by signed offsets.
struct Potential {
    lattice: TorusLattice,
    table: crate::lattice_covariance::QuarterGrid,
}

impl Potential {
    fn new(lattice: &TorusLattice, m: f64) -> Potential {
        let lattice = lattice.with_mass(m);
        Potential { table: yukawa_table(&lattice), lattice }
    }

    fn at(&self, d: [i64; 2]) -> f64 {
        self.table.at(self.lattice.reduce(d))
    }

    /// W(d|0;m)
    fn normalized(&self, d: [i64; 2]) -> f64 {
        self.at(d) - self.at([0, 0])
    }
}

pub fn configuration_energy(cfg: &ChargeConfiguration, lattice: &TorusLattice, m: f64) -> Energy {
    let w = Potential::new(lattice, m);
    let p = cfg.particles();
    let mut neutral = 0.0;
    for (i, a) in p.iter().enumerate() {
        for b in &p[i + 1..] {
            neutral += f64::from(a.1 * b.1) * w.normalized([a.0[0] - b.0[0], a.0[1] - b.0[1]]);
        }
    }
    let q = cfg.charge();
    let charged = if q == 0 {
        0.0
    } else if m == 0.0 {
        f64::INFINITY
    } else {
        0.5 * (q * q) as f64 * w.at([0, 0])
    };
    Energy { neutral, charged }
}

/// Site-pair matrix P[x][y] = scale · V(x − y) on the side × side torus.
pub(crate) fn pair_matrix(side: usize, scale: f64, v: impl Fn([i64; 2]) -> f64) -> Vec<f64> {
    let sites = side * side;
    let mut p = vec![0.0; sites * sites];
    for a in 0..sites {
        for b in 0..sites {
            let d = [(a / side) as i64 - (b / side) as i64, (a % side) as i64 - (b % side) as i64];
            p[a * sites + b] = scale * v(d);
        }
    }
    p
}

/// Σ_{x ∈ Λⁿ} exp(−½ Σ_{i,j} σ_iσ_j P[x_i][x_j]) with the first k charges +1.
/// With `translate` the first particle is pinned to site 0 and the sum
/// multiplied by |Λ| (P must then be translation invariant).
pub(crate) fn ordered_sum(pair: &[f64], sites: usize, n: usize, k: usize, translate: bool) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let sigma: Vec<f64> = (0..n).map(|i| if i < k { 1.0 } else { -1.0 }).collect();
    let walker = Walker { pair, sites, sigma: &sigma };
    let zero = vec![0.0; sites];
    if translate {
        let e0 = 0.5 * pair[0];
        if n == 1 {
            return sites as f64 * (-e0).exp();
        }
        let field: Vec<f64> = (0..sites).map(|y| sigma[0] * pair[y]).collect();
        let parts = crate::par::map(sites, |x| walker.from(1, x, e0, &field));
        sites as f64 * parts.into_iter().sum::<f64>()
    } else {
        crate::par::map(sites, |x| walker.from(0, x, 0.0, &zero)).into_iter().sum()
    }
}

struct Walker<'a> {
    pair: &'a [f64],
    sites: usize,
    sigma: &'a [f64],
}

impl Walker<'_> {
    /// Contribution of all completions once particle t sits at x; `field[y]` is
    /// Σ_{i<t} σ_i P[x_i][y].
    fn from(&self, t: usize, x: usize, energy: f64, field: &[f64]) -> f64 {
        let s = self.sites;
        let e = energy + 0.5 * self.pair[x * s + x] + self.sigma[t] * field[x];
        if t + 1 == self.sigma.len() {
            return (-e).exp();
        }
        let row = &self.pair[x * s..(x + 1) * s];
        let next: Vec<f64> = field.iter().zip(row).map(|(f, p)| f + self.sigma[t] * p).collect();
        if t + 2 == self.sigma.len() {
            // last particle: sum in place
            let sl = self.sigma[t + 1];
            return (0..s).map(|y| (-(e + 0.5 * self.pair[y * s + y] + sl * next[y])).exp()).sum();
        }
        (0..s).map(|y| self.from(t + 1, y, e, &next)).sum()
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

/// One (n, Q) sector: its share of the z^n coefficient, Σ_{Q(ω)=Q} e^{−βH}/n!.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorTerm {
    pub n: usize,
    pub charge: i64,
    /// values along the mass sequence (one entry, the m = 0 value, for neutral_Z)
    pub by_mass: Vec<f64>,
    pub limit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub beta: f64,
    pub z: f64,
    /// Z at m → 0
    pub z_value: f64,
    /// z^n coefficients at m → 0
    pub coefficients: Vec<f64>,
    /// z^n coefficient times z^n
    pub terms: Vec<f64>,
    pub sectors: Vec<SectorTerm>,
    /// empty for the direct m = 0 evaluation
    pub m_sequence: Vec<f64>,
    /// largest change of a neutral limit when the coarsest mass is dropped
    pub residual: f64,
}

impl OracleResult {
    /// Σ_n c_n zⁿ
    pub fn value_at(&self, z: f64) -> f64 {
        self.coefficients.iter().enumerate().map(|(n, c)| c * z.powi(n as i32)).sum()
    }

    pub fn sector(&self, n: usize, charge: i64) -> Option<&SectorTerm> {
        self.sectors.iter().find(|s| s.n == n && s.charge == charge)
    }
}

fn check_input(lattice: &TorusLattice, beta: f64, z: f64, n_max: usize) -> PartitionResult<usize> {
    if lattice.side() > MAX_SIDE {
        return Err(PartitionError::InvalidInput(format!("side {} exceeds {MAX_SIDE}", lattice.side())));
    }
    if n_max > MAX_N {
        return Err(PartitionError::InvalidInput(format!("n_max {n_max} exceeds {MAX_N}")));
    }
    if !(beta > 0.0 && beta.is_finite()) || !z.is_finite() {
        return Err(PartitionError::InvalidInput(format!("need beta > 0 and finite z, got beta = {beta}, z = {z}")));
    }
    Ok(lattice.side() as usize)
}

/// Configurations visited for one pass over n ≤ n_max.
fn leaves(sites: usize, n_max: usize, neutral_only: bool) -> u64 {
    (1..=n_max)
        .map(|n| {
            let per = (sites as u64).saturating_pow(n as u32 - 1);
            let ks = if neutral_only { u64::from(n % 2 == 0) } else { (n / 2 + 1) as u64 };
            per.saturating_mul(ks)
        })
        .fold(0u64, u64::saturating_add)
}

fn check_budget(needed: u64) -> PartitionResult<()> {
    if needed > LEAF_BUDGET {
        return Err(PartitionError::Budget { needed, budget: LEAF_BUDGET });
    }
    Ok(())
}

/// Per-sector coefficients for one pair matrix: entry (n, k) for k ≤ n/2,
/// mirrored to n − k.
fn sector_table(pair: &[f64], sites: usize, n_max: usize, neutral_only: bool) -> Vec<(usize, i64, f64)> {
    let mut out = vec![(0, 0, 1.0)];
    for n in 1..=n_max {
        for k in 0..=n {
            let q = 2 * k as i64 - n as i64;
            if neutral_only && q != 0 {
                continue;
            }
            let kk = k.min(n - k);
            let t = ordered_sum(pair, sites, n, kk, true);
            out.push((n, q, binomial(n, k) * t / factorial(n)));
        }
    }
    out
}

/// Neville extrapolation of f(m²) to m² = 0; also the value without the first
/// (largest) node.
fn extrapolate(m2: &[f64], f: &[f64]) -> (f64, f64) {
    let neville = |xs: &[f64], ys: &[f64]| {
        let mut p = ys.to_vec();
        for d in 1..xs.len() {
            for i in 0..xs.len() - d {
                p[i] = (xs[i + d] * p[i] - xs[i] * p[i + 1]) / (xs[i + d] - xs[i]);
            }
        }
        p[0]
    };
    let full = neville(m2, f);
    let reduced = if m2.len() > 1 { neville(&m2[1..], &f[1..]) } else { full };
    (full, reduced)
}

/// Z(β, z) with the Yukawa energy at each mass of `m_sequence`, then m → 0:
/// neutral sectors are extrapolated in m², non-neutral ones carry the factor
/// e^{−βQ²W_Λ(0;m)/2} and are set to 0.
pub fn grand_z(lattice: &TorusLattice, beta: f64, z: f64, n_max: usize, m_sequence: &[f64]) -> PartitionResult<OracleResult> {
    let side = check_input(lattice, beta, z, n_max)?;
    if m_sequence.is_empty() || m_sequence.iter().any(|m| !(*m > 0.0 && m.is_finite())) || m_sequence.windows(2).any(|w| w[1] >= w[0]) {
        return Err(PartitionError::InvalidInput("mass sequence must be positive and strictly decreasing".into()));
    }
    let sites = side * side;
    check_budget(leaves(sites, n_max, false).saturating_mul(m_sequence.len() as u64))?;
    let tables: Vec<Vec<(usize, i64, f64)>> = m_sequence
        .iter()
        .map(|&m| {
            let w = Potential::new(lattice, m);
            sector_table(&pair_matrix(side, beta, |d| w.at(d)), sites, n_max, false)
        })
        .collect();
    let m2: Vec<f64> = m_sequence.iter().map(|m| m * m).collect();
    let mut sectors = Vec::new();
    let mut coefficients = vec![0.0; n_max + 1];
    let mut residual = 0.0f64;
    for (i, &(n, q, _)) in tables[0].iter().enumerate() {
        let by_mass: Vec<f64> = tables.iter().map(|t| t[i].2).collect();
        let limit = if q == 0 {
            let (full, reduced) = extrapolate(&m2, &by_mass);
            residual = residual.max((full - reduced).abs());
            full
        } else {
            0.0
        };
        coefficients[n] += limit;
        sectors.push(SectorTerm { n, charge: q, by_mass, limit });
    }
    Ok(finish(beta, z, coefficients, sectors, m_sequence.to_vec(), residual))
}

/// Z(β, z) at m = 0 directly: neutral configurations with the normalized
/// potential W_Λ(·|0).
pub fn neutral_z(lattice: &TorusLattice, beta: f64, z: f64, n_max: usize) -> PartitionResult<OracleResult> {
    let side = check_input(lattice, beta, z, n_max)?;
    let sites = side * side;
    check_budget(leaves(sites, n_max, true))?;
    let w = Potential::new(lattice, 0.0);
    let table = sector_table(&pair_matrix(side, beta, |d| w.at(d)), sites, n_max, true);
    let mut coefficients = vec![0.0; n_max + 1];
    let sectors = table
        .into_iter()
        .map(|(n, q, v)| {
            coefficients[n] += v;
            SectorTerm { n, charge: q, by_mass: vec![v], limit: v }
        })
        .collect();
    Ok(finish(beta, z, coefficients, sectors, Vec::new(), 0.0))
}

fn finish(beta: f64, z: f64, coefficients: Vec<f64>, sectors: Vec<SectorTerm>, m_sequence: Vec<f64>, residual: f64) -> OracleResult {
    let terms: Vec<f64> = coefficients.iter().enumerate().map(|(n, c)| c * z.powi(n as i32)).collect();
    let z_value = terms.iter().sum();
    OracleResult { beta, z, z_value, coefficients, terms, sectors, m_sequence, residual }
}

/// (β|Λ|)^{−1} ln Z on the finite torus.
pub fn pressure_estimate(lattice: &TorusLattice, beta: f64, z: f64, n_max: usize) -> PartitionResult<f64> {
    let r = neutral_z(lattice, beta, z, n_max)?;
    if !(r.z_value > 0.0) {
        return Err(PartitionError::NonPositive(r.z_value));
    }
    Ok(r.z_value.ln() / (beta * lattice.volume()))
}

/// Rows n, charge, mass, coefficient; the limit appears with mass "0".
pub fn write_oracle_csv<W: Write>(result: &OracleResult, out: W) -> PartitionResult<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let err = |e: csv::Error| PartitionError::Io(std::io::Error::other(e.to_string()));
    w.write_record(["n", "charge", "mass", "coefficient"]).map_err(err)?;
    for s in &result.sectors {
        for (m, v) in result.m_sequence.iter().zip(&s.by_mass) {
            w.write_record(&[s.n.to_string(), s.charge.to_string(), m.to_string(), format!("{v:e}")]).map_err(err)?;
        }
        w.write_record(&[s.n.to_string(), s.charge.to_string(), "0".into(), format!("{:e}", s.limit)]).map_err(err)?;
    }
    w.flush()?;
    Ok(())
}
