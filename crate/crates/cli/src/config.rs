//! The run configuration: an optional TOML file, command-line overrides and
//! desk-scale defaults, resolved and validated before anything is computed.

use std::f64::consts::PI;
use std::path::Path;

use coulomb_rg::kt_flow::{CoefficientMode, Surrogate};
use coulomb_rg::lattice_covariance::Taper;
use serde::Deserialize;

use crate::{CliError, CliResult};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub decompose: DecomposeSection,
    pub coeffs: CoeffsSection,
    pub flow: FlowSection,
    pub separatrix: SeparatrixSection,
    pub polymers: PolymerSection,
    pub oracle: OracleSection,
    pub checks: ChecksSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecomposeSection {
    pub l: Option<u32>,
    pub r: Option<u32>,
    pub gamma: Option<u32>,
    pub mass: Option<f64>,
    pub taper: Option<String>,
    pub write_stack: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoeffsSection {
    pub l: Option<u32>,
    pub r: Option<u32>,
    pub gamma: Option<u32>,
    pub taper: Option<String>,
    pub alpha_sq: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowSection {
    pub l: Option<u32>,
    pub r: Option<u32>,
    pub gamma: Option<u32>,
    pub x1: Option<f64>,
    pub y1: Option<f64>,
    pub horizon: Option<usize>,
    pub mode: Option<String>,
    pub surrogate: Option<bool>,
    pub rho: Option<f64>,
    pub c_r: Option<f64>,
    pub c_f: Option<f64>,
    pub c_m: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeparatrixSection {
    pub l: Option<u32>,
    pub r: Option<u32>,
    pub gamma: Option<u32>,
    pub y1: Option<Vec<f64>>,
    pub horizon: Option<usize>,
    pub pairs: Option<usize>,
    pub mode: Option<String>,
    pub tau: Option<f64>,
    pub delta: Option<f64>,
    pub exit_by: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolymerSection {
    pub l: Option<u32>,
    pub r: Option<u32>,
    pub j: Option<usize>,
    pub max_blocks: Option<usize>,
    pub j_inputs: Option<usize>,
    pub fields: Option<usize>,
    pub c1: Option<f64>,
    pub c3: Option<f64>,
    pub kappa_c: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSection {
    pub side: Option<u32>,
    pub beta: Option<f64>,
    pub z: Option<f64>,
    pub nmax: Option<usize>,
    pub masses: Option<Vec<f64>>,
    pub s_values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChecksSection {
    pub leakage_tol: Option<f64>,
    pub telescoping_tol: Option<f64>,
    pub psd_tol: Option<f64>,
    pub agreement_tol: Option<f64>,
    pub contraction_max: Option<f64>,
    pub exponent_max: Option<f64>,
    pub siegert_kac_tol: Option<f64>,
}

pub fn load(path: &Path) -> CliResult<FileConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecomposeParams {
    pub l: u32,
    pub r: u32,
    pub gamma: u32,
    pub mass: f64,
    pub taper: Taper,
    pub write_stack: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoeffParams {
    pub l: u32,
    pub r: u32,
    pub gamma: u32,
    pub taper: Taper,
    pub alpha_sq: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowParams {
    pub l: u32,
    pub r: u32,
    pub gamma: u32,
    /// None: start on the stable manifold
    pub x1: Option<f64>,
    pub y1: f64,
    pub horizon: usize,
    pub mode: CoefficientMode,
    pub surrogate: Option<Surrogate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparatrixParams {
    pub l: u32,
    pub r: u32,
    pub gamma: u32,
    pub y1s: Vec<f64>,
    pub horizon: usize,
    pub pairs: usize,
    pub mode: CoefficientMode,
    pub tau: f64,
    pub delta: f64,
    pub exit_by: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolymerParams {
    pub l: u32,
    pub r: u32,
    pub j: usize,
    pub max_blocks: usize,
    pub j_inputs: usize,
    pub fields: usize,
    pub c1: f64,
    pub c3: f64,
    pub kappa_c: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleParams {
    pub side: u32,
    pub beta: f64,
    pub z: f64,
    pub nmax: usize,
    pub masses: Vec<f64>,
    pub s_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tolerances {
    pub leakage: f64,
    pub telescoping: f64,
    pub psd: f64,
    pub agreement: f64,
    pub contraction: f64,
    pub exponent: f64,
    pub siegert_kac: f64,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn lattice_ok(l: u32, r: u32, gamma: u32) -> CliResult<()> {
    coulomb_rg::lattice_covariance::TorusLattice::new(l, r, gamma, 0.0).map(|_| ()).map_err(|e| usage(e.to_string()))
}

fn taper(s: Option<&str>) -> CliResult<Taper> {
    match s {
        None => Ok(Taper::Hann),
        Some(s) => Taper::parse(s).ok_or_else(|| usage(format!("unknown taper {s:?} (box, sine, hann)"))),
    }
}

fn mode(s: Option<&str>) -> CliResult<CoefficientMode> {
    match s {
        None | Some("limit") => Ok(CoefficientMode::Limit),
        Some("per-scale") => Ok(CoefficientMode::PerScale),
        Some(s) => Err(usage(format!("unknown coefficient mode {s:?} (limit, per-scale)"))),
    }
}

/// Desk-scale values for a value no one supplied, or a usage error when
/// `required` (single-command runs must name their main inputs).
fn need<T>(v: Option<T>, default: T, required: bool, name: &str) -> CliResult<T> {
    match v {
        Some(v) => Ok(v),
        None if required => Err(usage(format!("missing required value --{name}"))),
        None => Ok(default),
    }
}

fn positive(v: f64, name: &str) -> CliResult<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(usage(format!("{name} must be positive, got {v}")))
    }
}

impl DecomposeSection {
    pub fn resolve(&self) -> CliResult<DecomposeParams> {
        let (l, r, gamma) = (self.l.unwrap_or(3), self.r.unwrap_or(3), self.gamma.unwrap_or(3));
        lattice_ok(l, r, gamma)?;
        let mass = self.mass.unwrap_or(0.1);
        if !(mass >= 0.0 && mass.is_finite()) {
            return Err(usage(format!("mass must be nonnegative, got {mass}")));
        }
        Ok(DecomposeParams { l, r, gamma, mass, taper: taper(self.taper.as_deref())?, write_stack: self.write_stack.unwrap_or(false) })
    }
}

impl CoeffsSection {
    pub fn resolve(&self) -> CliResult<CoeffParams> {
        let (l, r, gamma) = (self.l.unwrap_or(3), self.r.unwrap_or(5), self.gamma.unwrap_or(3));
        lattice_ok(l, r, gamma)?;
        if r < 2 {
            return Err(usage("coefficients need R >= 2"));
        }
        let alpha_sq = positive(self.alpha_sq.unwrap_or(8.0 * PI), "alpha_sq")?;
        Ok(CoeffParams { l, r, gamma, taper: taper(self.taper.as_deref())?, alpha_sq })
    }
}

impl FlowSection {
    pub fn resolve(&self, required: bool) -> CliResult<FlowParams> {
        let (l, r, gamma) = (self.l.unwrap_or(9), self.r.unwrap_or(5), self.gamma.unwrap_or(3));
        lattice_ok(l, r, gamma)?;
        let y1 = need(self.y1, 0.01, required, "y1")?;
        if !(y1.is_finite() && y1.abs() <= coulomb_rg::stable_manifold::EPSILON_1) {
            return Err(usage(format!("|y1| must be at most {}, got {y1}", coulomb_rg::stable_manifold::EPSILON_1)));
        }
        if self.x1.is_some_and(|x| !x.is_finite()) {
            return Err(usage("x1 must be finite"));
        }
        let horizon = self.horizon.unwrap_or(100_000);
        if horizon < 4 {
            return Err(usage("horizon must be at least 4"));
        }
        let surrogate = if self.surrogate.unwrap_or(false) {
            let d = Surrogate::default();
            Some(Surrogate {
                rho: self.rho.unwrap_or(d.rho),
                c_r: self.c_r.unwrap_or(d.c_r),
                c_f: self.c_f.unwrap_or(d.c_f),
                c_m: self.c_m.unwrap_or(d.c_m),
            })
        } else {
            None
        };
        Ok(FlowParams { l, r, gamma, x1: self.x1, y1, horizon, mode: mode(self.mode.as_deref())?, surrogate })
    }
}

impl SeparatrixSection {
    pub fn resolve(&self, required: bool) -> CliResult<SeparatrixParams> {
        let (l, r, gamma) = (self.l.unwrap_or(9), self.r.unwrap_or(5), self.gamma.unwrap_or(3));
        lattice_ok(l, r, gamma)?;
        let y1s = need(self.y1.clone(), vec![0.005, 0.01, 0.02], required, "y1")?;
        if y1s.is_empty() || y1s.iter().any(|y| !(y.is_finite() && y.abs() <= coulomb_rg::stable_manifold::EPSILON_1)) {
            return Err(usage(format!("each |y1| must be at most {}", coulomb_rg::stable_manifold::EPSILON_1)));
        }
        let horizon = self.horizon.unwrap_or(10_000);
        if horizon < 2 {
            return Err(usage("horizon must be at least 2"));
        }
        let pairs = self.pairs.unwrap_or(100);
        if pairs < 2 {
            return Err(usage("need at least 2 contraction pairs"));
        }
        Ok(SeparatrixParams {
            l,
            r,
            gamma,
            y1s,
            horizon,
            pairs,
            mode: mode(self.mode.as_deref())?,
            tau: positive(self.tau.unwrap_or(0.1), "tau")?,
            delta: positive(self.delta.unwrap_or(1e-6), "delta")?,
            exit_by: self.exit_by.unwrap_or(10_000),
        })
    }
}

impl PolymerSection {
    pub fn resolve(&self) -> CliResult<PolymerParams> {
        let (l, r, j) = (self.l.unwrap_or(3), self.r.unwrap_or(4), self.j.unwrap_or(1));
        lattice_ok(l, r, 3).or_else(|_| lattice_ok(l, r, l))?;
        if j + 2 > r as usize {
            return Err(usage(format!("scale j = {j} needs R >= j + 2 (got R = {r})")));
        }
        let grid = u64::from(l).pow(r - j as u32);
        if grid < 5 {
            return Err(usage(format!("block grid {grid} is below 5 blocks per side")));
        }
        let max_blocks = self.max_blocks.unwrap_or(5);
        if !(1..=8).contains(&max_blocks) {
            return Err(usage("max_blocks must lie in 1..=8"));
        }
        Ok(PolymerParams {
            l,
            r,
            j,
            max_blocks,
            j_inputs: self.j_inputs.unwrap_or(10),
            fields: self.fields.unwrap_or(20),
            c1: positive(self.c1.unwrap_or(5.0), "c1")?,
            c3: positive(self.c3.unwrap_or(1.0), "c3")?,
            kappa_c: positive(self.kappa_c.unwrap_or(0.5), "kappa_c")?,
        })
    }
}

impl OracleSection {
    pub fn resolve(&self, required: bool) -> CliResult<OracleParams> {
        let side = need(self.side, 5, required, "side")?;
        if side < 3 || side % 2 == 0 || u64::from(side) > coulomb_rg::partition_oracle::MAX_SIDE {
            return Err(usage(format!("side must be odd, between 3 and {}", coulomb_rg::partition_oracle::MAX_SIDE)));
        }
        let beta = positive(need(self.beta, 8.0 * PI, required, "beta")?, "beta")?;
        let z = need(self.z, 0.05, required, "z")?;
        if !z.is_finite() {
            return Err(usage("z must be finite"));
        }
        let nmax = need(self.nmax, 4, required, "nmax")?;
        if nmax > coulomb_rg::partition_oracle::MAX_N {
            return Err(usage(format!("nmax must be at most {}", coulomb_rg::partition_oracle::MAX_N)));
        }
        let masses = self.masses.clone().unwrap_or_else(|| coulomb_rg::partition_oracle::DEFAULT_MASSES.to_vec());
        if masses.is_empty() || masses.iter().any(|m| !(*m > 0.0 && m.is_finite())) || masses.windows(2).any(|w| w[1] >= w[0]) {
            return Err(usage("masses must be positive and strictly decreasing"));
        }
        let s_values = self.s_values.clone().unwrap_or_else(|| vec![0.0, 0.25]);
        if s_values.is_empty() || s_values.iter().any(|s| !(0.0..=0.5).contains(s)) {
            return Err(usage("s_values must lie in [0, 1/2]"));
        }
        Ok(OracleParams { side, beta, z, nmax, masses, s_values })
    }
}

impl ChecksSection {
    pub fn resolve(&self) -> CliResult<Tolerances> {
        let t = Tolerances {
            leakage: self.leakage_tol.unwrap_or(1e-6),
            telescoping: self.telescoping_tol.unwrap_or(1e-8),
            psd: self.psd_tol.unwrap_or(1e-10),
            agreement: self.agreement_tol.unwrap_or(1e-8),
            contraction: self.contraction_max.unwrap_or(0.5),
            exponent: self.exponent_max.unwrap_or(-1.3),
            siegert_kac: self.siegert_kac_tol.unwrap_or(1e-10),
        };
        let all = [t.leakage, t.telescoping, t.psd, t.agreement, t.contraction, t.siegert_kac];
        if all.iter().any(|v| !(*v >= 0.0 && v.is_finite())) || !t.exponent.is_finite() {
            return Err(usage("tolerances must be finite and nonnegative"));
        }
        Ok(t)
    }
}
