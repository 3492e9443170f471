//! One function per command: compute, write the CSV artifacts, return checks.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use coulomb_rg::kt_flow::{self, CoefficientMode, FlowCoefficients, FlowConfig};
use coulomb_rg::lattice_covariance::{self as cov, build_cutoffs, CovError, DecomposeOptions, Taper, TorusLattice};
use coulomb_rg::partition_oracle::{self as oracle, SiegertKacOptions};
use coulomb_rg::polymer_geometry::{self as poly, BlockPaving, FieldOnTorus, Polymer, RegulatorConsts, RegulatorContext};
use coulomb_rg::rg_coefficients::{self as rg, ALPHA_SQ_KT};
use coulomb_rg::stable_manifold::{self as sm, ManifoldProblem};

use crate::config::{CoeffParams, DecomposeParams, FlowParams, OracleParams, PolymerParams, SeparatrixParams, Tolerances};
use crate::report::Check;
use crate::{CliError, CliResult};

fn create(out: &Path, name: &str) -> CliResult<BufWriter<File>> {
    std::fs::create_dir_all(out)?;
    Ok(BufWriter::new(File::create(out.join(name))?))
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

fn gamma_for(l: u32) -> u32 {
    let mut p = 1;
    while p < l {
        p *= 3;
    }
    if p == l {
        3
    } else {
        l
    }
}

pub fn decompose(p: &DecomposeParams, tol: &Tolerances, out: &Path) -> CliResult<Vec<Check>> {
    let lat = TorusLattice::new(p.l, p.r, p.gamma, p.mass)?;
    let cut = build_cutoffs(p.gamma, lat.m_fine(), (p.r * lat.m_fine()) as usize, p.taper)?;
    let opts = DecomposeOptions { leakage_tol: tol.leakage, psd_tol: tol.psd, ..DecomposeOptions::default() };
    let stack = match cov::decompose(&lat, &cut, &opts) {
        Ok(s) => s,
        Err(CovError::Decomposition { scale, reason }) => {
            return Ok(vec![Check::holds("decompose.positivity", false, format!("scale {scale}: {reason}"))]);
        }
        Err(e) => return Err(e.into()),
    };
    let mut w = csv_writer(create(out, "scales.csv")?);
    w.write_record(&["j", "period", "stride", "radius", "origin", "leakage", "min_mode", "cut_momentum"])?;
    for r in stack.reports() {
        w.write_record(&[
            r.j.to_string(),
            r.period.to_string(),
            r.stride.to_string(),
            r.radius.to_string(),
            r.origin.to_string(),
            r.leakage.to_string(),
            r.min_mode.to_string(),
            r.cut_momentum.to_string(),
        ])?;
    }
    w.flush()?;
    if p.write_stack {
        cov::write_stack(&stack, create(out, "stack.txt")?)?;
    }
    let leak = stack.reports().iter().map(|r| r.leakage).fold(0.0, f64::max);
    let min_mode = stack.reports().iter().map(|r| r.min_mode).fold(f64::INFINITY, f64::min);
    let mut checks = vec![
        Check::at_most("decompose.leakage", leak, tol.leakage, "largest |Γ_j|/Γ_j(0) beyond the support"),
        Check::at_least("decompose.positivity", min_mode, -tol.psd, "smallest Fourier mode relative to f_j(0)"),
    ];
    if let Some(e) = stack.telescoping_error() {
        checks.push(Check::at_most("decompose.telescoping", e, tol.telescoping, "Σ_j Γ_j + Γ_{≥R} against W_Λ"));
    }
    Ok(checks)
}

pub fn coeffs(p: &CoeffParams, out: &Path) -> CliResult<Vec<Check>> {
    let lat = TorusLattice::new(p.l, p.r, p.gamma, 0.0)?;
    let cut = build_cutoffs(p.gamma, lat.m_fine(), (p.r * lat.m_fine()) as usize, p.taper)?;
    let stack = cov::decompose(&lat, &cut, &DecomposeOptions { tail_max_side: 0, ..DecomposeOptions::default() })?;
    let scales: Vec<usize> = (1..p.r as usize).collect();
    let table = rg::coefficients(&stack, &scales, p.alpha_sq)?;
    table.write_csv(create(out, "coefficients.csv")?)?;
    let finite = table.rows.iter().all(|r| [r.a, r.b, r.e2, r.e3, r.e4, r.volume_factor].iter().all(|v| v.is_finite()));
    let mut checks = vec![Check::holds("coeffs.finite", finite, "all coefficients finite")];
    if (p.alpha_sq - ALPHA_SQ_KT).abs() <= 1e-12 * ALPHA_SQ_KT {
        let dev: Vec<f64> = table.rows.iter().map(|r| (r.volume_factor - 1.0).abs()).collect();
        let decreasing = dev.windows(2).all(|w| w[1] < w[0]);
        checks.push(Check::holds("coeffs.volume_factor_decreasing", decreasing, format!("|L²e^(-4πΓ_j(0)) - 1| = {}", dev.iter().map(|d| format!("{d:.3e}")).collect::<Vec<_>>().join(" "))));
        let c = cov::coulomb_constant_c(&cut)?;
        let (a, b) = rg::limit_constants(p.l, p.alpha_sq, c.c)?;
        let mut w = csv_writer(create(out, "limits.csv")?);
        w.write_record(&["j", "a_rel_dev", "b_rel_dev"])?;
        for r in &table.rows {
            w.write_record(&[r.j.to_string(), ((r.a - a) / a).abs().to_string(), ((r.b - b) / b).abs().to_string()])?;
        }
        w.flush()?;
    }
    Ok(checks)
}

/// Limit constants from the cutoffs; per-scale values and the scale-0 volume
/// factor from a decomposition when `with_stack`.
fn flow_coefficients(l: u32, r: u32, gamma: u32, mode: CoefficientMode, with_stack: bool) -> CliResult<FlowCoefficients> {
    let lat = TorusLattice::new(l, r, gamma, 0.0)?;
    let cut = build_cutoffs(gamma, lat.m_fine(), (r * lat.m_fine()) as usize, Taper::Hann)?;
    if mode == CoefficientMode::Limit && !with_stack {
        let c = cov::coulomb_constant_c(&cut)?;
        let (a, b) = rg::limit_constants(l, ALPHA_SQ_KT, c.c)?;
        return Ok(FlowCoefficients::limit(a, b));
    }
    let stack = cov::decompose(&lat, &cut, &DecomposeOptions { tail_max_side: 0, ..DecomposeOptions::default() })?;
    let last = if mode == CoefficientMode::PerScale { r as usize - 1 } else { 0 };
    Ok(FlowCoefficients::from_stack(&stack, last)?)
}

pub fn flow(p: &FlowParams, tol: &Tolerances, out: &Path) -> CliResult<Vec<Check>> {
    let coeffs = flow_coefficients(p.l, p.r, p.gamma, p.mode, false)?;
    let cfg = FlowConfig { mode: p.mode, surrogate: p.surrogate, horizon: p.horizon, ..FlowConfig::default() };
    let on_manifold = p.x1.is_none();
    let x1 = match p.x1 {
        Some(x) => x,
        None => sm::solve_fixed_point(&ManifoldProblem::new(p.y1, p.horizon, cfg, coeffs.clone()))?.sigma,
    };
    let traj = kt_flow::trajectory(x1, p.y1, &cfg, &coeffs)?;
    kt_flow::write_trajectory_csv(&traj, p.y1, create(out, "trajectory.csv")?)?;
    let finite = traj.states.iter().all(|s| s.x.is_finite() && s.y.is_finite() && s.kappa.is_finite());
    let mut checks = vec![Check::holds("flow.finite", finite, format!("{} scales from x1 = {x1}", traj.states.len()))];
    if on_manifold {
        checks.push(Check::holds("flow.bounded", traj.divergence.is_none(), "on-manifold start stays below the ceiling"));
        if traj.divergence.is_none() && p.y1 != 0.0 {
            let fit = kt_flow::deviation_profile(&traj, p.y1)?;
            checks.push(Check::at_most("flow.decay_exponent", fit.x_exponent, tol.exponent, "slope of ln|x_j - q_j| in ln j"));
        }
    }
    Ok(checks)
}

pub fn separatrix(p: &SeparatrixParams, tol: &Tolerances, seed: u64, out: &Path) -> CliResult<Vec<Check>> {
    let coeffs = flow_coefficients(p.l, p.r, p.gamma, p.mode, true)?;
    let cfg = FlowConfig { mode: p.mode, horizon: p.horizon, ..FlowConfig::default() };
    let template = ManifoldProblem { tau: p.tau, ..ManifoldProblem::new(p.y1s[0], p.horizon, cfg, coeffs) };
    let rows = sm::separatrix_table(&template, &p.y1s, p.pairs, seed)?;
    sm::write_separatrix_csv(&rows, create(out, "separatrix.csv")?)?;
    let agreement = rows.iter().map(|r| (r.sigma_fixed_point - r.sigma_shooting).abs()).fold(0.0, f64::max);
    let contraction = rows.iter().map(|r| r.contraction).fold(0.0, f64::max);
    let zero = sm::solve_fixed_point(&ManifoldProblem { y1: 0.0, ..template.clone() })?.sigma;
    let mut escaped = true;
    let mut exits = Vec::new();
    for r in rows.iter().filter(|r| r.y1 != 0.0) {
        let prob = ManifoldProblem { y1: r.y1, ..template.clone() };
        for x in [r.sigma_fixed_point - p.delta, r.sigma_fixed_point + p.delta] {
            let e = sm::envelope_exit(&prob, x, p.exit_by);
            escaped &= e.is_some();
            exits.push(e.map_or("none".to_string(), |j| j.to_string()));
        }
    }
    Ok(vec![
        Check::at_most("separatrix.agreement", agreement, tol.agreement, "|Σ_fixed_point - Σ_shooting|"),
        Check::at_most("separatrix.contraction", contraction, tol.contraction, format!("{} pairs per y1", p.pairs)),
        Check::holds("separatrix.zero_activity", zero == 0.0, format!("Σ(0) = {zero}")),
        Check::holds("separatrix.off_manifold_escape", escaped, format!("exit scales {}", exits.join(" "))),
    ])
}

pub fn polymers(p: &PolymerParams, seed: u64, out: &Path) -> CliResult<Vec<Check>> {
    let lat = TorusLattice::new(p.l, p.r, gamma_for(p.l), 0.0)?;
    let paving = BlockPaving::new(&lat, p.j)?;
    let mut checks = Vec::new();

    let s = poly::count_small(&paving, 0)?;
    checks.push(Check::holds("polymers.count_s", s == 99, format!("S = {s}")));

    let scan = poly::reblock_scan(&paving, p.max_blocks)?;
    checks.push(Check::at_least(
        "polymers.reblock_eta",
        scan.max_eta,
        f64::MIN_POSITIVE,
        format!("{} connected polymers of at most {} blocks", scan.polymers, p.max_blocks),
    ));

    poly::write_shape_csv(&poly::shape_report(&paving, 0, 4)?, create(out, "shapes.csv")?)?;

    // closure sums for one and two coarse blocks
    let coarse = paving.coarser()?;
    let with_large = p.l == 3;
    let mut w = csv_writer(create(out, "closure_sums.csv")?);
    w.write_record(&["v_size", "a", "lambda", "k_small", "k_small_over_l2", "k_large"])?;
    let mut finite = true;
    let l2 = f64::from(p.l * p.l);
    for v in [Polymer::new(coarse.j(), [0]), Polymer::new(coarse.j(), [0, coarse.neighbors(0)[0]])] {
        let counts = poly::closure_counts(&paving, &v, with_large, 1 << 22)?;
        for a in [10.0, 100.0, 1000.0] {
            let (ks, kl) = counts.k_values(a, 0.5);
            finite &= ks.is_finite() && kl.is_finite();
            let kl = if with_large { kl.to_string() } else { String::new() };
            w.write_record(&[v.len().to_string(), a.to_string(), "0.5".into(), ks.to_string(), (ks / l2).to_string(), kl])?;
        }
    }
    w.flush()?;
    checks.push(Check::holds("polymers.closure_sums_finite", finite, ""));

    // the extraction identities on the (3, 2) torus at scale 0
    let fine = BlockPaving::new(&TorusLattice::with_l(3, 2, 0.0)?, 0)?;
    let fine_coarse = fine.coarser()?;
    let mut failures = 0;
    for i in 0..p.j_inputs as u64 {
        let qbar = poly::random_assignment(&fine, seed.wrapping_add(2 * i));
        let q = poly::random_assignment(&fine_coarse, seed.wrapping_add(2 * i + 1));
        if poly::j_extraction_check(&fine, &|x| qbar[x].clone(), &|y| q[y].clone()).is_err() {
            failures += 1;
        }
    }
    checks.push(Check::holds("polymers.j_identities", failures == 0, format!("{failures} of {} random inputs failed", p.j_inputs)));

    checks.extend(regulators(p, &lat, &paving, seed, out)?);
    Ok(checks)
}

/// Fields with wave numbers up to L^{R−j−1}: they vary on the scale L^{j+1} of
/// a scale-j fluctuation.
fn regulator_field(lat: &TorusLattice, j: usize, seed: u64) -> FieldOnTorus {
    let side = lat.side() as usize;
    let kmax = (side as u64 / u64::from(lat.l()).pow(j as u32 + 1)).max(1) as i64;
    FieldOnTorus::random_smooth(side, 6, kmax, seed)
}

fn regulators(p: &PolymerParams, lat: &TorusLattice, paving: &BlockPaving, seed: u64, out: &Path) -> CliResult<Vec<Check>> {
    let consts = RegulatorConsts { c1: p.c1, c3: p.c3, kappa: poly::kappa_l(p.l, p.kappa_c) };
    let family = poly::connected_polymers(paving, 2);
    let coarse = paving.coarser()?;
    let mut w = csv_writer(create(out, "regulators.csv")?);
    w.write_record(&["field", "worst_strong_over_regulator", "factorization_error", "monotone"])?;
    let (mut worst, mut fact_worst, mut monotone) = (0.0f64, 0.0f64, true);
    for i in 0..p.fields as u64 {
        let phi = regulator_field(lat, p.j, seed.wrapping_add(i));
        let ctx = RegulatorContext::new(paving, &phi)?;
        let mut ratio = 0.0f64;
        for x in &family {
            let (s, g) = (ctx.ln_strong(x, consts.kappa)?, ctx.ln_regulator(x, &consts)?);
            if s > 0.0 {
                ratio = ratio.max(s / g);
            }
        }
        // two separated pieces
        let m = paving.grid_side() as i64;
        let x = Polymer::new(p.j, [paving.index([0, 0]), paving.index([0, 1]), paving.index([m / 2, m / 2])]);
        let whole = ctx.ln_regulator(&x, &consts)?;
        let parts: f64 = paving.components(&x).iter().map(|y| ctx.ln_regulator(y, &consts)).sum::<Result<f64, _>>()?;
        let fact = if whole == 0.0 { 0.0 } else { (whole - parts).abs() / whole };
        // G^str_j ≤ G^str_{j+1} on one coarse block
        let cctx = RegulatorContext::new(&coarse, &phi)?;
        let y = Polymer::new(coarse.j(), [0]);
        let inside = Polymer::new(p.j, (0..paving.block_count()).filter(|&b| paving.parent(b) == 0));
        let mono = ctx.ln_strong(&inside, consts.kappa)? <= cctx.ln_strong(&y, consts.kappa)?;
        worst = worst.max(ratio);
        fact_worst = fact_worst.max(fact);
        monotone &= mono;
        w.write_record(&[i.to_string(), ratio.to_string(), fact.to_string(), mono.to_string()])?;
    }
    w.flush()?;
    Ok(vec![
        Check::at_most("polymers.strong_below_regulator", worst, 1.0, format!("largest ln G^str / ln G, {} fields", p.fields)),
        Check::at_most("polymers.factorization", fact_worst, 1e-12, "relative error of ln G over components"),
        Check::holds("polymers.strong_monotone", monotone, "G^str_j <= G^str_(j+1)"),
    ])
}

pub fn oracle(p: &OracleParams, tol: &Tolerances, out: &Path) -> CliResult<Vec<Check>> {
    let lat = TorusLattice::new(p.side, 1, p.side, 0.0)?;
    let g = oracle::grand_z(&lat, p.beta, p.z, p.nmax, &p.masses)?;
    oracle::write_oracle_csv(&g, create(out, "oracle_sectors.csv")?)?;
    let d = oracle::neutral_z(&lat, p.beta, p.z, p.nmax)?;
    let opts = SiegertKacOptions { s_values: p.s_values.clone(), masses: p.masses.clone(), tolerance: tol.siegert_kac };
    let sk = oracle::siegert_kac_check(&lat, p.beta, p.z, p.nmax, &opts)?;
    let mut w = csv_writer(create(out, "siegert_kac.csv")?);
    w.write_record(&["n", "charge", "mass", "s", "configuration", "field", "rel_error"])?;
    for r in &sk.rows {
        w.write_record(&[
            r.n.to_string(),
            r.charge.to_string(),
            r.mass.to_string(),
            r.s.to_string(),
            format!("{:e}", r.configuration),
            format!("{:e}", r.field),
            format!("{:e}", r.error),
        ])?;
    }
    w.flush()?;

    let symmetric = g.value_at(p.z).to_bits() == g.value_at(-p.z).to_bits();
    let decays = g.sectors.iter().filter(|s| s.charge != 0).all(|s| {
        s.by_mass.windows(2).all(|w| w[1] < w[0] || (w[1] == 0.0 && w[0] == 0.0)) && s.limit == 0.0
    });
    let gap = (0..=p.nmax).map(|n| (g.coefficients[n] - d.coefficients[n]).abs() - 1e-12 * d.coefficients[n].abs()).fold(0.0, f64::max);
    Ok(vec![
        Check::holds("oracle.z_symmetry", symmetric, format!("Z = {}", g.z_value)),
        Check::holds("oracle.charged_sectors_vanish", decays, "non-neutral sector weights decrease along the mass sequence"),
        Check::at_most("oracle.massless_limit", gap, 10.0 * g.residual, "extrapolated against direct m = 0 coefficients"),
        Check::at_most("oracle.siegert_kac", sk.max_error, tol.siegert_kac, format!("{} coefficients compared", sk.rows.len())),
    ])
}

impl From<cov::CovError> for CliError {
    fn from(e: cov::CovError) -> Self {
        CliError::Compute(e.to_string())
    }
}

macro_rules! compute_error {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Compute(e.to_string())
            }
        })*
    };
}

compute_error!(rg::RgError, kt_flow::FlowError, sm::ManifoldError, poly::PolymerError, oracle::PartitionError);

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(std::io::Error::other(e.to_string()))
    }
}
