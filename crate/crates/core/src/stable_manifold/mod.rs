//! The separatrix x₁ = Σ(y₁): the initial x₁ whose flow stays on the stable
//! manifold x_j, y_j → 0. Solved as a fixed point of the summed flow in the
//! coordinates w⁺ = u + 2v (stable), w⁻ = u − v (unstable), where
//! x_j = q_j + u_j and y_j = q_j + v_j, and checked by bisection shooting.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::kt_flow::{kosterlitz_q, step, to_original, FlowCoefficients, FlowConfig, FlowError, FlowState};
use crate::rg_coefficients::ALPHA_SQ_KT;

/// Largest |y₁| accepted.
pub const EPSILON_1: f64 = 0.1;

#[derive(Debug, Error)]
pub enum ManifoldError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("iteration is not contracting: successive increments shrink by {ratio:.3} (iteration {iteration})")]
    NonContraction { ratio: f64, iteration: usize },
    #[error("no convergence after {iterations} iterations, increment {increment:e}")]
    NoConvergence { iterations: usize, increment: f64 },
    #[error("bracket [{lo}, {hi}] does not straddle the separatrix")]
    Bracket { lo: f64, hi: f64 },
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type ManifoldResult<T> = Result<T, ManifoldError>;

/// (u, v) ↦ (u + 2v, u − v).
pub fn diagonalize(u: f64, v: f64) -> (f64, f64) {
    (u + 2.0 * v, u - v)
}

/// (w⁺, w⁻) ↦ ((w⁺ + 2w⁻)/3, (w⁺ − w⁻)/3).
pub fn undiagonalize(wp: f64, wm: f64) -> (f64, f64) {
    ((wp + 2.0 * wm) / 3.0, (wp - wm) / 3.0)
}

#[derive(Debug, Clone)]
pub struct ManifoldProblem {
    pub y1: f64,
    /// number of scales j = 1..=horizon kept explicitly
    pub horizon: usize,
    pub tau: f64,
    /// κ₁, zero when starting from rescaled couplings
    pub kappa1: f64,
    pub flow: FlowConfig,
    pub coeffs: FlowCoefficients,
}

impl ManifoldProblem {
    pub fn new(y1: f64, horizon: usize, flow: FlowConfig, coeffs: FlowCoefficients) -> ManifoldProblem {
        ManifoldProblem { y1, horizon, tau: 0.1, kappa1: 0.0, flow, coeffs }
    }

    pub fn validate(&self) -> ManifoldResult<()> {
        if !(self.y1.abs() <= EPSILON_1) {
            return Err(ManifoldError::InvalidProblem(format!("|y1| = {} exceeds {EPSILON_1}", self.y1.abs())));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(ManifoldError::InvalidProblem(format!("tau = {} must be positive", self.tau)));
        }
        if self.horizon < 2 {
            return Err(ManifoldError::InvalidProblem("horizon must be at least 2".into()));
        }
        if !(self.kappa1 >= 0.0) {
            return Err(ManifoldError::InvalidProblem("kappa1 must be nonnegative".into()));
        }
        self.flow.validate()?;
        Ok(())
    }

    /// h_j = |y₁|(1 + |y₁|(j − 1))^{−3/2}.
    pub fn envelope(&self, j: usize) -> f64 {
        let y = self.y1.abs();
        y * (1.0 + y * (j as f64 - 1.0)).powf(-1.5)
    }

    fn q(&self, j: usize) -> f64 {
        kosterlitz_q(self.y1.abs(), j)
    }

    /// Σ_{s>J} q_{s+1} h_s², the weight that closes the tail of T⁻.
    fn tail_weight(&self) -> f64 {
        let term = |s: usize| self.q(s + 1) * self.envelope(s).powi(2);
        let end = 8 * self.horizon;
        let mut acc = 0.0;
        for s in self.horizon + 1..=end {
            acc += term(s);
        }
        // terms fall like s^{-4} beyond the crossover
        acc + term(end) * end as f64 / 3.0
    }
}

/// (w⁺_j, w⁻_j, κ_j), j = 1..=J at index j − 1.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSequence {
    pub w_plus: Vec<f64>,
    pub w_minus: Vec<f64>,
    pub kappa: Vec<f64>,
}

impl WeightedSequence {
    pub fn zeros(n: usize) -> WeightedSequence {
        WeightedSequence { w_plus: vec![0.0; n], w_minus: vec![0.0; n], kappa: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.w_plus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w_plus.is_empty()
    }

    /// sup_j max{|w⁺_j|/(τh_j), 2|w⁻_j|/(τh_j), κ_j/(τh_j)²}; for y₁ = 0 the plain sup norm.
    pub fn norm(&self, prob: &ManifoldProblem) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.len() {
            let th = if prob.y1 == 0.0 { 1.0 } else { prob.tau * prob.envelope(i + 1) };
            m = m
                .max(self.w_plus[i].abs() / th)
                .max(2.0 * self.w_minus[i].abs() / th)
                .max(self.kappa[i].abs() / (th * th));
        }
        m
    }

    pub fn sub(&self, other: &WeightedSequence) -> WeightedSequence {
        let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x - y).collect();
        WeightedSequence {
            w_plus: d(&self.w_plus, &other.w_plus),
            w_minus: d(&self.w_minus, &other.w_minus),
            kappa: d(&self.kappa, &other.kappa),
        }
    }

    /// Rescaled couplings (x_j, y_j) = (q_j + u_j, q_j + v_j) for y₁ ≥ 0.
    pub fn couplings(&self, prob: &ManifoldProblem) -> Vec<(f64, f64)> {
        (0..self.len())
            .map(|i| {
                let q = prob.q(i + 1);
                let (u, v) = undiagonalize(self.w_plus[i], self.w_minus[i]);
                (q + u, q + v)
            })
            .collect()
    }
}

/// One application of T = (T⁺, T⁻, T⁰). The datum w⁺₁ = w⁻₁ is taken from the
/// new T⁻₁, so the stable component sees the current unstable one.
pub fn apply_t(seq: &WeightedSequence, prob: &ManifoldProblem) -> WeightedSequence {
    let n = prob.horizon;
    assert_eq!(seq.len(), n, "sequence length must equal the horizon");
    let y1 = prob.y1.abs();
    if y1 == 0.0 {
        return WeightedSequence::zeros(n);
    }
    let mut wp_src = vec![0.0; n];
    let mut wm_src = vec![0.0; n];
    let mut w0_src = vec![0.0; n];
    for i in 0..n {
        let s = i + 1;
        let (q, qn) = (prob.q(s), prob.q(s + 1));
        let (wp, wm, k) = (seq.w_plus[i], seq.w_minus[i], seq.kappa[i]);
        let (u, v) = undiagonalize(wp, wm);
        let (x, y) = (q + u, q + v);
        let (f, m) = prob.flow.corrections(&prob.coeffs, s, x, y, k);
        let drift = q * q * qn;
        let big_u = -v * v - drift + f;
        let big_v = -u * v - drift + m;
        wp_src[i] = big_u + 2.0 * big_v - (2.0 * q + qn) * qn * wp;
        wm_src[i] = big_u - big_v;
        w0_src[i] = match prob.flow.surrogate {
            Some(sur) => prob.flow.next_kappa(x, y, k) - sur.rho * k,
            None => 0.0,
        };
    }
    let mut out = WeightedSequence::zeros(n);
    // T⁻_j = −Σ_{s≥j} (q_{s+1}/q_j) W⁻_s, summed from the closed tail down
    let hj = prob.envelope(n);
    let mut acc = wm_src[n - 1] / (hj * hj) * prob.tail_weight();
    for i in (0..n).rev() {
        let s = i + 1;
        acc += prob.q(s + 1) * wm_src[i];
        out.w_minus[i] = -acc / prob.q(s);
    }
    // w⁺_{j+1} = (q_{j+1}/q_j)² w⁺_j + W⁺_j
    out.w_plus[0] = out.w_minus[0];
    for i in 1..n {
        let r = prob.q(i + 1) / prob.q(i);
        out.w_plus[i] = r * r * out.w_plus[i - 1] + wp_src[i - 1];
    }
    if let Some(sur) = prob.flow.surrogate {
        out.kappa[0] = prob.kappa1;
        for i in 1..n {
            out.kappa[i] = sur.rho * out.kappa[i - 1] + w0_src[i - 1];
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct FixedPoint {
    pub sigma: f64,
    pub seq: WeightedSequence,
    pub iterations: usize,
    /// last ‖w_{k+1} − w_k‖
    pub increment: f64,
    /// largest ratio of successive increments seen
    pub ratio: f64,
    /// ‖w*‖; at most 1 means the solution lies in the ball
    pub norm: f64,
}

const FP_TOL: f64 = 1e-13;
const FP_MAX_ITER: usize = 500;
const FP_MAX_RATIO: f64 = 0.95;

/// Iterates T from zero until the weighted increment drops below 1e−13.
pub fn solve_fixed_point(prob: &ManifoldProblem) -> ManifoldResult<FixedPoint> {
    prob.validate()?;
    let y1 = prob.y1.abs();
    let mut w = WeightedSequence::zeros(prob.horizon);
    let mut prev: Option<f64> = None;
    let mut ratio: f64 = 0.0;
    for it in 1..=FP_MAX_ITER {
        let next = apply_t(&w, prob);
        let inc = next.sub(&w).norm(prob);
        w = next;
        if inc <= FP_TOL {
            let norm = w.norm(prob);
            return Ok(FixedPoint { sigma: y1 + w.w_minus[0], seq: w, iterations: it, increment: inc, ratio, norm });
        }
        if let Some(p) = prev {
            let r = inc / p;
            // near the floor the ratio measures rounding, not the map
            if inc > 1e3 * FP_TOL {
                ratio = ratio.max(r);
                if r > FP_MAX_RATIO && it > 3 {
                    return Err(ManifoldError::NonContraction { ratio: r, iteration: it });
                }
            }
        }
        prev = Some(inc);
    }
    Err(ManifoldError::NoConvergence { iterations: FP_MAX_ITER, increment: prev.unwrap_or(f64::NAN) })
}

/// Which side of the separatrix a starting point lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// y runs away (plasma side); also the side for ties
    Escape,
    /// y dies out with x staying positive (dipole side)
    Dipole,
}

/// Runs (x₁, y₁) for up to `horizon` scales. The first coupling to cross the
/// ceiling decides (x running off to −∞ counts with y); if neither does, the terminal state decides by the sign of
/// x_J − |y_J|, which the pure Kosterlitz step preserves.
pub fn classify(x1: f64, y1: f64, kappa1: f64, config: &FlowConfig, coeffs: &FlowCoefficients) -> Side {
    let mut s = FlowState::new(1, x1, y1.abs(), kappa1);
    let c = config.ceiling;
    let decide = |s: &FlowState| {
        if !(s.y.abs() <= c && s.x >= -c) {
            Some(Side::Escape)
        } else if s.x > c {
            Some(Side::Dipole)
        } else {
            None
        }
    };
    if let Some(side) = decide(&s) {
        return side;
    }
    for _ in 1..config.horizon {
        s = step(&s, coeffs, config);
        if let Some(side) = decide(&s) {
            return side;
        }
    }
    if s.x > s.y.abs() {
        Side::Dipole
    } else {
        Side::Escape
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shooting {
    pub sigma: f64,
    pub lo: f64,
    pub hi: f64,
    pub iterations: usize,
}

/// Bisection on x₁ between an escaping `lo` and a dipole-side `hi`.
pub fn solve_shooting(prob: &ManifoldProblem, bracket: (f64, f64), tol: f64) -> ManifoldResult<Shooting> {
    prob.validate()?;
    if !(tol > 0.0) {
        return Err(ManifoldError::InvalidProblem(format!("tol = {tol} must be positive")));
    }
    let (mut lo, mut hi) = bracket;
    if prob.y1 == 0.0 {
        return Ok(Shooting { sigma: 0.0, lo: 0.0, hi: 0.0, iterations: 0 });
    }
    let side = |x: f64| classify(x, prob.y1, prob.kappa1, &prob.flow, &prob.coeffs);
    if !(lo < hi) || side(lo) != Side::Escape || side(hi) != Side::Dipole {
        return Err(ManifoldError::Bracket { lo, hi });
    }
    let mut iterations = 0;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match side(mid) {
            Side::Escape => lo = mid,
            Side::Dipole => hi = mid,
        }
        iterations += 1;
    }
    Ok(Shooting { sigma: 0.5 * (lo + hi), lo, hi, iterations })
}

/// Default shooting bracket: x₁ = −1/2 escapes, x₁ = 1/2 is deep in the dipole phase.
pub const DEFAULT_BRACKET: (f64, f64) = (-0.5, 0.5);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionEstimate {
    pub max_ratio: f64,
    pub mean_ratio: f64,
    pub pairs: usize,
}

fn sample_ball(prob: &ManifoldProblem, rng: &mut ChaCha8Rng, smooth: bool) -> WeightedSequence {
    let n = prob.horizon;
    let mut w = WeightedSequence::zeros(n);
    let (a, b, c): (f64, f64, f64) = (rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0), rng.gen_range(0.0..=1.0));
    for i in 0..n {
        let th = prob.tau * prob.envelope(i + 1);
        let (ra, rb, rc) = if smooth { (a, b, c) } else { (rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0), rng.gen_range(0.0..=1.0)) };
        w.w_plus[i] = ra * th;
        w.w_minus[i] = rb * th / 2.0;
        if prob.flow.surrogate.is_some() {
            w.kappa[i] = rc * th * th;
        }
    }
    w
}

/// Largest and mean ‖T(w) − T(w')‖/‖w − w'‖ over `pairs` sampled ball pairs
/// (half with independent entries, half proportional to the envelope).
pub fn empirical_contraction(prob: &ManifoldProblem, pairs: usize, seed: u64) -> ManifoldResult<ContractionEstimate> {
    prob.validate()?;
    if pairs < 2 {
        return Err(ManifoldError::InvalidProblem("need at least 2 pairs".into()));
    }
    let ratios: Vec<Option<f64>> = crate::par::map(pairs, |k| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
        let smooth = k % 2 == 1;
        let (w, v) = (sample_ball(prob, &mut rng, smooth), sample_ball(prob, &mut rng, smooth));
        let d = w.sub(&v).norm(prob);
        if d == 0.0 {
            return None;
        }
        Some(apply_t(&w, prob).sub(&apply_t(&v, prob)).norm(prob) / d)
    });
    let got: Vec<f64> = ratios.into_iter().flatten().collect();
    let max_ratio = got.iter().copied().fold(0.0, f64::max);
    let mean_ratio = if got.is_empty() { f64::NAN } else { got.iter().sum::<f64>() / got.len() as f64 };
    Ok(ContractionEstimate { max_ratio, mean_ratio, pairs: got.len() })
}

/// First scale at which |x_j − |q_j|| or |y_j − q_j| exceeds τh_j, if any, for
/// the flow started at (x₁, y₁) and run to `until`.
pub fn envelope_exit(prob: &ManifoldProblem, x1: f64, until: usize) -> Option<usize> {
    let cfg = FlowConfig { horizon: until, ..prob.flow };
    let mut s = FlowState::new(1, x1, prob.y1.abs(), prob.kappa1);
    for j in 1..=until {
        if j > 1 {
            s = step(&s, &prob.coeffs, &cfg);
        }
        let band = prob.tau * prob.envelope(j);
        let q = prob.q(j);
        if !((s.x - q).abs() <= band && (s.y - q).abs() <= band) {
            return Some(j);
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparatrixRow {
    pub y1: f64,
    pub sigma_fixed_point: f64,
    pub sigma_shooting: f64,
    pub iterations: usize,
    pub contraction: f64,
    /// original activity z (before the scale-0 step when its factor is known)
    pub z: f64,
    /// original s = Σ/b
    pub s: f64,
    /// β = α²/(1 − s) at α² = 8π
    pub beta: f64,
}

/// Both solvers and the contraction estimate for each y₁, using `template` for
/// everything but y₁.
pub fn separatrix_table(template: &ManifoldProblem, y1s: &[f64], pairs: usize, seed: u64) -> ManifoldResult<Vec<SeparatrixRow>> {
    let rows = crate::par::map(y1s.len(), |i| -> ManifoldResult<SeparatrixRow> {
        let prob = ManifoldProblem { y1: y1s[i], ..template.clone() };
        let fp = solve_fixed_point(&prob)?;
        let sh = solve_shooting(&prob, DEFAULT_BRACKET, 1e-14)?;
        let contraction = if prob.y1 == 0.0 { 0.0 } else { empirical_contraction(&prob, pairs, seed)?.max_ratio };
        let (s, mut z) = to_original(fp.sigma, prob.y1, &prob.coeffs);
        if let Some(v0) = prob.coeffs.volume0 {
            z /= v0;
        }
        Ok(SeparatrixRow {
            y1: prob.y1,
            sigma_fixed_point: fp.sigma,
            sigma_shooting: sh.sigma,
            iterations: fp.iterations,
            contraction,
            z,
            s,
            beta: ALPHA_SQ_KT / (1.0 - s),
        })
    });
    rows.into_iter().collect()
}

pub fn write_separatrix_csv<W: Write>(rows: &[SeparatrixRow], out: W) -> ManifoldResult<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let err = |e: csv::Error| ManifoldError::Io(std::io::Error::other(e.to_string()));
    w.write_record(["y1", "sigma_fixed_point", "sigma_shooting", "agreement", "iterations", "contraction_estimate", "z", "s", "beta"])
        .map_err(err)?;
    for r in rows {
        w.write_record(&[
            r.y1.to_string(),
            r.sigma_fixed_point.to_string(),
            r.sigma_shooting.to_string(),
            (r.sigma_fixed_point - r.sigma_shooting).abs().to_string(),
            r.iterations.to_string(),
            r.contraction.to_string(),
            r.z.to_string(),
            r.s.to_string(),
            r.beta.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kt_flow::{CoefficientMode, ScaleCorrection, Surrogate};

    fn problem(y1: f64, horizon: usize) -> ManifoldProblem {
        let coeffs = FlowCoefficients::limit(0.004, 2.0 * 9f64.ln());
        ManifoldProblem::new(y1, horizon, FlowConfig { horizon, ..FlowConfig::default() }, coeffs)
    }

    #[test]
    fn diagonal_coordinates() {
        assert_eq!(diagonalize(1.0, 0.0), (1.0, 1.0));
        assert_eq!(diagonalize(0.0, 1.0), (2.0, -1.0));
        let (u, v) = undiagonalize(2.0, -1.0);
        assert!((u - 0.0).abs() < 1e-15 && (v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_activity() {
        let p = problem(0.0, 100);
        assert_eq!(apply_t(&WeightedSequence::zeros(100), &p), WeightedSequence::zeros(100));
        let fp = solve_fixed_point(&p).unwrap();
        assert_eq!(fp.sigma, 0.0);
        assert_eq!(solve_shooting(&p, DEFAULT_BRACKET, 1e-12).unwrap().sigma, 0.0);
    }

    #[test]
    fn fixed_point_satisfies_the_flow() {
        // the reconstructed sequence must be an actual trajectory
        let mut p = problem(0.02, 2000);
        p.flow.surrogate = Some(Surrogate::default());
        let fp = solve_fixed_point(&p).unwrap();
        let res = apply_t(&fp.seq, &p).sub(&fp.seq).norm(&p);
        assert!(res < 1e-12, "{res}");
        let xy = fp.seq.couplings(&p);
        assert_eq!(xy[0].1, 0.02);
        let mut s = FlowState::new(1, xy[0].0, xy[0].1, 0.0);
        for j in 1..200 {
            s = step(&s, &p.coeffs, &p.flow);
            assert!((s.x - xy[j].0).abs() < 1e-13 && (s.y - xy[j].1).abs() < 1e-13, "{j}");
            assert!((s.kappa - fp.seq.kappa[j]).abs() < 1e-15);
        }
    }

    #[test]
    fn limit_flow_separatrix_is_the_diagonal() {
        for &y1 in &[0.005, 0.03] {
            let p = problem(y1, 5000);
            let fp = solve_fixed_point(&p).unwrap();
            assert!((fp.sigma - y1).abs() < 1e-15, "{}", fp.sigma - y1);
            let sh = solve_shooting(&p, DEFAULT_BRACKET, 1e-14).unwrap();
            assert!((sh.sigma - y1).abs() < 1e-13);
        }
    }

    #[test]
    fn per_scale_corrections_agree_with_shooting() {
        let mut p = problem(0.01, 20_000);
        p.flow.mode = CoefficientMode::PerScale;
        p.coeffs.scales = vec![
            ScaleCorrection { a: 0.003, b: 4.6, volume: 1.05 },
            ScaleCorrection { a: 0.0039, b: 4.4, volume: 1.01 },
        ];
        let fp = solve_fixed_point(&p).unwrap();
        assert!((fp.sigma - 0.01).abs() > 1e-5);
        let sh = solve_shooting(&p, DEFAULT_BRACKET, 1e-14).unwrap();
        assert!((fp.sigma - sh.sigma).abs() < 1e-10, "{} {}", fp.sigma, sh.sigma);
    }

    #[test]
    fn bad_bracket() {
        let p = problem(0.01, 1000);
        assert!(matches!(solve_shooting(&p, (0.2, 0.5), 1e-10), Err(ManifoldError::Bracket { .. })));
        assert!(problem(0.2, 10).validate().is_err());
    }
}
