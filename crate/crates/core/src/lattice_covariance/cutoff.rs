//! Momentum cutoffs built from products of squared trigonometric polynomials.
//!
//! Work in the variable θ ∈ [0, π] with cos θ = 1 − λ/4, where
//! λ(k) = 4 sin²(k₀/2) + 4 sin²(k₁/2) is the symbol of −Δ. A cosine polynomial
//! of degree d in θ is a polynomial of degree d in λ, hence the Fourier
//! transform of a kernel supported in the ℓ¹ ball of radius d.
//!
//! Factor i is κ_i(θ) = (A_i(θ)/A_i(0))² with
//! A_i(θ) = Σ_{|m| ≤ δ_i/2} cos^p(πm/(δ_i+2)) cos(mθ), δ_i = (γ−1)γ^i/2,
//! and F_h = Π_{i<h} κ_i. Each κ_i lies in [0, 1], so F_h decreases in h and
//! every difference F_h − F_{h'} (h < h') is nonnegative.

use std::f64::consts::PI;

use super::{CovError, CovResult};
use crate::numeric::sinc;

/// Window taper `cos^p`; `Hann` is the default.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Taper {
    Box,
    Sine,
    Hann,
}

impl Taper {
    pub fn power(self) -> u32 {
        match self {
            Taper::Box => 0,
            Taper::Sine => 1,
            Taper::Hann => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Taper::Box => "box",
            Taper::Sine => "sine",
            Taper::Hann => "hann",
        }
    }

    pub fn parse(s: &str) -> Option<Taper> {
        match s {
            "box" => Some(Taper::Box),
            "sine" => Some(Taper::Sine),
            "hann" => Some(Taper::Hann),
            _ => None,
        }
    }

    /// Continuum limit of A(θ)/A(0) as δ → ∞ at fixed δθ = x.
    fn continuum(self, x: f64) -> f64 {
        let x = x.abs();
        match self {
            Taper::Box => sinc(0.5 * x),
            // π² cos(x/2)/(π² − x²), rewritten without the removable pole at π
            Taper::Sine => 0.5 * PI * PI * sinc(0.5 * (x - PI)) / (x + PI),
            Taper::Hann => {
                if x < PI {
                    sinc(0.5 * x) * 4.0 * PI * PI / (4.0 * PI * PI - x * x)
                } else {
                    4.0 * PI * PI * sinc(0.5 * (x - 2.0 * PI)) / (x * (x + 2.0 * PI))
                }
            }
        }
    }
}

/// Degree cap: beyond this the moment sums get slow and `sin(Nθ/2)` loses digits.
const MAX_DEGREE: u64 = 1 << 26;

#[derive(Debug, Clone)]
struct Factor {
    /// number of taps δ + 1
    taps: f64,
    /// (weight, shift) pairs of the Dirichlet-kernel expansion of A
    shifts: Vec<(f64, f64)>,
    a0: f64,
    m2: f64,
    m4: f64,
    m6: f64,
}

impl Factor {
    fn new(degree: u64, taper: Taper) -> Factor {
        let p = taper.power();
        let omega = PI / (degree as f64 + 2.0);
        let mut shifts = Vec::with_capacity(p as usize + 1);
        let mut binom = 1.0;
        for k in 0..=p {
            shifts.push((binom / f64::from(1u32 << p), f64::from(p as i32 - 2 * k as i32) * omega));
            binom = binom * f64::from(p - k) / f64::from(k + 1);
        }
        // window moments, by direct summation over the half-integer or integer taps
        let half = degree as f64 / 2.0;
        let (mut s0, mut s2, mut s4, mut s6) = (0.0, 0.0, 0.0, 0.0);
        for t in 0..=degree {
            let m = t as f64 - half;
            let a = (omega * m).cos().powi(p as i32);
            let m2 = m * m;
            s0 += a;
            s2 += a * m2;
            s4 += a * m2 * m2;
            s6 += a * m2 * m2 * m2;
        }
        let mut f = Factor {
            taps: degree as f64 + 1.0,
            shifts,
            a0: 0.0,
            m2: s2 / s0,
            m4: s4 / s0,
            m6: s6 / s0,
        };
        f.a0 = f.amplitude(0.0);
        f
    }

    fn dirichlet(&self, x: f64) -> f64 {
        let s = (0.5 * x).sin();
        if s == 0.0 {
            self.taps
        } else {
            (0.5 * self.taps * x).sin() / s
        }
    }

    fn amplitude(&self, theta: f64) -> f64 {
        self.shifts.iter().map(|&(w, nu)| w * self.dirichlet(theta + nu)).sum()
    }

    /// ln κ(θ), using the moment series where direct evaluation would cancel.
    fn ln_kappa(&self, theta: f64) -> f64 {
        let t2 = theta * theta;
        if self.m2.sqrt() * theta < 1e-2 {
            let r = -self.m2 * t2 / 2.0 + self.m4 * t2 * t2 / 24.0 - self.m6 * t2 * t2 * t2 / 720.0;
            2.0 * r.ln_1p()
        } else {
            2.0 * (self.amplitude(theta) / self.a0).abs().ln()
        }
    }

    /// Upper bound for κ on a neighbourhood of θ: write A as
    /// sin(Nθ/2)·P(θ) + cos(Nθ/2)·Q(θ) and bound by √(P²+Q²).
    fn envelope(&self, theta: f64) -> f64 {
        let mut p = 0.0;
        let mut q = 0.0;
        for &(w, nu) in &self.shifts {
            let s = (0.5 * (theta + nu)).sin();
            if s.abs() < 1e-300 {
                return 1.0;
            }
            let phase = 0.5 * self.taps * nu;
            p += w * phase.cos() / s;
            q += w * phase.sin() / s;
        }
        ((p * p + q * q) / (self.a0 * self.a0)).min(1.0)
    }
}

/// λ ↦ θ with cos θ = 1 − λ/4, stable near λ = 0.
pub fn theta_of_lambda(lambda: f64) -> f64 {
    2.0 * (lambda / 8.0).clamp(0.0, 1.0).sqrt().asin()
}

/// Symbol of −Δ at lattice momentum k.
pub fn lambda_of(k0: f64, k1: f64) -> f64 {
    let a = (0.5 * k0).sin();
    let b = (0.5 * k1).sin();
    4.0 * (a * a + b * b)
}

/// The family F_h, h = 0..=horizon.
#[derive(Debug, Clone)]
pub struct CutoffFamily {
    gamma: u32,
    m_fine: u32,
    taper: Taper,
    factors: Vec<Factor>,
}

/// Build the cutoff family with `horizon` factors.
pub fn build_cutoffs(gamma: u32, m_fine: u32, horizon: usize, taper: Taper) -> CovResult<CutoffFamily> {
    if gamma < 3 || gamma % 2 == 0 {
        return Err(CovError::InvalidLattice(format!("gamma = {gamma} must be odd and at least 3")));
    }
    if m_fine == 0 {
        return Err(CovError::InvalidLattice("M must be positive".into()));
    }
    let mut factors = Vec::with_capacity(horizon);
    let mut g = 1u64;
    for i in 0..horizon {
        let degree = (u64::from(gamma) - 1) * g / 2;
        if degree > MAX_DEGREE {
            return Err(CovError::Construction(format!(
                "factor {i} has degree {degree}, above the supported {MAX_DEGREE}"
            )));
        }
        factors.push(Factor::new(degree, taper));
        g *= u64::from(gamma);
    }
    let fam = CutoffFamily { gamma, m_fine, taper, factors };
    fam.validate()?;
    Ok(fam)
}

impl CutoffFamily {
    pub fn gamma(&self) -> u32 {
        self.gamma
    }

    pub fn m_fine(&self) -> u32 {
        self.m_fine
    }

    pub fn taper(&self) -> Taper {
        self.taper
    }

    pub fn horizon(&self) -> usize {
        self.factors.len()
    }

    /// Polynomial degree of factor i in cos θ.
    pub fn degree(&self, i: usize) -> u64 {
        (self.factors[i].taps as u64) - 1
    }

    /// ℓ¹ radius of the support of the kernel with symbol (F_h − F_{h'})/λ.
    pub fn band_radius(&self, h_hi: usize) -> u64 {
        let deg: u64 = (0..h_hi).map(|i| self.degree(i)).sum();
        deg.saturating_sub(1)
    }

    /// Second moment sum Σ_{i∈[h0,h1)} m2_i; (F_{h0} − F_{h1})/λ at λ = 0 is half of it.
    fn moment_sum(&self, h0: usize, h1: usize) -> f64 {
        self.factors[h0..h1].iter().map(|f| f.m2).sum()
    }

    pub fn ln_factor(&self, i: usize, theta: f64) -> f64 {
        self.factors[i].ln_kappa(theta)
    }

    /// ln F_h(θ).
    pub fn ln_cutoff(&self, h: usize, theta: f64) -> f64 {
        self.factors[..h].iter().map(|f| f.ln_kappa(theta)).sum()
    }

    /// F_h at lattice momentum k (massless family).
    pub fn cutoff(&self, h: usize, k0: f64, k1: f64) -> f64 {
        self.ln_cutoff(h, theta_of_lambda(lambda_of(k0, k1))).exp()
    }

    /// (F_{h0} − F_{h1})/λ as a function of λ, finite at λ = 0.
    pub fn band_symbol(&self, h0: usize, h1: usize, lambda: f64) -> f64 {
        if lambda <= 0.0 {
            return 0.5 * self.moment_sum(h0, h1);
        }
        let theta = theta_of_lambda(lambda);
        let mut lo = 0.0;
        for f in &self.factors[..h0] {
            lo += f.ln_kappa(theta);
        }
        let mut band = 0.0;
        for f in &self.factors[h0..h1] {
            band += f.ln_kappa(theta);
        }
        lo.exp() * (-band.exp_m1()) / lambda
    }

    /// F_h(θ)/λ with the zero mode mapped to 0 (massless tail, normalized).
    pub fn tail_symbol(&self, h: usize, lambda: f64) -> f64 {
        if lambda <= 0.0 {
            return 0.0;
        }
        self.ln_cutoff(h, theta_of_lambda(lambda)).exp() / lambda
    }

    /// Upper envelope of F_h(θ), smooth in θ.
    pub fn envelope(&self, h: usize, theta: f64) -> f64 {
        self.factors[..h].iter().map(|f| f.envelope(theta)).product()
    }

    /// A θ_c such that (F_{h0} − F_{h1})/λ ≤ eps·(its value at 0) for all θ ≥ θ_c.
    pub fn band_cut(&self, h0: usize, h1: usize, eps: f64) -> f64 {
        if h0 == 0 {
            return PI;
        }
        let target = eps * 0.5 * self.moment_sum(h0, h1);
        const STEPS: usize = 1 << 15;
        let mut sup: f64 = 0.0;
        for s in (1..=STEPS).rev() {
            let theta = PI * s as f64 / STEPS as f64;
            let lam = 8.0 * (0.5 * theta).sin().powi(2);
            // the envelope is evaluated at the left end of each cell and is
            // smooth on the cell scale; pad it by a factor of two
            sup = sup.max(2.0 * self.envelope(h0, theta) / lam);
            if sup > target {
                return (PI * (s + 1) as f64 / STEPS as f64).min(PI);
            }
        }
        PI / STEPS as f64
    }

    /// Continuum profile u(p) = Π_{i≥0} Ŵ(β_i p)², β_i = (γ−1)/(2√2 γ^{i+1}).
    pub fn continuum_u(&self, p: f64) -> f64 {
        let g = f64::from(self.gamma);
        let mut beta = (g - 1.0) / (2.0 * std::f64::consts::SQRT_2 * g);
        let mut u = 1.0;
        while beta * p > 1e-9 {
            let w = self.taper.continuum(beta * p);
            u *= w * w;
            if u == 0.0 {
                break;
            }
            beta /= g;
        }
        u
    }

    fn validate(&self) -> CovResult<()> {
        // 0 ≤ κ ≤ 1 on a coarse grid, and monotone F_h
        for (i, f) in self.factors.iter().enumerate() {
            for s in 0..=256 {
                let theta = PI * s as f64 / 256.0;
                let k = f.ln_kappa(theta).exp();
                if !(-1e-12..=1.0 + 1e-12).contains(&k) || k.is_nan() {
                    return Err(CovError::Construction(format!(
                        "factor {i} leaves [0,1] at theta = {theta}: {k}"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct_amplitude(degree: u64, p: i32, theta: f64) -> f64 {
        let omega = PI / (degree as f64 + 2.0);
        let half = degree as f64 / 2.0;
        (0..=degree)
            .map(|t| {
                let m = t as f64 - half;
                (omega * m).cos().powi(p) * (m * theta).cos()
            })
            .sum()
    }

    #[test]
    fn closed_form_matches_direct_sum() {
        for taper in [Taper::Box, Taper::Sine, Taper::Hann] {
            for &degree in &[1u64, 3, 9, 27, 81] {
                let f = Factor::new(degree, taper);
                for s in 0..50 {
                    let theta = 0.063 * s as f64;
                    let a = f.amplitude(theta);
                    let b = direct_amplitude(degree, taper.power() as i32, theta);
                    assert!((a - b).abs() < 1e-10 * f.a0, "{taper:?} {degree} {theta}: {a} {b}");
                }
            }
        }
    }

    #[test]
    fn hann_normalization() {
        for &d in &[1u64, 3, 9, 243] {
            let f = Factor::new(d, Taper::Hann);
            assert!((f.a0 - (d as f64 + 2.0) / 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn series_branch_is_continuous() {
        let f = Factor::new(729, Taper::Hann);
        let th = 1e-2 / f.m2.sqrt();
        let a = f.ln_kappa(th * (1.0 - 1e-9));
        let b = 2.0 * (f.amplitude(th * (1.0 + 1e-9)) / f.a0).ln();
        assert!((a - b).abs() < 1e-8 * a.abs(), "{a} {b}");
    }

    #[test]
    fn envelope_dominates() {
        let fam = build_cutoffs(3, 1, 6, Taper::Hann).unwrap();
        for s in 1..2000 {
            let theta = PI * s as f64 / 2000.0;
            for h in 0..=6 {
                let v = fam.ln_cutoff(h, theta).exp();
                assert!(v <= fam.envelope(h, theta) * (1.0 + 1e-9) + 1e-300);
            }
        }
    }

    #[test]
    fn f0_is_one_and_f_decreases() {
        let fam = build_cutoffs(3, 1, 5, Taper::Hann).unwrap();
        assert_eq!(fam.cutoff(0, 1.0, 2.0), 1.0);
        for s in 0..100 {
            let k = 0.0314 * s as f64;
            let mut prev = 1.0;
            for h in 0..=5 {
                let v = fam.cutoff(h, k, 0.3 * k);
                assert!(v <= prev + 1e-15 && v >= 0.0);
                prev = v;
            }
        }
    }

    #[test]
    fn continuum_profile_limits() {
        for taper in [Taper::Box, Taper::Sine, Taper::Hann] {
            let fam = build_cutoffs(3, 1, 4, taper).unwrap();
            assert_eq!(fam.continuum_u(0.0), 1.0);
            assert!(fam.continuum_u(3000.0) < 1e-8);
            // removable poles are finite and continuous
            let x = 2.0 * PI;
            let a = taper.continuum(x - 1e-7);
            let b = taper.continuum(x + 1e-7);
            assert!((a - b).abs() < 1e-6);
        }
    }
}
