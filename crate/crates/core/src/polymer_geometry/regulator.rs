//! Field regulators G_j and G^str_j. Derivatives are ∂^μφ_x = φ_{x+μ} − φ_x
//! over the four unit vectors; sums over μ carry a factor ½.
//!
//! ```text
//! ln G_j(φ, X)   = c₁κ ‖∇_jφ‖²_{L²_j(X)} + c₃κ ‖∇_jφ‖²_{L²_j(∂X)} + c₁κ Σ_{B ⊂ X} ‖∇²_jφ‖²_{L^∞(B*)}
//! ln G^str_j(φ, X) = κ Σ_{B ⊂ X} max_{n=1,2} ‖∇^n_jφ‖²_{L^∞(B*)}
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BlockPaving, Polymer, PolymerError, PolymerResult, DIRS};

/// κ_L = c / ln L.
pub fn kappa_l(l: u32, c: f64) -> f64 {
    c / f64::from(l).ln()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegulatorConsts {
    pub c1: f64,
    pub c3: f64,
    pub kappa: f64,
}

/// A real field on the side × side torus, row-major in x₀.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldOnTorus {
    side: usize,
    values: Vec<f64>,
}

impl FieldOnTorus {
    pub fn new(side: usize, values: Vec<f64>) -> Option<FieldOnTorus> {
        (values.len() == side * side && values.iter().all(|v| v.is_finite())).then_some(FieldOnTorus { side, values })
    }

    pub fn from_fn(side: usize, f: impl Fn([usize; 2]) -> f64) -> FieldOnTorus {
        FieldOnTorus { side, values: (0..side * side).map(|k| f([k / side, k % side])).collect() }
    }

    pub fn constant(side: usize, c: f64) -> FieldOnTorus {
        FieldOnTorus { side, values: vec![c; side * side] }
    }

    /// Σ_m a_m cos(2π k_m·x/side + θ_m) over `modes` random wave vectors with
    /// |k_i| ≤ `kmax`, amplitudes uniform in [−1, 1] scaled by 1/|k|.
    pub fn random_smooth(side: usize, modes: usize, kmax: i64, seed: u64) -> FieldOnTorus {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let waves: Vec<([f64; 2], f64, f64)> = (0..modes)
            .map(|_| {
                let k = loop {
                    let k = [rng.gen_range(-kmax..=kmax), rng.gen_range(-kmax..=kmax)];
                    if k != [0, 0] {
                        break k;
                    }
                };
                let norm = ((k[0] * k[0] + k[1] * k[1]) as f64).sqrt();
                let a: f64 = rng.gen_range(-1.0..=1.0) / norm;
                let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                ([k[0] as f64, k[1] as f64], a, th)
            })
            .collect();
        let w = std::f64::consts::TAU / side as f64;
        FieldOnTorus::from_fn(side, |x| {
            waves.iter().map(|(k, a, th)| a * (w * (k[0] * x[0] as f64 + k[1] * x[1] as f64) + th).cos()).sum()
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn at(&self, x: [i64; 2]) -> f64 {
        let s = self.side as i64;
        self.values[(x[0].rem_euclid(s) * s + x[1].rem_euclid(s)) as usize]
    }

    fn d(&self, x: [i64; 2], mu: [i64; 2]) -> f64 {
        self.at([x[0] + mu[0], x[1] + mu[1]]) - self.at(x)
    }

    fn dd(&self, x: [i64; 2], mu: [i64; 2], nu: [i64; 2]) -> f64 {
        self.d([x[0] + nu[0], x[1] + nu[1]], mu) - self.d(x, mu)
    }

    /// ½ Σ_μ |∂^μφ_x|²
    fn grad_sq(&self, x: [i64; 2]) -> f64 {
        0.5 * DIRS.iter().map(|&mu| self.d(x, mu).powi(2)).sum::<f64>()
    }
}

/// Per-block data of one field at one scale.
#[derive(Debug, Clone)]
pub struct RegulatorContext<'a> {
    paving: &'a BlockPaving,
    field: &'a FieldOnTorus,
    /// Σ_{x∈B} ½Σ_μ|∂^μφ_x|²
    l2: Vec<f64>,
    /// ‖∇_jφ‖²_{L^∞(B*)} and ‖∇²_jφ‖²_{L^∞(B*)}
    star1: Vec<f64>,
    star2: Vec<f64>,
}

impl<'a> RegulatorContext<'a> {
    pub fn new(paving: &'a BlockPaving, field: &'a FieldOnTorus) -> PolymerResult<RegulatorContext<'a>> {
        if field.side() as u64 != paving.lattice().side() {
            return Err(PolymerError::Identity(format!(
                "field side {} differs from the torus side {}",
                field.side(),
                paving.lattice().side()
            )));
        }
        let lj = paving.block_side() as f64;
        let per_block = crate::par::map(paving.block_count(), |b| {
            let (mut l2, mut m1, mut m2) = (0.0f64, 0.0f64, 0.0f64);
            for s in paving.sites(b) {
                let x = [s[0] as i64, s[1] as i64];
                l2 += field.grad_sq(x);
                for mu in DIRS {
                    m1 = m1.max(field.d(x, mu).abs());
                    for nu in DIRS {
                        m2 = m2.max(field.dd(x, mu, nu).abs());
                    }
                }
            }
            (l2, (lj * m1).powi(2), (lj * lj * m2).powi(2))
        });
        let stars = crate::par::map(paving.block_count(), |b| paving.neighborhood(&paving.polymer([b])));
        let mut star1 = vec![0.0; paving.block_count()];
        let mut star2 = vec![0.0; paving.block_count()];
        for (b, star) in stars.into_iter().enumerate() {
            let star = star?;
            for &c in star.blocks() {
                star1[b] = f64::max(star1[b], per_block[c].1);
                star2[b] = f64::max(star2[b], per_block[c].2);
            }
        }
        Ok(RegulatorContext { paving, field, l2: per_block.iter().map(|t| t.0).collect(), star1, star2 })
    }

    fn check(&self, x: &Polymer) -> PolymerResult<()> {
        if x.j() != self.paving.j() {
            return Err(PolymerError::ScaleMismatch { got: x.j(), want: self.paving.j() });
        }
        Ok(())
    }

    /// ‖∇_jφ‖²_{L²_j(X)}
    pub fn l2_interior(&self, x: &Polymer) -> f64 {
        x.blocks().iter().map(|&b| self.l2[b]).sum()
    }

    /// ‖∇_jφ‖²_{L²_j(∂X)} = L^j Σ_{x∈∂X} ½Σ_μ|∂^μφ_x|²
    pub fn l2_boundary(&self, x: &Polymer) -> f64 {
        let lj = self.paving.block_side() as f64;
        lj * self.paving.boundary_sites(x).iter().map(|s| self.field.grad_sq([s[0] as i64, s[1] as i64])).sum::<f64>()
    }

    /// W_j(∇²_jφ, X)²
    pub fn w_squared(&self, x: &Polymer) -> f64 {
        x.blocks().iter().map(|&b| self.star2[b]).sum()
    }

    pub fn ln_regulator(&self, x: &Polymer, c: &RegulatorConsts) -> PolymerResult<f64> {
        self.check(x)?;
        Ok(c.c1 * c.kappa * self.l2_interior(x) + c.c3 * c.kappa * self.l2_boundary(x) + c.c1 * c.kappa * self.w_squared(x))
    }

    pub fn regulator(&self, x: &Polymer, c: &RegulatorConsts) -> PolymerResult<f64> {
        self.ln_regulator(x, c).map(f64::exp)
    }

    pub fn ln_strong(&self, x: &Polymer, kappa: f64) -> PolymerResult<f64> {
        self.check(x)?;
        Ok(kappa * x.blocks().iter().map(|&b| self.star1[b].max(self.star2[b])).sum::<f64>())
    }

    pub fn strong(&self, x: &Polymer, kappa: f64) -> PolymerResult<f64> {
        self.ln_strong(x, kappa).map(f64::exp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice_covariance::TorusLattice;

    #[test]
    fn constant_field() {
        let lat = TorusLattice::with_l(3, 3, 0.0).unwrap();
        let p = BlockPaving::new(&lat, 1).unwrap();
        let phi = FieldOnTorus::constant(27, 2.5);
        let ctx = RegulatorContext::new(&p, &phi).unwrap();
        let x = p.polymer([0, 1, 10]);
        let c = RegulatorConsts { c1: 5.0, c3: 1.0, kappa: kappa_l(3, 0.5) };
        assert_eq!(ctx.regulator(&x, &c).unwrap(), 1.0);
        assert_eq!(ctx.strong(&x, c.kappa).unwrap(), 1.0);
    }

    #[test]
    fn linear_gradient_norms() {
        // triangle wave in x₀: |∂φ| = 1 on two of the four directions
        let lat = TorusLattice::with_l(3, 3, 0.0).unwrap();
        let p = BlockPaving::new(&lat, 1).unwrap();
        let phi = FieldOnTorus::from_fn(27, |x| x[0].min(27 - x[0]) as f64);
        let ctx = RegulatorContext::new(&p, &phi).unwrap();
        // block (1, 0) covers x₀ ∈ 2..=4: gradient magnitude 1 in x₀ only
        let b = p.index([1, 0]);
        let x = p.polymer([b]);
        assert!((ctx.l2_interior(&x) - 9.0).abs() < 1e-12);
        assert_eq!(ctx.star1[b], 9.0);
    }

    #[test]
    fn bad_field() {
        assert!(FieldOnTorus::new(3, vec![0.0; 8]).is_none());
        assert!(FieldOnTorus::new(2, vec![0.0, 1.0, f64::NAN, 0.0]).is_none());
    }

    #[test]
    fn factorizes_over_components() {
        let lat = TorusLattice::with_l(3, 3, 0.0).unwrap();
        let p = BlockPaving::new(&lat, 1).unwrap();
        let c = RegulatorConsts { c1: 5.0, c3: 1.0, kappa: kappa_l(3, 0.5) };
        // three pieces, two of them touching only at a corner
        let x = p.polymer([p.index([0, 0]), p.index([0, 1]), p.index([1, 2]), p.index([5, 5]), p.index([6, 5])]);
        let comps = p.components(&x);
        assert_eq!(comps.len(), 3);
        for seed in 0..5 {
            let phi = FieldOnTorus::random_smooth(27, 6, 3, seed);
            let ctx = RegulatorContext::new(&p, &phi).unwrap();
            let whole = ctx.ln_regulator(&x, &c).unwrap();
            let parts: f64 = comps.iter().map(|y| ctx.ln_regulator(y, &c).unwrap()).sum();
            assert!((whole - parts).abs() <= 1e-12 * whole, "{whole} {parts}");
        }
    }

    #[test]
    fn strong_regulator_grows_with_the_scale() {
        let lat = TorusLattice::with_l(3, 4, 0.0).unwrap();
        let fine = BlockPaving::new(&lat, 1).unwrap();
        let coarse = fine.coarser().unwrap();
        let kappa = kappa_l(3, 0.5);
        for seed in 0..3 {
            let phi = FieldOnTorus::random_smooth(81, 6, 3, seed);
            let f = RegulatorContext::new(&fine, &phi).unwrap();
            let g = RegulatorContext::new(&coarse, &phi).unwrap();
            for d in [0, 13, 40] {
                let y = coarse.polymer([d, (d + 1) % 81]);
                let x = fine.polymer((0..fine.block_count()).filter(|&b| y.contains(fine.parent(b))));
                assert!(f.ln_strong(&x, kappa).unwrap() <= g.ln_strong(&y, kappa).unwrap());
            }
        }
    }

    #[test]
    fn strong_below_regulator_for_block_scale_fields() {
        let lat = TorusLattice::with_l(3, 3, 0.0).unwrap();
        let p = BlockPaving::new(&lat, 1).unwrap();
        let c = RegulatorConsts { c1: 5.0, c3: 1.0, kappa: kappa_l(3, 0.5) };
        let polys = super::super::connected_polymers(&p, 2);
        for seed in 0..10 {
            let phi = FieldOnTorus::random_smooth(27, 6, 2, seed);
            let ctx = RegulatorContext::new(&p, &phi).unwrap();
            for x in &polys {
                assert!(ctx.ln_strong(x, c.kappa).unwrap() <= ctx.ln_regulator(x, &c).unwrap());
            }
        }
    }

    #[test]
    fn single_block_at_a_slow_critical_point() {
        // φ = cos(2πx₀/81): at the crest the gradient in B is tiny while B*
        // still sees the slope; with c₁ = 5 the strong regulator wins
        let lat = TorusLattice::with_l(3, 4, 0.0).unwrap();
        let p = BlockPaving::new(&lat, 1).unwrap();
        let phi = FieldOnTorus::from_fn(81, |x| 10.0 * (std::f64::consts::TAU * x[0] as f64 / 81.0).cos());
        let ctx = RegulatorContext::new(&p, &phi).unwrap();
        let b = p.polymer([p.block_of([0, 0])]);
        let c = RegulatorConsts { c1: 5.0, c3: 1.0, kappa: 1.0 };
        assert!(ctx.ln_strong(&b, 1.0).unwrap() > ctx.ln_regulator(&b, &c).unwrap());
        let c = RegulatorConsts { c1: 40.0, ..c };
        assert!(ctx.ln_strong(&b, 1.0).unwrap() < ctx.ln_regulator(&b, &c).unwrap());
    }
}
