use std::f64::consts::PI;

use coulomb_rg::lattice_covariance::{torus_yukawa, TorusLattice};
use coulomb_rg::partition_oracle::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn torus(side: u32) -> TorusLattice {
    TorusLattice::new(side, 1, side, 0.0).unwrap()
}

const BETA_KT: f64 = 8.0 * PI;

fn random_configuration(rng: &mut ChaCha8Rng, side: i64, n: usize, neutral: bool) -> ChargeConfiguration {
    let mut p: Vec<([i64; 2], i8)> =
        (0..n).map(|_| ([rng.gen_range(0..side), rng.gen_range(0..side)], if rng.gen_bool(0.5) { 1 } else { -1 })).collect();
    if neutral {
        for (i, q) in p.iter_mut().enumerate() {
            q.1 = if i % 2 == 0 { 1 } else { -1 };
        }
    }
    ChargeConfiguration::new(p).unwrap()
}

#[test]
fn energy_examples() {
    let t = torus(5);
    let dipole = ChargeConfiguration::new(vec![([0, 0], 1), ([1, 0], -1)]).unwrap();
    // W(e₁|0) = −(1 − 1/25)/4 on the 5×5 torus
    let e = configuration_energy(&dipole, &t, 0.0);
    assert!((e.total() - 0.24).abs() < 1e-12, "{e:?}");
    assert_eq!(e.charged, 0.0);
    let single = ChargeConfiguration::new(vec![([2, 2], -1)]).unwrap();
    assert!(configuration_energy(&single, &t, 0.0).total().is_infinite());
}

#[test]
fn weights_never_exceed_one() {
    let t = torus(5);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for k in 0..300 {
        let n = 1 + k % 6;
        let neutral = n % 2 == 0 && k % 3 == 0;
        let cfg = random_configuration(&mut rng, 5, n, neutral);
        for m in [0.0, 0.1, 0.5] {
            let h = configuration_energy(&cfg, &t, m).total();
            assert!(h >= -1e-12, "H = {h}");
            assert!((-BETA_KT * h).exp() <= 1.0 + 1e-10);
        }
    }
}

#[test]
fn charged_sectors_follow_the_self_energy() {
    let t = torus(5);
    let g = grand_z(&t, BETA_KT, 0.05, 3, &DEFAULT_MASSES).unwrap();
    for s in g.sectors.iter().filter(|s| s.charge != 0) {
        assert_eq!(s.limit, 0.0);
        assert!(s.by_mass.windows(2).all(|w| w[1] < w[0]), "{s:?}");
        // H ≥ Q²W(0;m)/2 − C(n,2) max_d |W(d|0;m)|, and the pair term stays
        // bounded as m → 0, so only the self-energy drives the sector to zero
        let pairs = (s.n * (s.n - 1) / 2) as f64;
        let cap = 25f64.powi(s.n as i32) / (1..=s.n).map(|k| k as f64).product::<f64>();
        for (m, v) in DEFAULT_MASSES.iter().zip(&s.by_mass) {
            let tm = t.with_mass(*m);
            let w0 = torus_yukawa(&tm, [0, 0]).unwrap();
            let spread = (0..25i64).map(|k| w0 - torus_yukawa(&tm, [k / 5, k % 5]).unwrap()).fold(0.0, f64::max);
            assert!(spread < 0.5, "m={m}: {spread}");
            let self_energy = (-0.5 * BETA_KT * (s.charge * s.charge) as f64 * w0).exp();
            assert!(*v <= cap * self_energy * (BETA_KT * pairs * spread).exp() * (1.0 + 1e-12), "n={} Q={} m={m}", s.n, s.charge);
        }
    }
}

#[test]
fn activity_expansion_structure() {
    let t = torus(5);
    for beta in [2.0, BETA_KT] {
        let zero = neutral_z(&t, beta, 0.0, 4).unwrap();
        assert_eq!(zero.z_value, 1.0);
        let r = grand_z(&t, beta, 0.05, 4, &DEFAULT_MASSES).unwrap();
        assert_eq!(r.coefficients[0], 1.0);
        assert_eq!(r.coefficients[1], 0.0);
        assert_eq!(r.coefficients[3], 0.0);
        assert_eq!(r.value_at(0.05).to_bits(), r.value_at(-0.05).to_bits());
        let d = neutral_z(&t, beta, 0.05, 4).unwrap();
        for n in [2, 4] {
            let (a, b) = (r.coefficients[n], d.coefficients[n]);
            assert!((a - b).abs() <= 10.0 * r.residual + 1e-10 * b, "β={beta} n={n}: {a} vs {b}");
        }
    }
}

#[test]
fn siegert_kac_identity() {
    let t = torus(5);
    let opts = SiegertKacOptions { s_values: vec![0.1, 0.25, 0.45], masses: vec![0.5, 0.25], tolerance: 1e-9 };
    let rep = siegert_kac_check(&t, BETA_KT, 0.05, 4, &opts).unwrap();
    assert!(rep.passed, "max error {}", rep.max_error);
    assert!(rep.rows.iter().any(|r| r.mass == 0.0));
    assert!(rep.rows.iter().all(|r| (0.0..0.5).contains(&r.s)));
    assert!((rep.z_configuration - rep.z_field).abs() <= 1e-9 * rep.z_configuration);
    let bad = SiegertKacOptions { s_values: vec![0.6], ..opts };
    assert!(siegert_kac_check(&t, BETA_KT, 0.05, 4, &bad).is_err());
}

#[test]
fn pressure_examples() {
    let t = torus(5);
    assert_eq!(pressure_estimate(&t, BETA_KT, 0.0, 4).unwrap(), 0.0);
    let small = pressure_estimate(&t, BETA_KT, 0.01, 4).unwrap();
    let large = pressure_estimate(&t, BETA_KT, 0.05, 4).unwrap();
    assert!(0.0 < small && small < large);
    // leading order: ln Z ≈ c₂z²
    let c2 = neutral_z(&t, BETA_KT, 0.01, 2).unwrap().coefficients[2];
    let lead = c2 * 1e-4 / (BETA_KT * 25.0);
    assert!((small / lead - 1.0).abs() < 0.05, "{small} vs {lead}");
}

#[test]
fn oracle_csv_layout() {
    let g = grand_z(&torus(3), 2.0, 0.1, 2, &[0.5, 0.25]).unwrap();
    let mut buf = Vec::new();
    write_oracle_csv(&g, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("n,charge,mass,coefficient\n"));
    assert!(!text.contains('\r'));
}
