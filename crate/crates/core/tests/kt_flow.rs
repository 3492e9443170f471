use coulomb_rg::kt_flow::*;
use coulomb_rg::lattice_covariance::{build_cutoffs, coulomb_constant_c, decompose, DecomposeOptions, Taper, TorusLattice};
use coulomb_rg::rg_coefficients::{limit_constants, ALPHA_SQ_KT};
use coulomb_rg::stable_manifold::{solve_fixed_point, ManifoldProblem};

fn limit_l9() -> FlowCoefficients {
    let c = coulomb_constant_c(&build_cutoffs(3, 2, 10, Taper::Hann).unwrap()).unwrap();
    let (a, b) = limit_constants(9, ALPHA_SQ_KT, c.c).unwrap();
    FlowCoefficients::limit(a, b)
}

fn per_scale_l9() -> FlowCoefficients {
    let lat = TorusLattice::with_l(9, 5, 0.0).unwrap();
    let cut = build_cutoffs(3, 2, 10, Taper::Hann).unwrap();
    let s = decompose(&lat, &cut, &DecomposeOptions { tail_max_side: 0, ..DecomposeOptions::default() }).unwrap();
    FlowCoefficients::from_stack(&s, 4).unwrap()
}

fn config(horizon: usize) -> FlowConfig {
    FlowConfig { horizon, ..FlowConfig::default() }
}

#[test]
fn kosterlitz_sequence_examples() {
    assert!((kosterlitz_q(0.1, 11) - 0.05).abs() < 1e-15);
    assert_eq!(kosterlitz_q(0.0, 1000), 0.0);
}

#[test]
fn axis_point_is_fixed() {
    let s = step(&FlowState::new(1, 0.3, 0.0, 0.0), &limit_l9(), &config(10));
    assert_eq!((s.x, s.y, s.kappa, s.diverged), (0.3, 0.0, 0.0, false));
    let t = trajectory(0.4, 0.0, &config(1000), &limit_l9()).unwrap();
    assert!(t.divergence.is_none());
    assert!(t.states.iter().all(|s| s.x == 0.4 && s.y == 0.0));
}

#[test]
fn diagonal_start_tracks_the_kosterlitz_solution() {
    let q1 = 0.01;
    let t = trajectory(q1, q1, &config(10_000), &limit_l9()).unwrap();
    assert!(t.divergence.is_none());
    let worst = t
        .states
        .iter()
        .map(|s| {
            let q = kosterlitz_q(q1, s.j);
            let envelope = q1 * (1.0 + q1 * (s.j as f64 - 1.0)).powf(-1.5);
            (s.x - q).abs().max((s.y - q).abs()) / envelope
        })
        .fold(0.0, f64::max);
    assert!(worst < 0.1, "{worst}");
}

#[test]
fn below_the_separatrix_the_activity_escapes() {
    let t = trajectory(-0.05, 0.05, &config(100_000), &limit_l9()).unwrap();
    assert!(t.divergence.is_some());
    let last = t.states.last().unwrap();
    assert!(last.y > 10.0 * 0.05, "{last:?}");
    let ys: Vec<f64> = t.states.iter().map(|s| s.y).collect();
    assert!(ys.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn on_manifold_trajectory_stays_in_the_envelope() {
    let coeffs = limit_l9();
    let y1 = 0.01;
    let x1 = solve_fixed_point(&ManifoldProblem::new(y1, 100_000, config(100_000), coeffs.clone())).unwrap().sigma;
    let t = trajectory(x1, y1, &config(100_000), &coeffs).unwrap();
    assert!(t.divergence.is_none());
    assert!(t.states.iter().all(|s| s.x.abs() <= 2.0 * kosterlitz_q(y1, s.j)));
    let fit = deviation_profile(&t, y1).unwrap();
    assert!(fit.x_exponent <= -1.3, "{fit:?}");

    // doubling q₁ moves the amplitude, not the exponent
    let x2 = solve_fixed_point(&ManifoldProblem::new(2.0 * y1, 100_000, config(100_000), coeffs.clone())).unwrap().sigma;
    let fit2 = deviation_profile(&trajectory(x2, 2.0 * y1, &config(100_000), &coeffs).unwrap(), 2.0 * y1).unwrap();
    assert!((fit2.x_exponent - fit.x_exponent).abs() <= 0.2, "{} vs {}", fit.x_exponent, fit2.x_exponent);
}

#[test]
fn zero_activity_deviation_is_undefined() {
    let t = trajectory(0.0, 0.0, &config(100), &limit_l9()).unwrap();
    assert!(matches!(deviation_profile(&t, 0.0), Err(FlowError::Undefined)));
    let bad = trajectory(-0.05, 0.05, &config(100_000), &limit_l9()).unwrap();
    assert!(deviation_profile(&bad, 0.05).is_err());
}

#[test]
fn original_variables_round_trip() {
    let coeffs = limit_l9();
    for (s, z) in [(0.001, 0.002), (-0.01, 0.0), (0.0, -3e-4)] {
        let (x, y) = to_rescaled(s, z, &coeffs);
        let (s2, z2) = to_original(x, y, &coeffs);
        assert!((s2 - s).abs() <= 1e-16 * s.abs().max(1e-300) + f64::EPSILON * s.abs());
        assert!((z2 - z).abs() <= 2.0 * f64::EPSILON * z.abs());
    }
    assert!(from_original(0.01, 0.01, &coeffs, &FlowConfig::default()).is_err());
}

#[test]
fn divergence_time_is_monotone_across_the_separatrix() {
    let coeffs = limit_l9();
    let y1 = 0.01;
    let cfg = config(100_000);
    // below Σ(y₁) = y₁ the escape comes later the closer x₁ is to it
    let starts: Vec<(f64, f64)> = (1..=8).map(|k| (y1 - 0.004 / f64::from(1 << k), y1)).collect();
    let times: Vec<usize> = sweep(&starts, &cfg, &coeffs).unwrap().iter().map(|r| r.divergence.expect("escapes")).collect();
    assert!(times.windows(2).all(|w| w[1] > w[0]), "{times:?}");
    // above it the activity dies out and the flow stays bounded
    let above: Vec<(f64, f64)> = (1..=4).map(|k| (y1 + 0.001 * k as f64, y1)).collect();
    for r in sweep(&above, &cfg, &coeffs).unwrap() {
        assert!(r.divergence.is_none());
    }
    let t = trajectory(y1 + 0.002, y1, &cfg, &coeffs).unwrap();
    assert!(t.states.last().unwrap().y.abs() < 1e-6);
}

#[test]
fn per_scale_and_limit_steps_converge() {
    let ps = per_scale_l9();
    let lim = FlowCoefficients::limit(ps.a, ps.b);
    let cfg_ps = FlowConfig { mode: CoefficientMode::PerScale, ..config(10) };
    let cfg_lim = config(10);
    let (x, y) = (0.01, 0.01);
    let diff: Vec<f64> = (1..=4)
        .map(|j| {
            let s = FlowState::new(j, x, y, 0.0);
            let (a, b) = (step(&s, &ps, &cfg_ps), step(&s, &lim, &cfg_lim));
            (a.x - b.x).abs().max((a.y - b.y).abs())
        })
        .collect();
    let scaled: Vec<f64> = diff.iter().enumerate().map(|(i, d)| d * 9f64.powf((i + 1) as f64 / 4.0)).collect();
    assert!(scaled.windows(2).all(|w| w[1] < w[0]), "{scaled:?}");
    // beyond the tabulated scales both modes coincide
    let s = FlowState::new(5, x, y, 0.0);
    assert_eq!(step(&s, &ps, &cfg_ps), step(&s, &lim, &cfg_lim));
}

#[test]
fn surrogate_feeds_back_through_kappa() {
    let coeffs = limit_l9();
    let cfg = FlowConfig { surrogate: Some(Surrogate::default()), ..config(50) };
    let t = trajectory(0.01, 0.01, &cfg, &coeffs).unwrap();
    assert!(t.states[1].kappa > 0.0);
    assert!(t.states.iter().all(|s| s.kappa >= 0.0 && s.kappa < 1e-5));
    let bad = FlowConfig { surrogate: Some(Surrogate { rho: 1.0, ..Surrogate::default() }), ..cfg };
    assert!(matches!(trajectory(0.01, 0.01, &bad, &coeffs), Err(FlowError::InvalidConfig(_))));
}

#[test]
fn trajectory_csv_layout() {
    let t = trajectory(0.01, 0.01, &config(5), &limit_l9()).unwrap();
    let mut buf = Vec::new();
    write_trajectory_csv(&t, 0.01, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("j,x,y,kappa,q,x_minus_q,y_minus_q\n"));
    assert_eq!(text.lines().count(), 6);
    assert!(!text.contains('\r'));
}
