//! Small numerical kernels: adaptive Gauss–Kronrod quadrature, the Bessel
//! function J0, straight-line fits and equispaced Lagrange weights.

use std::f64::consts::PI;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One 15-point Kronrod panel: (kronrod estimate, |kronrod − gauss|).
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

#[derive(Debug, Clone, Copy)]
pub struct Quad {
    pub value: f64,
    pub error: f64,
    pub converged: bool,
}

/// Adaptive GK15 on `[a, b]` split first into `panels` equal pieces.
/// Each piece is bisected until its error estimate is below its share of `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize, tol: f64) -> Quad {
    let panels = panels.max(1);
    let width = (b - a) / panels as f64;
    let mut value = 0.0;
    let mut error = 0.0;
    let mut converged = true;
    for p in 0..panels {
        let lo = a + width * p as f64;
        let hi = if p + 1 == panels { b } else { lo + width };
        let q = adapt(&f, lo, hi, tol / panels as f64, 0);
        value += q.value;
        error += q.error;
        converged &= q.converged;
    }
    Quad { value, error, converged }
}

fn adapt<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> Quad {
    let (v, e) = gk15(f, a, b);
    if e <= tol.max(1e-15 * v.abs()) {
        return Quad { value: v, error: e, converged: true };
    }
    if depth >= 40 {
        return Quad { value: v, error: e, converged: false };
    }
    let m = 0.5 * (a + b);
    let l = adapt(f, a, m, 0.5 * tol, depth + 1);
    let r = adapt(f, m, b, 0.5 * tol, depth + 1);
    Quad {
        value: l.value + r.value,
        error: l.error + r.error,
        converged: l.converged && r.converged,
    }
}

/// Bessel function of the first kind, order zero.
pub fn bessel_j0(x: f64) -> f64 {
    let x = x.abs();
    if x <= 25.0 {
        j0_trapezoid(x)
    } else {
        j0_hankel(x)
    }
}

/// Trapezoid rule for (1/2π)∫cos(x sin t) dt; the aliasing error is of size J_N(x).
fn j0_trapezoid(x: f64) -> f64 {
    const N: usize = 96;
    let h = 2.0 * PI / N as f64;
    let s: f64 = (0..N).map(|i| (x * (h * i as f64).sin()).cos()).sum();
    s / N as f64
}

/// Hankel expansion, summed until the terms start growing.
fn j0_hankel(x: f64) -> f64 {
    let mut p = 0.0;
    let mut qs = 0.0;
    let mut a: f64 = 1.0; // a_k(0) / x^k
    let mut last = f64::INFINITY;
    for k in 0..60usize {
        if a.abs() > last {
            break;
        }
        last = a.abs();
        match k % 4 {
            0 => p += a,
            1 => qs += a,
            2 => p -= a,
            _ => qs -= a,
        }
        let m = (2 * k + 1) as f64;
        a *= -(m * m) / ((k + 1) as f64 * 8.0 * x);
    }
    let chi = x - 0.25 * PI;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - qs * chi.sin())
}

/// Least-squares line `y = slope·x + intercept`; also the max absolute residual.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let resid = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - slope * x - intercept).abs())
        .fold(0.0, f64::max);
    (slope, intercept, resid)
}

/// Lagrange weights for nodes `0, 1, …, n−1` evaluated at `t`.
pub fn lagrange_weights(n: usize, t: f64, out: &mut [f64]) {
    for (i, w) in out.iter_mut().enumerate().take(n) {
        let mut v = 1.0;
        for k in 0..n {
            if k != i {
                v *= (t - k as f64) / (i as f64 - k as f64);
            }
        }
        *w = v;
    }
}

/// `sin(x)/x` with its series near zero.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn j0_known_values() {
        // values from Abramowitz & Stegun table 9.1
        assert!((bessel_j0(0.0) - 1.0).abs() < 1e-15);
        assert!((bessel_j0(1.0) - 0.765_197_686_557_966_6).abs() < 1e-14);
        assert!((bessel_j0(5.0) + 0.177_596_771_314_338_3).abs() < 1e-14);
        assert!((bessel_j0(10.0) + 0.245_935_764_451_348_3).abs() < 1e-13);
        assert!((bessel_j0(2.404_825_557_695_773).abs()) < 1e-14);
    }

    #[test]
    fn j0_continuous_across_branch() {
        for x in [20.0, 25.0, 30.0] {
            let (a, b) = (j0_trapezoid(x), j0_hankel(x));
            assert!((a - b).abs() < 1e-15, "{a} {b}");
        }
        // J0(20), J0(50) reference values
        assert!((bessel_j0(20.0) - 0.167_024_664_340_583_2).abs() < 1e-14);
        assert!((bessel_j0(50.0) - 0.055_812_327_669_252_09).abs() < 1e-14);
    }

    #[test]
    fn j0_integral_identity() {
        // Bessel's integral: J0(x) = (1/π)∫_0^π cos(x sin t) dt
        for &x in &[0.3, 3.7, 11.9, 12.5, 31.0] {
            let q = integrate(|t: f64| (x * t.sin()).cos(), 0.0, PI, 8, 1e-14);
            assert!((q.value / PI - bessel_j0(x)).abs() < 1e-12, "x={x}");
        }
    }

    #[test]
    fn quadrature_polynomial_and_oscillatory() {
        let q = integrate(|x| x.powi(5), 0.0, 2.0, 1, 1e-14);
        assert!((q.value - 64.0 / 6.0).abs() < 1e-12);
        let q = integrate(|x| (50.0 * x).cos(), 0.0, 1.0, 4, 1e-13);
        assert!((q.value - (50.0f64).sin() / 50.0).abs() < 1e-12);
    }

    #[test]
    fn line_fit_exact() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 * x - 1.0).collect();
        let (s, c, r) = fit_line(&xs, &ys);
        assert!((s - 2.5).abs() < 1e-14 && (c + 1.0).abs() < 1e-14 && r < 1e-14);
    }

    #[test]
    fn lagrange_reproduces_cubic() {
        let mut w = [0.0; 6];
        lagrange_weights(6, 2.37, &mut w);
        let v: f64 = (0..6).map(|i| w[i] * (i as f64).powi(3)).sum();
        assert!((v - 2.37f64.powi(3)).abs() < 1e-12);
    }
}
