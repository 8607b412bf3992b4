//! Numerical integration: double-exponential rules for endpoint singularities
//! and adaptive Gauss–Kronrod for smooth integrands.
//!
//! The double-exponential rules pass the integrand the distance from each
//! endpoint alongside the abscissa so that singular factors such as
//! `(b - x)^{-β}` can be evaluated without cancellation.

use num_complex::Complex64;
use std::f64::consts::FRAC_PI_2;
use std::ops::{Add, AddAssign, Mul, Sub};

/// Real or complex integrand values.
pub trait Scalar:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> + AddAssign + Send + Sync
{
    fn zero() -> Self;
    fn modulus(self) -> f64;
    fn finite(self) -> bool;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn modulus(self) -> f64 {
        self.abs()
    }
    fn finite(self) -> bool {
        self.is_finite()
    }
}

impl Scalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn modulus(self) -> f64 {
        self.norm()
    }
    fn finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

/// Integral value with an error estimate.
#[derive(Clone, Copy, Debug)]
pub struct Estimate<T> {
    pub value: T,
    pub error: f64,
}

const DE_TMAX: f64 = 6.5;
const DE_MAX_LEVEL: u32 = 11;

/// Tanh-sinh quadrature of `f(x, x - a, b - x)` over `[a, b]`.
pub fn tanh_sinh<T, F>(f: F, a: f64, b: f64, rel_tol: f64) -> Estimate<T>
where
    T: Scalar,
    F: Fn(f64, f64, f64) -> T,
{
    let half = 0.5 * (b - a);
    if half <= 0.0 {
        return Estimate { value: T::zero(), error: 0.0 };
    }
    let node = |t: f64| -> Option<T> {
        let u = FRAC_PI_2 * t.sinh();
        let cu = u.cosh();
        let w = half * FRAC_PI_2 * t.cosh() / (cu * cu);
        // distance from the nearer endpoint: half * (1 - tanh|u|)
        let e = (-2.0 * u.abs()).exp();
        let near = half * 2.0 * e / (1.0 + e);
        if near <= 0.0 || w == 0.0 || !w.is_finite() {
            return None;
        }
        let far = 2.0 * half - near;
        let (x, da, db) = if t < 0.0 { (a + near, near, far) } else { (b - near, far, near) };
        let v = f(x, da, db);
        Some(if v.finite() { v * w } else { T::zero() })
    };

    let mut h = 1.0;
    let mut sum = node(0.0).unwrap_or(T::zero());
    let mut k = 1;
    loop {
        let t = k as f64 * h;
        if t > DE_TMAX {
            break;
        }
        if let Some(v) = node(t) {
            sum += v;
        }
        if let Some(v) = node(-t) {
            sum += v;
        }
        k += 1;
    }
    let mut prev = sum * h;
    let mut error = f64::INFINITY;
    for _level in 1..=DE_MAX_LEVEL {
        h *= 0.5;
        let mut k = 1;
        loop {
            let t = k as f64 * h;
            if t > DE_TMAX {
                break;
            }
            if let Some(v) = node(t) {
                sum += v;
            }
            if let Some(v) = node(-t) {
                sum += v;
            }
            k += 2;
        }
        let cur = sum * h;
        error = (cur - prev).modulus();
        prev = cur;
        if error <= rel_tol * cur.modulus() || error < 1e-300 {
            break;
        }
    }
    Estimate { value: prev, error }
}

/// Exp-sinh quadrature of `f(x, x - a)` over `[a, ∞)`.
pub fn exp_sinh<T, F>(f: F, a: f64, rel_tol: f64) -> Estimate<T>
where
    T: Scalar,
    F: Fn(f64, f64) -> T,
{
    const T_LO: f64 = -6.5;
    const T_HI: f64 = 5.0;
    let node = |t: f64| -> Option<T> {
        let u = FRAC_PI_2 * t.sinh();
        let d = u.exp();
        let w = FRAC_PI_2 * t.cosh() * d;
        if d <= 0.0 || !d.is_finite() || !w.is_finite() {
            return None;
        }
        let v = f(a + d, d);
        Some(if v.finite() { v * w } else { T::zero() })
    };
    let sweep = |h: f64, start: i64, stride: i64, acc: &mut T| {
        let kmin = (T_LO / h).ceil() as i64;
        let kmax = (T_HI / h).floor() as i64;
        let mut k = kmin;
        while k.rem_euclid(stride) != start.rem_euclid(stride) {
            k += 1;
        }
        while k <= kmax {
            if let Some(v) = node(k as f64 * h) {
                *acc += v;
            }
            k += stride;
        }
    };
    let mut h = 0.5;
    let mut sum = T::zero();
    sweep(h, 0, 1, &mut sum);
    let mut prev = sum * h;
    let mut error = f64::INFINITY;
    for _ in 1..=DE_MAX_LEVEL {
        h *= 0.5;
        sweep(h, 1, 2, &mut sum);
        let cur = sum * h;
        error = (cur - prev).modulus();
        prev = cur;
        if error <= rel_tol * cur.modulus() || error < 1e-300 {
            break;
        }
    }
    Estimate { value: prev, error }
}

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
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<T: Scalar, F: Fn(f64) -> T>(f: &F, a: f64, b: f64) -> (T, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += s * WGK[j];
        if j % 2 == 1 {
            gauss += s * WG[j / 2];
        }
    }
    let kron = kron * h;
    let gauss = gauss * h;
    (kron, (kron - gauss).modulus())
}

/// Adaptive Gauss–Kronrod (7/15) quadrature on `[a, b]`.
pub fn gauss_kronrod<T, F>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64, max_intervals: usize) -> Estimate<T>
where
    T: Scalar,
    F: Fn(f64) -> T,
{
    if b <= a {
        return Estimate { value: T::zero(), error: 0.0 };
    }
    let (v0, e0) = gk15(&f, a, b);
    let mut pieces: Vec<(f64, f64, T, f64)> = vec![(a, b, v0, e0)];
    loop {
        let mut total = T::zero();
        let mut err = 0.0;
        let mut worst = 0;
        for (i, p) in pieces.iter().enumerate() {
            total += p.2;
            err += p.3;
            if p.3 > pieces[worst].3 {
                worst = i;
            }
        }
        if err <= abs_tol.max(rel_tol * total.modulus()) || pieces.len() >= max_intervals {
            return Estimate { value: total, error: err };
        }
        let (lo, hi, _, _) = pieces.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Estimate { value: total, error: err };
        }
        let (vl, el) = gk15(&f, lo, mid);
        let (vr, er) = gk15(&f, mid, hi);
        pieces.push((lo, mid, vl, el));
        pieces.push((mid, hi, vr, er));
    }
}
