//! Special functions used by the kernel catalogue.
//!
//! Gamma, the regularized incomplete gamma functions and `erfc` come from
//! `statrs`; the exponential integral and the complex lower incomplete gamma
//! function are implemented here because `statrs` covers neither.

use num_complex::Complex64;

pub use statrs::function::erf::erfc;
pub use statrs::function::gamma::{gamma, gamma_lr, gamma_ur, ln_gamma};

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

const CF_TINY: f64 = 1e-300;
const CF_EPS: f64 = 1e-16;
const CF_MAX_ITER: usize = 20_000;

/// Exponential integral `E1(x) = Γ(0, x)` for `x > 0`.
pub fn e1(x: f64) -> f64 {
    if x <= 0.0 {
        return f64::INFINITY;
    }
    if x <= 1.0 {
        e1_series(x)
    } else {
        e1_scaled_cf(x) * (-x).exp()
    }
}

/// `e^x E1(x)`, evaluated without overflow for large `x`.
pub fn e1_scaled(x: f64) -> f64 {
    if x <= 0.0 {
        return f64::INFINITY;
    }
    if x <= 1.0 {
        e1_series(x) * x.exp()
    } else {
        e1_scaled_cf(x)
    }
}

fn e1_series(x: f64) -> f64 {
    // -γ - ln x - Σ (-x)^n / (n n!)
    let mut sum = 0.0;
    let mut fact = 1.0;
    for n in 1..200 {
        fact *= -x / n as f64;
        let term = fact / n as f64;
        sum += term;
        if term.abs() < 1e-17 * sum.abs().max(1e-300) {
            break;
        }
    }
    -EULER_GAMMA - x.ln() - sum
}

fn e1_scaled_cf(x: f64) -> f64 {
    // Lentz evaluation of the continued fraction for e^x E1(x).
    let mut b = x + 1.0;
    let mut c = 1.0 / CF_TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..CF_MAX_ITER {
        let an = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < CF_EPS {
            break;
        }
    }
    h
}

/// Lower incomplete gamma `γ(s, z) = ∫₀^z t^{s-1} e^{-t} dt` for real `s > 0`
/// and complex `z` off the negative real axis (principal branch).
pub fn lower_gamma_complex(s: f64, z: Complex64) -> Complex64 {
    if z.norm() == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    if z.norm() <= 2.0 + s {
        lower_gamma_series(s, z)
    } else {
        Complex64::new(gamma(s), 0.0) - upper_gamma_cf(s, z)
    }
}

fn lower_gamma_series(s: f64, z: Complex64) -> Complex64 {
    let mut term = Complex64::new(1.0 / s, 0.0);
    let mut sum = term;
    for n in 1..1000 {
        term = term * z / (s + n as f64);
        sum += term;
        if term.norm() < 1e-17 * sum.norm() {
            break;
        }
    }
    z.powf(s) * (-z).exp() * sum
}

fn upper_gamma_cf(s: f64, z: Complex64) -> Complex64 {
    // complex division squares the modulus, so keep the guard well above underflow
    let one = Complex64::new(1.0, 0.0);
    let tiny_norm = 1e-150;
    let tiny = Complex64::new(tiny_norm, 0.0);
    let mut b = z + 1.0 - s;
    let mut c = Complex64::new(1.0 / tiny_norm, 0.0);
    let mut d = one / b;
    let mut h = d;
    for i in 1..CF_MAX_ITER {
        let fi = i as f64;
        let an = -fi * (fi - s);
        b += 2.0;
        d = d * an + b;
        if d.norm() < tiny_norm {
            d = tiny;
        }
        c = b + an / c;
        if c.norm() < tiny_norm {
            c = tiny;
        }
        d = one / d;
        let del = d * c;
        h *= del;
        if (del - one).norm() < CF_EPS {
            break;
        }
    }
    (-z).exp() * z.powf(s) * h
}

/// Principal complex power that maps `0^p` to `0` for `p > 0`.
pub fn cpow(z: Complex64, p: f64) -> Complex64 {
    if z.norm() == 0.0 {
        if p > 0.0 {
            Complex64::new(0.0, 0.0)
        } else if p == 0.0 {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(f64::INFINITY, 0.0)
        }
    } else {
        z.powf(p)
    }
}

/// `ln(1 + z)` accurate for small `|z|`.
pub fn cln_1p(z: Complex64) -> Complex64 {
    if z.norm() < 1e-4 {
        // z - z²/2 + z³/3 - z⁴/4
        let z2 = z * z;
        z - z2 / 2.0 + z2 * z / 3.0 - z2 * z2 / 4.0
    } else {
        (z + 1.0).ln()
    }
}

/// `E_{1/2}(-x) = e^{x²} erfc(x)` for `x >= 0`; the relaxation function of
/// the Caputo derivative of order one half.
pub fn mittag_leffler_half_neg(x: f64) -> f64 {
    if x < 25.0 {
        (x * x).exp() * erfc(x)
    } else {
        // asymptotic: 1/(x√π) (1 - 1/(2x²) + 3/(4x⁴))
        let x2 = x * x;
        (1.0 - 0.5 / x2 + 0.75 / (x2 * x2)) / (x * std::f64::consts::PI.sqrt())
    }
}
