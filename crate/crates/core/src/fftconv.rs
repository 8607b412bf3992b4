//! FFT-based linear convolution and a divide-and-conquer solver for
//! lower-triangular Toeplitz systems.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Below this length direct summation beats the FFT.
const DIRECT_CUTOFF: usize = 64;

/// Full linear convolution `c[n] = Σ a[j] b[n-j]`, length `a.len() + b.len() - 1`.
pub fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut planner = FftPlanner::new();
    convolve_with(&mut planner, a, b)
}

fn convolve_with(planner: &mut FftPlanner<f64>, a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    if a.len().min(b.len()) <= DIRECT_CUTOFF {
        let mut out = vec![0.0; out_len];
        for (i, &x) in a.iter().enumerate() {
            for (j, &y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        return out;
    }
    let m = out_len.next_power_of_two();
    let fwd = planner.plan_fft_forward(m);
    let inv = planner.plan_fft_inverse(m);
    // pack both real sequences into one complex transform
    let mut buf: Vec<Complex64> = (0..m)
        .map(|i| {
            Complex64::new(
                a.get(i).copied().unwrap_or(0.0),
                b.get(i).copied().unwrap_or(0.0),
            )
        })
        .collect();
    fwd.process(&mut buf);
    let mut prod = vec![Complex64::new(0.0, 0.0); m];
    for k in 0..m {
        let z = buf[k];
        let zc = buf[(m - k) % m].conj();
        let fa = (z + zc) * 0.5;
        let fb = (z - zc) * Complex64::new(0.0, -0.5);
        prod[k] = fa * fb;
    }
    inv.process(&mut prod);
    let scale = 1.0 / m as f64;
    prod.iter().take(out_len).map(|z| z.re * scale).collect()
}

/// Solve `Σ_{j=0}^{n} d[n-j] x[j] = rhs[n]` for `n = 0..rhs.len()`.
///
/// Uses online convolution (divide and conquer over the unknowns), costing
/// `O(N log² N)`. Fails with `NoConjugate` when `d[0]` is not positive.
pub fn solve_lower_toeplitz(d: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = rhs.len();
    if d.len() < n {
        return Err(Error::DimensionMismatch { expected: n, got: d.len() });
    }
    if !(d[0] > 0.0) || !d[0].is_finite() {
        return Err(Error::NoConjugate(format!("diagonal entry {:.3e} is not positive", d[0])));
    }
    let mut acc = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut planner = FftPlanner::new();
    cdq(&mut planner, d, rhs, &mut acc, &mut x, 0, n);
    Ok(x)
}

fn cdq(planner: &mut FftPlanner<f64>, d: &[f64], rhs: &[f64], acc: &mut [f64], x: &mut [f64], lo: usize, hi: usize) {
    if hi - lo <= DIRECT_CUTOFF {
        for i in lo..hi {
            let mut s = acc[i];
            for j in lo..i {
                s += d[i - j] * x[j];
            }
            x[i] = (rhs[i] - s) / d[0];
        }
        return;
    }
    let mid = lo + (hi - lo) / 2;
    cdq(planner, d, rhs, acc, x, lo, mid);
    // contributions of x[lo..mid] to rows mid..hi use d[1..hi-lo]
    let part = convolve_with(planner, &x[lo..mid], &d[1..hi - lo]);
    for i in mid..hi {
        // row i, unknown j: d[i-j]; index into conv = (j-lo) + (i-j-1) = i-lo-1
        acc[i] += part[i - lo - 1];
    }
    cdq(planner, d, rhs, acc, x, mid, hi);
}
