//! Scalar relaxation `∂_t(k ∗ (u - 1)) + u = 0` with both memory backends,
//! compared with the Mittag-Leffler solution `E_{1/2}(-√t)`.
//!
//! `cargo run --release --example relaxation`

use genfrac::kernels::{make_kernel, Family};
use genfrac::memory::Backend;
use genfrac::operators::scalar_operator;
use genfrac::solver::{run, zero_forcing, SolveConfig};

fn ml_half(x: f64) -> f64 {
    (0..150).map(|k| (-x).powi(k) / statrs::function::gamma::gamma(1.0 + k as f64 / 2.0)).sum()
}

fn main() -> genfrac::Result<()> {
    let kernel = make_kernel(&Family::Caputo { beta: 0.5 })?;
    let op = scalar_operator(1, 1.0, 0.0)?;
    let exact = ml_half(1.0);
    println!("u(1) exact = {exact:.10}");
    for backend in [Backend::CqBackwardEuler, Backend::ProductIntegration] {
        println!("{backend:?}");
        let mut prev: Option<f64> = None;
        for p in 4..=10 {
            let n = 1usize << p;
            let mut cfg = SolveConfig::new(1.0 / n as f64, n);
            cfg.backend = backend;
            let tr = run(&kernel, &op, &[1.0], zero_forcing(1), &cfg)?;
            let err = (tr.last()[0] - exact).abs();
            let rate = prev.map_or(String::new(), |e| format!("rate {:.3}", (e / err).log2()));
            println!("  tau = 2^-{p:<2}  error {err:.3e}  {rate}");
            prev = Some(err);
        }
    }
    Ok(())
}
