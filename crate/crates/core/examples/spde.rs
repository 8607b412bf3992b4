//! Stochastic heat equation with two different memory kernels and
//! trace-class additive noise. Reports the effective kernel and ensemble spread.
//!
//! `cargo run --release --example spde`

use genfrac::kernels::{make_kernel, Family};
use genfrac::operators::{constant, porous_medium_operator, EigenBasis, SpatialGrid};
use genfrac::solver::{run, zero_forcing, SolveConfig};
use genfrac::stochastic::{modal_diffusion, solve_spde, EnsembleOptions, NoiseModel};

fn main() -> genfrac::Result<()> {
    let k1 = make_kernel(&Family::Caputo { beta: 0.7 })?;
    let k2 = make_kernel(&Family::Caputo { beta: 0.4 })?;
    let grid = SpatialGrid::new(1, 31, 1.0)?;
    let op = porous_medium_operator(grid, 1.0, constant(1.0), constant(0.0), 1.0)?;
    let basis = EigenBasis::new(grid, 1.0)?;
    let (tau, n) = (1.0 / 128.0, 128);
    let noise = NoiseModel::new(&k1, &k2, modal_diffusion(&basis, 8, 0.2, 1.0), grid.size(), 8, 11, tau, n)?;
    println!("kappa: {:?}, local exponent {:.3}", noise.kappa.method, noise.kappa.local_exponent);

    let x0 = grid.sample(|x| (std::f64::consts::PI * x[0]).sin());
    let cfg = SolveConfig::new(tau, n);
    let ens = solve_spde(&k1, &noise, &op, &x0, zero_forcing(x0.len()), &cfg, EnsembleOptions::new(512))?;
    let det = run(&k1, &op, &x0, zero_forcing(x0.len()), &cfg)?;
    let mid = grid.size() / 2;
    for m in (0..=n).step_by(16) {
        println!(
            "t = {:.3}  mean {:+.5} ± {:.5}  deterministic {:+.5}  sd {:.5}",
            ens.times[m],
            ens.mean[m][mid],
            ens.se[m][mid],
            det.states[m][mid],
            ens.var[m][mid].sqrt()
        );
    }
    println!("max step residual over all paths {:.1e}", ens.max_residual);
    Ok(())
}
