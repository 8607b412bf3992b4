//! Weakly monotone problem `A(u) = -u + u³` solved by the exponentially
//! weighted fixed-point iteration and compared with per-step Newton.
//!
//! `cargo run --release --example fixed_point`

use genfrac::kernels::{make_kernel, Family};
use genfrac::operators::scalar_operator;
use genfrac::solver::{choose_gamma, run, weighted_distance, weighted_fixed_point, zero_forcing, SolveConfig, Strategy};

fn main() -> genfrac::Result<()> {
    let kernel = make_kernel(&Family::Caputo { beta: 0.5 })?;
    let op = scalar_operator(1, -1.0, 1.0)?;
    println!("smallest admissible gamma for C1 = 1: {:.4}", choose_gamma(&kernel, 1.0)?);
    let mut cfg = SolveConfig::new(1.0 / 64.0, 64);
    cfg.strategy = Strategy::WeightedFixedPoint;
    cfg.fixedpoint.sweep_tol = 1e-10;
    let newton = {
        let mut c = cfg;
        c.strategy = Strategy::NewtonPerStep;
        run(&kernel, &op, &[0.5], zero_forcing(1), &c)?
    };
    for gamma in [8.0, 25.0, 100.0] {
        cfg.fixedpoint.gamma = Some(gamma);
        let (tr, rep) = weighted_fixed_point(&kernel, &op, &[0.5], zero_forcing(1), &cfg)?;
        println!(
            "gamma {gamma:>5}: bound {:.3}  observed rate {:.3}  sweeps {:>3}  distance to Newton {:.1e}",
            rep.bound,
            rep.rho_hat,
            rep.sweeps,
            weighted_distance(&op, &tr, &newton, gamma)
        );
    }
    println!("u(1) = {:.8}", newton.last()[0]);
    Ok(())
}
