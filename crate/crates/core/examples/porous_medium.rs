//! Porous medium equation with gamma-subordinator memory on the unit square.
//! Prints the H-energy and the mass over time.
//!
//! `cargo run --release --example porous_medium`

use genfrac::kernels::{make_kernel, Family};
use genfrac::operators::{constant, porous_medium_operator, SpatialGrid};
use genfrac::solver::{run, zero_forcing, SolveConfig};

fn main() -> genfrac::Result<()> {
    let kernel = make_kernel(&Family::GammaSub { a: 1.0, b: 1.0 })?;
    let grid = SpatialGrid::new(2, 24, 1.0)?;
    let op = porous_medium_operator(grid, 2.0, constant(1.0), constant(0.0), 1.0)?;
    let u0 = grid.sample(|x| {
        let r2 = (x[0] - 0.4).powi(2) + (x[1] - 0.5).powi(2);
        (1.0 - 25.0 * r2).max(0.0)
    });
    let cfg = SolveConfig::new(0.01, 200);
    let tr = run(&kernel, &op, &u0, zero_forcing(u0.len()), &cfg)?;
    let h = grid.cell_volume();
    for n in (0..=cfg.n).step_by(20) {
        let mass: f64 = tr.states[n].iter().sum::<f64>() * h;
        let peak = tr.states[n].iter().copied().fold(f64::MIN, f64::max);
        println!("t = {:5.2}  energy {:.6e}  mass {:.6e}  max {:.5}", tr.times[n], tr.energy[n], mass, peak);
    }
    let newton: usize = tr.diagnostics.iter().map(|d| d.newton_iterations).sum();
    println!("Newton iterations {newton}, max residual {:.1e}", tr.max_residual());
    if let Some(check) = &tr.integral_check {
        println!("integral form check passes: {}", check.pass());
    }
    Ok(())
}
