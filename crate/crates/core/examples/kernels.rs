//! Tour of the kernel catalogue: symbols, admissibility and Sonine conjugates.
//!
//! `cargo run --release --example kernels`

use genfrac::kernels::{catalogue, levy_symbol, log_grid, sonine_conjugate, verify_kernel_conditions, ConditionOptions};

fn main() -> genfrac::Result<()> {
    let grid = log_grid(1e-6, 1e3, 200);
    println!("{:<34} {:>10} {:>10} {:>10} {:>12} {:>10}", "kernel", "psi(1)", "psi(10)", "levy(10)", "sonine res", "admissible");
    for k in catalogue() {
        let conditions = verify_kernel_conditions(&k, &grid, ConditionOptions::default());
        let levy = if k.is_classical() { f64::NAN } else { levy_symbol(&k, 10.0)? };
        let sonine = match sonine_conjugate(&k, 1e-4, 20_000) {
            Ok((_, rep)) => format!("{:.1e}", rep.max_residual),
            Err(e) => format!("({e})"),
        };
        println!(
            "{:<34} {:>10.5} {:>10.5} {:>10.5} {:>12} {:>10}",
            k.id(),
            k.psi_real(1.0)?,
            k.psi_real(10.0)?,
            levy,
            sonine,
            conditions.all_pass()
        );
    }

    // The conjugate of the Caputo kernel of order 1/2 is t^{-1/2}/Γ(1/2).
    let k = genfrac::kernels::make_kernel(&genfrac::kernels::Family::Caputo { beta: 0.5 })?;
    for t in [0.01, 0.1, 1.0] {
        println!("k~({t}) = {:.8}  vs  {:.8}", k.k_tilde(t).unwrap(), 1.0 / (std::f64::consts::PI * t).sqrt());
    }
    Ok(())
}
