//! Structural checks on the kernel catalogue: dissipativity margins,
//! subordination contraction, Fourier symbol and long-time decay.
//!
//! `cargo run --release --example verify`

use genfrac::kernels::{make_kernel, Family};
use genfrac::verify::{check_dissipativity, check_fourier_symbol, check_relaxation_decay, check_weighted_contraction, FourierOptions, TestPath};

fn main() -> genfrac::Result<()> {
    for family in [Family::Caputo { beta: 0.5 }, Family::GammaSub { a: 1.0, b: 1.0 }, Family::Classical] {
        let k = make_kernel(&family)?;
        println!("{}", k.id());
        for path in TestPath::CANONICAL {
            let rep = check_dissipativity(&k, 1.0, path, 0.0025, 30.0)?;
            println!("  dissipativity {:<8} lhs {:.6} rhs {:.6} margin {:+.2e}", path.id(), rep.lhs, rep.rhs, rep.margin);
        }
        let decay = check_relaxation_decay(&k, 1.0, 1000.0, 4096)?;
        match decay.slope {
            Some(s) => println!("  decay slope {s:.3}"),
            None => println!("  decay fit rejected: {}", decay.note),
        }
    }

    let caputo = make_kernel(&Family::Caputo { beta: 0.5 })?;
    let fourier = check_fourier_symbol(&caputo, &[0.5, 1.0, 2.0], &FourierOptions::default())?;
    for p in &fourier.points {
        println!("fourier r = {}: ratio ({:+.6}, {:+.6}) error {:.1e}", p.r, p.ratio[0], p.ratio[1], p.error);
    }
    let f = |s: f64| (-s).exp();
    let c = check_weighted_contraction(&caputo, 1.0, 1.0, &f, &[(1.0, 1.0), (4.0, 1.0)])?;
    println!("contraction: {:.6} <= {:.6}, mass {:.12}", c.lhs, c.rhs, c.mass);
    Ok(())
}
