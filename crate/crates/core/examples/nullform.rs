//! The cubic antisymmetric scalar system on `(-1,1)^3` has an identically
//! zero form; assemble it and probe it.

use poslab::assembly::{assemble, Grid};
use poslab::catalog;
use poslab::lab::{probe, ProbeOptions};

fn main() -> poslab::Result<()> {
    let sys = catalog::get("ex3_5_nullform")?.system;
    for n in [2, 4, 6] {
        let form = assemble(&sys, &Grid::for_system(&sys, n)?)?;
        println!("n = {n}: max |K| = {:.3e}", form.max_abs());
    }
    let x0 = [0.2, -0.4, 0.5];
    for (k, l) in [(0, 1), (0, 2), (1, 2)] {
        let r = probe(&sys, &x0, k, l, &ProbeOptions::default())?;
        println!("probe ({}, {}): {:.3e}", k + 1, l + 1, r.estimate[(0, 0)].norm());
    }
    Ok(())
}
