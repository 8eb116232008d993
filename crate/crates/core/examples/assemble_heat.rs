//! Assemble the Dirichlet Laplacian on the unit square and check `a(u, u)`
//! for a discrete sine mode.

use poslab::assembly::{assemble, Grid};
use poslab::catalog;
use poslab::C64;
use std::f64::consts::PI;

fn main() -> poslab::Result<()> {
    let sys = catalog::get("scalar_heat")?.system;
    for n in [8, 16, 32] {
        let grid = Grid::for_system(&sys, n)?;
        let form = assemble(&sys, &grid)?;
        let u = grid.interpolate(1, |x| vec![C64::new((PI * x[0]).sin() * (PI * x[1]).sin(), 0.0)]);
        let energy = form.form(&u, &u).re;
        println!(
            "n = {n:2}: {} unknowns, a(u,u) = {energy:.6} (continuum {:.6})",
            form.size(),
            PI * PI / 2.0
        );
    }
    Ok(())
}
