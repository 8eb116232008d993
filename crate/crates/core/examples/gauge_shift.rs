//! Gauge shifts of `(C_12, C_21)` leave the Dirichlet stiffness matrix and the
//! verdict unchanged.

use poslab::assembly::{assemble, Grid};
use poslab::catalog;
use poslab::lab::{decide_decoupling, DecisionOptions};
use poslab::C64;

fn main() -> poslab::Result<()> {
    let sys = catalog::get("ex1_3")?.system;
    let grid = Grid::for_system(&sys, 8)?;
    let base = assemble(&sys, &grid)?;
    for c in [C64::new(1.0, 0.0), C64::new(0.0, 1.0), C64::new(2.0, 3.0)] {
        let g = sys.gauge(0, 1, c)?;
        let k = assemble(&g, &grid)?;
        let diff = (base.stiffness.to_dense() - k.stiffness.to_dense()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        let v = decide_decoupling(&g, &DecisionOptions::default())?;
        println!("c = {c}: max stiffness change {diff:.3e}, verdict {}", v.decision);
    }
    Ok(())
}
