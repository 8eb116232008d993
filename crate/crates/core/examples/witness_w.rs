//! Build the tent witness for `witness_W` and recompute `a(u+, u-)`.

use poslab::catalog;
use poslab::lab::{decide_decoupling, DecisionOptions, Witness};

fn main() -> poslab::Result<()> {
    let sys = catalog::get("witness_W")?.system;
    let v = decide_decoupling(&sys, &DecisionOptions::default())?;
    match v.witness {
        Some(Witness::Lattice(w)) => {
            println!("point {:?}, pair ({}, {}), delta {}", w.x0, w.ktilde + 1, w.ltilde + 1, w.delta);
            println!("f = {:?}, B = {:?}", w.mult.f, w.mult.b.iter().map(|b| b + 1).collect::<Vec<_>>());
            println!("a(u+, u-) = {}, leading term {}, bound {}", w.value, w.main, w.error_bound);
            println!("re-evaluated: {}", w.reevaluate(&sys)?);
        }
        other => println!("unexpected witness {:?}", other.map(|w| w.kind())),
    }
    Ok(())
}
