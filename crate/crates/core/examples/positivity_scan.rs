//! Scan `e^{-tA}` for negative entries on a decoupled and a coupled system.

use poslab::assembly::{assemble, Grid};
use poslab::catalog;
use poslab::semigroup::{default_times, positivity_scan, Generator};

fn main() -> poslab::Result<()> {
    for name in ["ex1_3", "witness_W"] {
        let sys = catalog::get(name)?.system;
        let form = assemble(&sys, &Grid::for_system(&sys, 8)?)?;
        let gen = Generator::from_form(&form);
        let report = positivity_scan(&gen, &default_times(&gen), 1e-12)?;
        println!("{name}: {} (min entry {:.3e})", report.verdict, report.min_entry);
        for s in &report.samples {
            println!("  t = {:.3e}  min {:+.3e}  max {:.3e}", s.t, s.min_entry, s.max_abs);
        }
    }
    Ok(())
}
