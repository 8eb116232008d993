//! Run the decoupling decision on every catalog entry with positive
//! ellipticity constant.

use poslab::catalog;
use poslab::lab::{decide_decoupling, DecisionOptions};

fn main() -> poslab::Result<()> {
    for entry in catalog::list() {
        if entry.system.mu <= 0.0 {
            println!("{:16} skipped (mu = 0)", entry.name);
            continue;
        }
        let v = decide_decoupling(&entry.system, &DecisionOptions::default())?;
        let witness = v.witness.as_ref().map_or("-", |w| w.kind());
        println!("{:16} {:20} expected {:20} witness {witness}", entry.name, v.decision, entry.expected);
    }
    Ok(())
}
