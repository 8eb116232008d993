//! A decoupled system evolves channel by channel: compare the block
//! semigroup with the scalar ones.

use poslab::assembly::{assemble, Grid};
use poslab::catalog;
use poslab::lab::{decide_decoupling, DecisionOptions};
use poslab::semigroup::Factorization;
use poslab::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> poslab::Result<()> {
    let sys = catalog::get("rand_decoupled(2)")?.system;
    let v = decide_decoupling(&sys, &DecisionOptions::default())?;
    let scalars = v.scalar_systems.expect("decoupled");
    let grid = Grid::for_system(&sys, 8)?;
    let block = assemble(&sys, &grid)?;
    let channels = scalars.iter().map(|s| assemble(s, &grid)).collect::<poslab::Result<Vec<_>>>()?;
    let f = Factorization::new(&block, &channels)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let u: Vec<C64> = (0..block.size()).map(|_| C64::new(rng.random_range(-1.0..1.0), 0.0)).collect();
    for t in [1e-3, 1e-2, 1e-1] {
        println!("t = {t:.0e}: residual {:.3e}", f.residual(t, &u)?);
    }
    Ok(())
}
