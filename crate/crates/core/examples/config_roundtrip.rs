//! Serialize a catalog system to TOML, read it back and compare the
//! assembled stiffness matrices.

use poslab::assembly::{assemble, Grid};
use poslab::catalog;
use poslab::config::{RunConfig, SystemDef};

fn main() -> poslab::Result<()> {
    let sys = catalog::get("rand_coupled(4)")?.system;
    let cfg = RunConfig {
        grid: Some(6),
        system: Some(SystemDef::from_system(&sys)),
        ..Default::default()
    };
    let text = cfg.to_toml()?;
    println!("{}", text.lines().take(12).collect::<Vec<_>>().join("\n"));
    let (back, _) = RunConfig::from_toml(&text)?.resolve()?;
    let a = assemble(&sys, &Grid::for_system(&sys, 6)?)?;
    let b = assemble(&back, &Grid::for_system(&back, 6)?)?;
    let diff = (a.stiffness.to_dense() - b.stiffness.to_dense()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    println!("...\nmax stiffness difference after round trip: {diff:.3e}");
    Ok(())
}
