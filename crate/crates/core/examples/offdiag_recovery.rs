//! Recover the off-diagonal coefficient of a free-boundary system, including
//! its constant antisymmetric part.

use poslab::catalog;
use poslab::lab::extract_offdiag_2d;

fn main() -> poslab::Result<()> {
    let sys = catalog::get("ex1_3_free")?.system;
    let r = extract_offdiag_2d(&sys, 1e-8)?;
    println!("constant antisymmetric part: {} (residual {:.3e})", r.constant_antisymmetric, r.constancy_residual);
    let x = [0.5, -1.0];
    let c12 = r.c12_at(&sys, &x)?;
    let exact = sys.eval(0, 1, &x)?;
    println!("recovered C12 = {c12}");
    println!("error {:.3e}", (c12 - exact).iter().map(|z| z.norm()).fold(0.0, f64::max));
    Ok(())
}
