//! Recover `C_12 + C_21` of a polynomial system from form values and watch
//! the error fall with delta.

use poslab::coefficient::{Bc, BoxDomain, EllipticSystem, MatrixField, PolyMatrix};
use poslab::lab::{observed_order, probe, ProbeOptions};
use poslab::poly::Polynomial;

fn main() -> poslab::Result<()> {
    let d = 2;
    let x = |i| Polynomial::coordinate(d, i);
    let q = &x(0).mul_poly(&x(0)) + &x(1);
    let six = MatrixField::scalar_identity(1, 6.0);
    let off = MatrixField::Polynomial(PolyMatrix::new(1, vec![q.clone()])?);
    let sys = EllipticSystem::new(BoxDomain::cube(d, 0.0, 1.0), vec![six.clone(), off.clone(), off, six], Bc::Free, 1.0)?;
    let x0 = [0.4, 0.3];
    let r = probe(&sys, &x0, 0, 1, &ProbeOptions::default())?;
    let exact = sys.symmetrized(0, 1, &x0)?;
    let errs = r.errors(&exact);
    for (delta, e) in r.deltas.iter().zip(&errs) {
        println!("delta {delta:.4e}  error {e:.3e}");
    }
    println!("observed order {:?}", observed_order(&r.deltas, &errs));
    println!(
        "extrapolated {} (exact {}), error {:.3e}",
        r.estimate[(0, 0)],
        exact[(0, 0)],
        (r.estimate[(0, 0)] - exact[(0, 0)]).norm()
    );
    Ok(())
}
