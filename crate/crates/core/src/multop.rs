//! Multiplication operators on `C^m = L_2({1..m})`.
//!
//! On counting measure the multiplication operators are exactly the diagonal
//! matrices. Three equivalent predicates are implemented independently so
//! they can be cross-checked.

use crate::coefficient::{cell_center, operator_norm, BoxDomain, MatrixField};
use crate::{CMat, C64};

/// `1e-9 (1 + max |Q_ij|)`.
pub fn default_tol(q: &CMat) -> f64 {
    1e-9 * (1.0 + max_abs(q))
}

pub fn max_abs(q: &CMat) -> f64 {
    q.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Every off-diagonal entry has modulus at most `tol`.
pub fn is_multiplication(q: &CMat, tol: f64) -> bool {
    let m = q.nrows();
    (0..m).all(|i| (0..m).all(|j| i == j || q[(i, j)].norm() <= tol))
}

/// `Q` commutes with the coordinate projections `1_{i}` (and hence with
/// every `1_A`).
pub fn commutes_with_indicators(q: &CMat, tol: f64) -> bool {
    let m = q.nrows();
    (0..m).all(|i| {
        let mut p = CMat::zeros(m, m);
        p[(i, i)] = C64::new(1.0, 0.0);
        let c = &p * q - q * &p;
        c.iter().all(|z| z.norm() <= tol)
    })
}

/// There is `c` with `|Q e_j| <= c |e_j|` pointwise for every basis vector.
pub fn dominated_on_basis(q: &CMat, tol: f64) -> bool {
    let m = q.nrows();
    (0..m).all(|j| {
        let mut e = CMat::zeros(m, 1);
        e[(j, 0)] = C64::new(1.0, 0.0);
        let v = q * e;
        let c = v[(j, 0)].norm() + tol;
        (0..m).all(|i| v[(i, 0)].norm() <= if i == j { c } else { tol })
    })
}

/// Data certifying that `Q` is not a multiplication operator: `f >= 0`
/// vanishes on `B` while `(Q f, 1_B) != 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct MultWitness {
    pub f: Vec<f64>,
    pub b: Vec<usize>,
    pub pairing: C64,
}

impl MultWitness {
    /// Source channel `j` with `f = e_j`.
    pub fn source(&self) -> usize {
        self.f.iter().position(|&v| v != 0.0).expect("f is a basis vector")
    }

    /// Target channel `i` with `B = {i}`.
    pub fn target(&self) -> usize {
        self.b[0]
    }

    pub fn is_valid(&self) -> bool {
        self.f.iter().all(|&v| v >= 0.0)
            && !self.b.is_empty()
            && self.b.iter().all(|&i| self.f[i] == 0.0)
            && self.pairing != C64::default()
    }
}

/// First off-diagonal entry in row-major order with `|Q_ij| > tol`.
pub fn find_witness(q: &CMat, tol: f64) -> Option<MultWitness> {
    let m = q.nrows();
    for i in 0..m {
        for j in 0..m {
            if i != j && q[(i, j)].norm() > tol {
                let mut f = vec![0.0; m];
                f[j] = 1.0;
                return Some(MultWitness {
                    f,
                    b: vec![i],
                    pairing: q[(i, j)],
                });
            }
        }
    }
    None
}

/// `(Q f, 1_B)` for a real `f`.
pub fn pairing(q: &CMat, f: &[f64], b: &[usize]) -> C64 {
    b.iter()
        .map(|&i| (0..f.len()).map(|j| q[(i, j)] * f[j]).sum::<C64>())
        .sum()
}

/// The diagonal projection `P`.
pub fn diag_projection(q: &CMat) -> CMat {
    CMat::from_diagonal(&q.diagonal())
}

/// `|Tr(S P(T)) - Tr(P(S) T)|`.
pub fn trace_duality_residual(s: &CMat, t: &CMat) -> f64 {
    ((s * diag_projection(t)).trace() - (diag_projection(s) * t).trace()).norm()
}

/// `1e-12 ‖S‖ ‖T‖ m`.
pub fn trace_duality_bound(s: &CMat, t: &CMat) -> f64 {
    1e-12 * operator_norm(s) * operator_norm(t) * s.nrows() as f64
}

/// Cells (first axis fastest) at whose centre `field` is not diagonal.
pub fn lift_failures(field: &MatrixField, domain: &BoxDomain, cells: &[usize], tol: f64) -> Vec<usize> {
    let count: usize = cells.iter().product();
    (0..count)
        .filter(|&c| {
            let x = cell_center(domain, cells, c);
            !is_multiplication(&field.eval_unchecked(domain, &x), tol)
        })
        .collect()
}

/// The induced operator on `L_2(Ω × Y)` is a multiplication operator, tested
/// at every cell centre.
pub fn lift_is_diagonal(field: &MatrixField, domain: &BoxDomain, cells: &[usize], tol: f64) -> bool {
    lift_failures(field, domain, cells, tol).is_empty()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn single(m: usize, i: usize, j: usize, z: C64) -> CMat {
        let mut q = CMat::zeros(m, m);
        q[(i, j)] = z;
        q
    }

    fn all_agree(q: &CMat, tol: f64) -> bool {
        let a = is_multiplication(q, tol);
        a == commutes_with_indicators(q, tol) && a == dominated_on_basis(q, tol)
    }

    #[test]
    fn predicate_examples() {
        let d = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.0, 0.0), c(2.0, 1.0), c(-3.0, 0.0)]));
        assert!(is_multiplication(&d, 0.0) && all_agree(&d, 0.0));
        let e = single(2, 1, 0, c(1.0, 0.0));
        assert!(!is_multiplication(&e, 1e-9) && all_agree(&e, 1e-9));
        let ex = single(2, 1, 0, c(3.0, 4.0));
        assert!(!is_multiplication(&ex, default_tol(&ex)));
    }

    #[test]
    fn witness_examples() {
        let five = CMat::from_element(1, 1, c(5.0, 0.0));
        assert_eq!(find_witness(&five, 0.0), None);

        let w = find_witness(&single(2, 1, 0, c(3.0, 4.0)), 0.0).unwrap();
        assert_eq!(w.f, vec![1.0, 0.0]);
        assert_eq!(w.b, vec![1]);
        assert_eq!(w.pairing, c(3.0, 4.0));
        assert!(w.is_valid());

        let w = find_witness(&single(2, 1, 0, c(2.0, 0.0)), 0.0).unwrap();
        assert_eq!((w.source(), w.target(), w.pairing), (0, 1, c(2.0, 0.0)));
        assert_eq!(pairing(&single(2, 1, 0, c(2.0, 0.0)), &w.f, &w.b), w.pairing);
    }

    #[test]
    fn projection_examples() {
        let i = CMat::identity(3, 3);
        assert_eq!(diag_projection(&i), i);
        let q = crate::coefficient::real_matrix(2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(diag_projection(&q), crate::coefficient::real_matrix(2, &[1.0, 0.0, 0.0, 4.0]));
        assert_eq!(diag_projection(&q).trace(), q.trace());
        assert_eq!(trace_duality_residual(&i, &i), 0.0);
    }

    #[test]
    fn lift_on_cells() {
        let dom = BoxDomain::cube(2, 0.0, 1.0);
        let diag = MatrixField::scalar_identity(2, 3.0);
        assert!(lift_is_diagonal(&diag, &dom, &[4, 4], 1e-9));
        let off = MatrixField::Constant(single(2, 0, 1, c(0.5, 0.0)));
        assert_eq!(lift_failures(&off, &dom, &[2, 3], 1e-9).len(), 6);
    }
}
