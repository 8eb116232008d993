//! Multiplication-operator predicates on small matrices and the witness for
//! a non-diagonal one.

use poslab::coefficient::real_matrix;
use poslab::multop::{commutes_with_indicators, dominated_on_basis, find_witness, is_multiplication};

fn main() {
    let diag = real_matrix(3, &[1.0, 0.0, 0.0, 0.0, -2.0, 0.0, 0.0, 0.0, 5.0]);
    let coupled = real_matrix(3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.3, 0.0, 0.3, 1.0]);
    for (name, q) in [("diagonal", &diag), ("coupled", &coupled)] {
        println!(
            "{name}: multiplication {}, commutes {}, dominated {}",
            is_multiplication(q, 1e-12),
            commutes_with_indicators(q, 1e-12),
            dominated_on_basis(q, 1e-12)
        );
        if let Some(w) = find_witness(q, 1e-12) {
            println!("  witness f = {:?}, B = {:?}, pairing {}", w.f, w.b, w.pairing);
        }
    }
}
