//! Build every tent pair up to d = 3 and compare its interaction matrix with
//! the target contraction.

use poslab::tents::{build_test_pair, interaction_matrix};

fn main() -> poslab::Result<()> {
    for d in 1..=3 {
        let mut worst: f64 = 0.0;
        for tau in [-2.0, -0.5, 0.5, 3.0] {
            for kt in 0..d {
                for lt in 0..d {
                    let pair = build_test_pair(tau, kt, lt, d)?;
                    let g = interaction_matrix(&pair.phi, &pair.psi)?;
                    worst = worst.max((g - pair.expected_interaction()).amax());
                }
            }
        }
        println!("d = {d}: max deviation {worst:.3e}");
    }
    Ok(())
}
