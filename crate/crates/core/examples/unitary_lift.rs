// A complex unitary chain and its real orthogonal lift: the lifted real RNN
// with paired modReLU reproduces the complex RNN step for step.
//
// cargo run --release --example unitary_lift -- [n]

use ornn::unitary::{lift_checks, LiftReport};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn run(n: usize) -> ornn::Result<LiftReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let r = lift_checks(n, 5, 50, &mut rng)?;
    println!("n = {n} complex, {} real", 2 * n);
    println!("  |W*W - I|             {:.2e}", r.unitarity_error);
    println!("  |L'L - I| of the lift {:.2e}", r.lift_orthogonality_error);
    println!("  complex vs real RNN   {:.2e}", r.rnn_step_error);
    println!("  lift(AB) - lift(A)lift(B) {:.2e}", r.homomorphism_error);
    Ok(r)
}

pub fn run_example() -> ornn::Result<LiftReport> {
    run(6)
}

fn main() -> ornn::Result<()> {
    let n = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(16);
    run(n)?;
    Ok(())
}
