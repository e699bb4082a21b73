// Every orthogonal matrix is a product of Householder reflections: decompose
// random orthogonal matrices, rebuild them and compare. Also saves a stack in
// the binary format and reads it back.
//
// cargo run --release --example qr_roundtrip

use nalgebra::DMatrix;
use ornn::householder::{decompose_orthogonal, materialize, orthogonality_error, qr_decompose};
use ornn::io::{read_stack, write_stack};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(rng))
}

pub fn run_example() -> ornn::Result<f64> {
    let n = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let (q_stack, _) = qr_decompose(&gaussian(n, &mut rng))?;
        let q = materialize(&q_stack);
        let stack = decompose_orthogonal(&q)?;
        let err = (materialize(&stack) - &q).amax();
        worst = worst.max(err);
    }
    println!("n = {n}: worst round-trip error over 10 matrices {worst:.2e}");

    let mut d = DMatrix::identity(5, 5);
    d[(4, 4)] = -1.0;
    let stack = decompose_orthogonal(&d)?;
    println!(
        "diag(1, 1, 1, 1, -1): sign factor {}, rebuild error {:.1e}",
        stack.sign(),
        (materialize(&stack) - &d).amax()
    );

    let mut bytes = Vec::new();
    write_stack(&mut bytes, &stack)?;
    let back = read_stack(&mut bytes.as_slice())?;
    println!(
        "binary stack: {} bytes, identical after reading back: {}",
        bytes.len(),
        back == stack
    );

    let a = gaussian(6, &mut rng);
    let (q, r) = qr_decompose(&a)?;
    println!(
        "QR of a 6x6 Gaussian: |Q'Q - I| = {:.1e}, |A - QR| = {:.1e}",
        orthogonality_error(&materialize(&q)),
        (materialize(&q) * r - a).norm()
    );
    Ok(worst)
}

fn main() -> ornn::Result<()> {
    run_example()?;
    Ok(())
}
