// Back-propagation through time with stored versus regenerated tapes: same
// gradients bit for bit, less memory, more flops.
//
// cargo run --release --example bptt_storage

use ornn::backprop::{bptt, StorageMode};
use ornn::model::{Activation, OrnnParams};
use ornn::tasks::{TaskKind, TaskSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn run(n: usize, m: usize, t_len: usize) -> ornn::Result<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let params = OrnnParams::init(n, m, 2, 1, Activation::LeakyRelu, &mut rng)?;
    let batch = TaskSpec::new(TaskKind::Addition, t_len, 4, 1).generate()?;
    let stored = bptt(&params, &batch, StorageMode::StoreTapes)?;
    let recomputed = bptt(&params, &batch, StorageMode::RecomputeTapes)?;
    let same = stored.grads == recomputed.grads;
    for (name, r) in [("store", &stored), ("recompute", &recomputed)] {
        println!(
            "{name:>9}: peak tape values {:>8}, forward flops {:>10}, backward flops {:>10}",
            r.peak_tape_values, r.fp_flops, r.bp_flops
        );
    }
    println!("identical gradients: {same}");
    Ok(same)
}

pub fn run_example() -> ornn::Result<bool> {
    run(16, 4, 10)
}

fn main() -> ornn::Result<()> {
    run(128, 32, 200)?;
    Ok(())
}
