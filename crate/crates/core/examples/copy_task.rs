// Trains on the copy task and compares the per-symbol cross-entropy with the
// memoryless baseline.
//
// cargo run --release --example copy_task -- [iterations] [delay]

use ornn::tasks::{copy_memoryless_baseline, TaskKind};
use ornn::train::{train, TrainConfig};

fn run(iterations: u64, delay: usize) -> ornn::Result<(f64, f64)> {
    let cfg = TrainConfig {
        task: TaskKind::Copy,
        n: 64,
        m: 64,
        lr: 1e-3,
        batch: 20,
        symbols: 8,
        payload: 10,
        delay,
        iterations,
        eval_every: 25,
        eval_batch: 100,
        ..TrainConfig::default()
    };
    let baseline = copy_memoryless_baseline(cfg.symbols, cfg.payload, cfg.delay);
    let out = train(&cfg, None)?;
    println!(
        "copy (K = 8, L = 10, D = {delay}): cross-entropy {:.4} after {iterations} iterations, memoryless baseline {:.4}",
        out.final_metric, baseline
    );
    Ok((out.final_metric, baseline))
}

pub fn run_example() -> ornn::Result<(f64, f64)> {
    run(10, 5)
}

fn main() -> ornn::Result<()> {
    let mut args = std::env::args().skip(1);
    let iterations = args.next().and_then(|s| s.parse().ok()).unwrap_or(2000);
    let delay = args.next().and_then(|s| s.parse().ok()).unwrap_or(20);
    run(iterations, delay)?;
    Ok(())
}
