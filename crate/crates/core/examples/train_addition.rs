// Trains an orthogonal RNN on the addition task and reports the held-out MSE.
// A constant predictor scores about 0.167.
//
// cargo run --release --example train_addition -- [seed] [iterations] [T]

use ornn::tasks::TaskKind;
use ornn::train::{train, TrainConfig};

fn run(seed: u64, iterations: u64, t_len: usize, log_every: u64) -> ornn::Result<f64> {
    let cfg = TrainConfig {
        task: TaskKind::Addition,
        t_len: Some(t_len),
        n: 64,
        m: 16,
        batch: 50,
        lr: 0.01,
        seed,
        iterations,
        eval_every: 50.min(iterations),
        target_metric: Some(0.05),
        log_every,
        ..TrainConfig::default()
    };
    let start = std::time::Instant::now();
    let out = train(&cfg, None)?;
    println!(
        "seed {seed}, T = {t_len}: best mse {:.5} at iteration {}, target 0.05 reached at {:?} ({:.1} s)",
        out.best_metric,
        out.best_iteration,
        out.reached_target,
        start.elapsed().as_secs_f64()
    );
    Ok(out.best_metric)
}

pub fn run_example() -> ornn::Result<f64> {
    run(1, 10, 20, 0)
}

fn main() -> ornn::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let iterations = args.next().and_then(|s| s.parse().ok()).unwrap_or(5000);
    let t_len = args.next().and_then(|s| s.parse().ok()).unwrap_or(100);
    run(seed, iterations, t_len, 250)?;
    Ok(())
}
