// Fits a seeded sinusoid mixture with an orthogonal RNN driven only by a
// start token, and compares the NMSE with the zero predictor's 1.0.
//
// cargo run --release --example waveform -- [epochs]

use ornn::tasks::TaskKind;
use ornn::train::{train, TrainConfig};

fn config(t_len: usize, epochs: u64) -> TrainConfig {
    TrainConfig {
        task: TaskKind::Waveform,
        t_len: Some(t_len),
        n: 32,
        m: 32,
        lr: 1e-3,
        epochs: Some(epochs),
        eval_every: 50,
        ..TrainConfig::default()
    }
}

fn run(t_len: usize, epochs: u64) -> ornn::Result<f64> {
    let out = train(&config(t_len, epochs), None)?;
    println!(
        "T = {t_len}: NMSE {:.4} after {epochs} epochs (best {:.4} at epoch {})",
        out.final_metric, out.best_metric, out.best_iteration
    );
    Ok(out.best_metric)
}

pub fn run_example() -> ornn::Result<f64> {
    run(100, 30)
}

fn main() -> ornn::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    run(800, epochs)?;
    Ok(())
}
