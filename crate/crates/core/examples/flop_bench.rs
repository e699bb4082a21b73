// Instrumented flop counts against their closed forms, and per-step timings
// as the number of reflections grows.
//
// cargo run --release --example flop_bench

use ornn::bench::{loglog_slope, measure_flops, time_step};
use ornn::flops::closed_form;

fn counts(ns: &[usize], ms: &[usize]) -> ornn::Result<usize> {
    let mut checked = 0;
    println!("{:>5} {:>4} {:>8} {:>8} {:>10} {:>8}", "n", "m", "fp", "bp", "bp recomp", "dense fp");
    for &n in ns {
        for &m in ms.iter().filter(|&&m| m < n) {
            let r = measure_flops(n, m, 0)?;
            r.check()?;
            println!(
                "{:>5} {:>4} {:>8} {:>8} {:>10} {:>8}",
                n, m, r.fp_measured, r.bp_measured, r.bp_recompute_measured, r.srnn_fp
            );
            checked += 1;
        }
    }
    let n = 128;
    println!(
        "one full step at n = {n}: chain (m = n - 1) {} flops vs dense {}",
        closed_form::forward(n, n - 1) + closed_form::backward_stored(n, n - 1),
        closed_form::dense_forward(n) + closed_form::dense_backward(n)
    );
    Ok(checked)
}

fn timings(n: usize, ms: &[usize], budget_ns: f64) -> ornn::Result<f64> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &m in ms {
        let t = time_step(n, m, budget_ns)?;
        println!("n = {n}, m = {m:>3}: fp {:>9.0} ns, bp {:>9.0} ns", t.fp_ns, t.bp_ns);
        xs.push(m as f64);
        ys.push(t.fp_ns + t.bp_ns);
    }
    let slope = loglog_slope(&xs, &ys)?;
    println!("log-log slope of step time in m: {slope:.3}");
    Ok(slope)
}

pub fn run_example() -> ornn::Result<usize> {
    let checked = counts(&[16, 32], &[1, 4, 8])?;
    timings(32, &[2, 4, 8], 1e5)?;
    Ok(checked)
}

fn main() -> ornn::Result<()> {
    counts(&[16, 64, 128, 256, 512], &[1, 8, 16, 64, 128])?;
    timings(512, &[8, 16, 32, 64, 128, 256], 5e7)?;
    Ok(())
}
