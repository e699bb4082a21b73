//! Flop and wall-clock benchmarks of the per-step kernels.

use std::hint::black_box;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::backprop::{backward, backward_recompute};
use crate::error::{Error, Result};
use crate::flops::{closed_form, FlopCounter, NoFlops};
use crate::householder::{forward, shared_norms, ReflectionStack};
use crate::model::{dense_backward, dense_matvec};

/// Measured and closed-form flop counts of one time step.
///
/// For `m = n` the chain stores `n - 1` vectors plus a sign, and the closed
/// forms are evaluated at `n - 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FlopReport {
    pub n: u64,
    pub m: u64,
    pub fp_measured: u64,
    pub fp_closed: u64,
    pub bp_measured: u64,
    pub bp_closed: u64,
    pub bp_recompute_measured: u64,
    pub bp_recompute_closed: u64,
    pub srnn_fp: u64,
    pub srnn_bp: u64,
}

impl FlopReport {
    /// Fails on the first phase whose counter differs from its formula.
    pub fn check(&self) -> Result<()> {
        let phases = [
            ("forward", "(4n - m + 2)m", self.fp_measured, self.fp_closed),
            ("backward (stored tapes)", "(7n - 2m + 3)m", self.bp_measured, self.bp_closed),
            (
                "backward (recomputed tapes)",
                "(11n - 3m + 5)m",
                self.bp_recompute_measured,
                self.bp_recompute_closed,
            ),
        ];
        for (phase, formula, got, want) in phases {
            if got != want {
                return Err(Error::Consistency(format!(
                    "{phase} at n = {}, m = {}: counted {got} flops, {formula} = {want}",
                    self.n, self.m
                )));
            }
        }
        Ok(())
    }

    /// Measured counts over the `3n^2` / `5n^2` asymptotes quoted for `m ~ n`.
    pub fn asymptotic_ratios(&self) -> (f64, f64) {
        let n2 = (self.n * self.n) as f64;
        (self.fp_measured as f64 / (3.0 * n2), self.bp_measured as f64 / (5.0 * n2))
    }
}

fn random_inputs(n: usize, m: usize, seed: u64) -> Result<(ReflectionStack, Vec<f64>, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stack = ReflectionStack::random(n, m, &mut rng)?;
    let h = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let g = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    Ok((stack, h, g))
}

/// Instruments one forward step, one stored-tape backward step, one
/// recomputing backward step and the dense baseline.
pub fn measure_flops(n: usize, m: usize, seed: u64) -> Result<FlopReport> {
    let (stack, h, g) = random_inputs(n, m, seed)?;
    let norms = shared_norms(&stack)?;
    let mut fp = FlopCounter::default();
    let tape = forward(&stack, &norms, &h, &mut fp)?;
    let mut bp = FlopCounter::default();
    backward(&stack, &tape, &g, &mut bp)?;
    let mut rc = FlopCounter::default();
    backward_recompute(&stack, &norms, &h, &g, &mut rc)?;

    let w = crate::householder::materialize(&stack);
    let mut dfp = FlopCounter::default();
    dense_matvec(&w, &h, &mut dfp);
    let mut dbp = FlopCounter::default();
    let mut dw = nalgebra::DMatrix::zeros(n, n);
    dense_backward(&w, &h, &g, &mut dw, &mut dbp);

    let (nn, mm) = (n as u64, stack.cols() as u64);
    Ok(FlopReport {
        n: nn,
        m: m as u64,
        fp_measured: fp.get(),
        fp_closed: closed_form::forward(nn, mm),
        bp_measured: bp.get(),
        bp_closed: closed_form::backward_stored(nn, mm),
        bp_recompute_measured: rc.get(),
        bp_recompute_closed: closed_form::backward_recompute(nn, mm),
        srnn_fp: dfp.get(),
        srnn_bp: dbp.get(),
    })
}

/// Median wall-clock nanoseconds per step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timing {
    pub n: u64,
    pub m: u64,
    pub fp_ns: f64,
    pub bp_ns: f64,
    pub srnn_fp_ns: f64,
}

fn median_ns(samples: usize, reps: usize, mut f: impl FnMut()) -> f64 {
    let mut t: Vec<f64> = (0..samples)
        .map(|_| {
            let start = Instant::now();
            for _ in 0..reps {
                f();
            }
            start.elapsed().as_nanos() as f64 / reps as f64
        })
        .collect();
    t.sort_by(f64::total_cmp);
    t[t.len() / 2]
}

/// Times the forward and stored-tape backward steps on the current thread.
pub fn time_step(n: usize, m: usize, budget_ns: f64) -> Result<Timing> {
    let (stack, h, g) = random_inputs(n, m, 0)?;
    let norms = shared_norms(&stack)?;
    let tape = forward(&stack, &norms, &h, &mut NoFlops)?;
    let est = (closed_form::forward(n as u64, stack.cols() as u64) as f64).max(1.0);
    let reps = ((budget_ns / est).ceil() as usize).clamp(1, 100_000);
    let fp_ns = median_ns(7, reps, || {
        black_box(forward(&stack, &norms, black_box(&h), &mut NoFlops).ok());
    });
    let bp_ns = median_ns(7, reps, || {
        black_box(backward(&stack, &tape, black_box(&g), &mut NoFlops).ok());
    });
    let w = crate::householder::materialize(&stack);
    let srnn_fp_ns = median_ns(7, reps, || {
        black_box(dense_matvec(&w, black_box(&h), &mut NoFlops));
    });
    Ok(Timing {
        n: n as u64,
        m: m as u64,
        fp_ns,
        bp_ns,
        srnn_fp_ns,
    })
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 || xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return Err(Error::Precondition(
            "log-log fit needs at least two positive points".into(),
        ));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Precondition("log-log fit needs distinct x values".into()));
    }
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, Default)]
pub struct BenchResult {
    pub reports: Vec<FlopReport>,
    pub timings: Vec<Timing>,
    /// `(n, slope)` of the per-step time (forward plus backward) against `m`.
    pub slopes: Vec<(u64, f64)>,
}

/// Runs the flop sweep over every `(n, m)` with `1 <= m <= n`, optionally
/// with timings. Counter mismatches are returned as errors.
pub fn run_bench(ns: &[usize], ms: &[usize], timing: bool) -> Result<BenchResult> {
    if ns.is_empty() || ms.is_empty() {
        return Err(Error::Precondition("bench needs nonempty n and m lists".into()));
    }
    let mut out = BenchResult::default();
    for &n in ns {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for &m in ms.iter().filter(|&&m| m >= 1 && m <= n) {
            let report = measure_flops(n, m, (n * 1000 + m) as u64)?;
            report.check()?;
            out.reports.push(report);
            if timing {
                let t = time_step(n, m, 2e7)?;
                xs.push(m as f64);
                ys.push(t.fp_ns + t.bp_ns);
                out.timings.push(t);
            }
        }
        if timing && xs.len() >= 2 {
            out.slopes.push((n as u64, loglog_slope(&xs, &ys)?));
        }
    }
    Ok(out)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `flops.csv` (deterministic) and, when timed, `timings.csv`.
pub fn write_bench(dir: &Path, result: &BenchResult) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_csv(&dir.join("flops.csv"), &result.reports)?;
    if !result.timings.is_empty() {
        write_csv(&dir.join("timings.csv"), &result.timings)?;
    }
    Ok(())
}
