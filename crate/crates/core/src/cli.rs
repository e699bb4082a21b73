//! Command-line front end shared by the `ornn` binary.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bench::{run_bench, write_bench};
use crate::config::{load_key_values, parse_list, parse_value, KeyValues};
use crate::error::{Error, Result};
use crate::gradcheck::{run_gradcheck, GradcheckConfig, SHIPPED_VECTORS};
use crate::householder::{
    decompose_orthogonal, materialize, orthogonality_error, qr_decompose, qr_residual,
};
use crate::io::{parse_fpbp_vectors, read_matrix_text, save_stack, write_matrix_text};
use crate::train::{metric_name, train, TrainConfig};
use crate::unitary::lift_checks;

#[derive(Debug, Parser)]
#[command(name = "ornn", version, about = "Householder-parametrised orthogonal RNNs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check kernel gradients against closed forms, finite differences and reference vectors.
    Gradcheck(GradcheckArgs),
    /// Train on a synthetic task; writes metrics.csv and checkpoints.
    Train(TrainArgs),
    /// Count and time the per-step kernels; writes flops.csv and timings.csv.
    Bench(BenchArgs),
    /// Decompose a matrix from a text file into Householder reflections.
    Qr(QrArgs),
    /// Check the real lift of a random unitary chain.
    Lift(LiftArgs),
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Hidden sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    /// Reflection counts, comma separated (default 1, n/2, n-1, n).
    #[arg(long, value_delimiter = ',')]
    pub m: Option<Vec<usize>>,
    /// Seeds, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub seed: Option<Vec<u64>>,
    /// Interchange vector file (defaults to the shipped set).
    #[arg(long)]
    pub vectors: Option<PathBuf>,
    /// Flip the sign of one term in the closed-form oracle.
    #[arg(long)]
    pub inject_fault: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory for report.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long = "T")]
    pub t_len: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<u64>,
    #[arg(long)]
    pub iterations: Option<u64>,
    /// `store` or `recompute`.
    #[arg(long)]
    pub storage: Option<String>,
    /// Extra `key=value` overrides.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [16usize, 32, 64, 128, 256, 512])]
    pub n: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 4, 8, 16, 32, 64, 128])]
    pub m: Vec<usize>,
    /// Skip wall-clock timing.
    #[arg(long)]
    pub no_timing: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct QrArgs {
    /// Text matrix (rows of space-separated numbers).
    pub input: PathBuf,
    /// Require an orthogonal input and check that R is the identity.
    #[arg(long)]
    pub orthogonal: bool,
    /// Directory for stack.ornn and r.txt.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LiftArgs {
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub steps: usize,
    #[arg(long, default_value_t = 50)]
    pub pairs: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Runs a command and returns the process exit code.
pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Train(a) => cmd_train(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Qr(a) => cmd_qr(a),
        Command::Lift(a) => cmd_lift(a),
    }
}

fn write_json<T: serde::Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(dir.join(name), text + "\n")?;
    Ok(())
}

/// Applies `ns`, `ms`, `seeds`, `fd_eps`, `fd_tol`, `formula_tol` and
/// `vector_tol` keys.
pub fn gradcheck_config(kv: &KeyValues) -> Result<GradcheckConfig> {
    let mut cfg = GradcheckConfig::default();
    for (k, v) in kv {
        match k.as_str() {
            "n" | "ns" => cfg.ns = parse_list(k, v)?,
            "m" | "ms" => cfg.ms = Some(parse_list(k, v)?),
            "seed" | "seeds" => cfg.seeds = parse_list(k, v)?,
            "fd_eps" => cfg.fd_eps = parse_value(k, v)?,
            "fd_tol" => cfg.fd_tol = parse_value(k, v)?,
            "formula_tol" => cfg.formula_tol = parse_value(k, v)?,
            "vector_tol" => cfg.vector_tol = parse_value(k, v)?,
            other => return Err(Error::Config(format!("unknown gradcheck key `{other}`"))),
        }
    }
    Ok(cfg)
}

pub fn cmd_gradcheck(a: GradcheckArgs) -> Result<i32> {
    let kv = match &a.config {
        Some(p) => load_key_values(p)?,
        None => Vec::new(),
    };
    let mut cfg = gradcheck_config(&kv)?;
    if let Some(n) = a.n {
        cfg.ns = n;
    }
    if let Some(m) = a.m {
        cfg.ms = Some(m);
    }
    if let Some(s) = a.seed {
        cfg.seeds = s;
    }
    cfg.inject_fault = a.inject_fault;
    let text = match &a.vectors {
        Some(p) => std::fs::read_to_string(p)?,
        None => SHIPPED_VECTORS.to_string(),
    };
    cfg.vectors = parse_fpbp_vectors(&text)?;

    let report = run_gradcheck(&cfg)?;
    for s in &report.suites {
        println!(
            "{:<30} {:>4} cases  worst rel error {:.3e}  (tol {:.0e})  {}",
            s.name,
            s.cases,
            s.worst_rel_error,
            s.tolerance,
            if s.passed { "ok" } else { "FAILED" }
        );
        for f in &s.failures {
            println!(
                "    failed: n = {}, m = {}, seed = {}, rel error {:.3e}",
                f.n, f.m, f.seed, f.rel_error
            );
        }
    }
    if let Some(dir) = &a.out {
        write_json(dir, "report.json", &report)?;
    }
    Ok(if report.passed { 0 } else { 1 })
}

/// Layers the config file, then the named flags, then `--set` pairs.
pub fn train_config(a: &TrainArgs) -> Result<TrainConfig> {
    let mut kv = match &a.config {
        Some(p) => load_key_values(p)?,
        None => Vec::new(),
    };
    let mut push = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            kv.push((k.to_string(), v));
        }
    };
    push("task", a.task.clone());
    push("n", a.n.map(|v| v.to_string()));
    push("m", a.m.map(|v| v.to_string()));
    push("T", a.t_len.map(|v| v.to_string()));
    push("lr", a.lr.map(|v| v.to_string()));
    push("batch", a.batch.map(|v| v.to_string()));
    push("seed", a.seed.map(|v| v.to_string()));
    push("epochs", a.epochs.map(|v| v.to_string()));
    push("iterations", a.iterations.map(|v| v.to_string()));
    push("storage", a.storage.clone());
    for s in &a.set {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{s}`")))?;
        kv.push((k.trim().to_string(), v.trim().to_string()));
    }
    TrainConfig::from_key_values(&kv)
}

pub fn cmd_train(a: TrainArgs) -> Result<i32> {
    let cfg = train_config(&a)?;
    let out = train(&cfg, a.out.as_deref())?;
    let last = out.rows.last().map_or(0, |r| r.iteration);
    println!(
        "{} after {last} iterations: final {} = {:.6}, best {:.6} at iteration {}",
        cfg.task,
        metric_name(cfg.task),
        out.final_metric,
        out.best_metric,
        out.best_iteration
    );
    Ok(0)
}

pub fn cmd_bench(a: BenchArgs) -> Result<i32> {
    let result = run_bench(&a.n, &a.m, !a.no_timing)?;
    println!(
        "{:>5} {:>5} {:>9} {:>9} {:>11} {:>9} {:>9}",
        "n", "m", "fp", "bp", "bp(recomp)", "srnn fp", "srnn bp"
    );
    for r in &result.reports {
        println!(
            "{:>5} {:>5} {:>9} {:>9} {:>11} {:>9} {:>9}",
            r.n, r.m, r.fp_measured, r.bp_measured, r.bp_recompute_measured, r.srnn_fp, r.srnn_bp
        );
    }
    println!("all counters equal their closed forms");
    if !result.timings.is_empty() {
        println!("\n{:>5} {:>5} {:>12} {:>12} {:>12}", "n", "m", "fp ns", "bp ns", "srnn fp ns");
        for t in &result.timings {
            println!(
                "{:>5} {:>5} {:>12.0} {:>12.0} {:>12.0}",
                t.n, t.m, t.fp_ns, t.bp_ns, t.srnn_fp_ns
            );
        }
        for (n, slope) in &result.slopes {
            println!("n = {n}: log-log slope of step time in m = {slope:.3}");
        }
    }
    if let Some(dir) = &a.out {
        write_bench(dir, &result)?;
    }
    Ok(0)
}

pub fn cmd_qr(a: QrArgs) -> Result<i32> {
    let matrix = read_matrix_text(&a.input)?;
    let (stack, r) = if a.orthogonal {
        let stack = decompose_orthogonal(&matrix)?;
        let n = stack.n();
        (stack, nalgebra::DMatrix::identity(n, n))
    } else {
        qr_decompose(&matrix)?
    };
    let q = materialize(&stack);
    println!("n = {}, sign = {}", stack.n(), stack.sign());
    println!("|A - QR|_F = {:.3e}", qr_residual(&matrix, &stack, &r));
    println!("|Q'Q - I|_F = {:.3e}", orthogonality_error(&q));
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir)?;
        save_stack(dir.join("stack.ornn"), &stack)?;
        write_matrix_text(dir.join("r.txt"), &r)?;
    }
    Ok(0)
}

pub fn cmd_lift(a: LiftArgs) -> Result<i32> {
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let report = lift_checks(a.n, a.steps, a.pairs, &mut rng)?;
    println!("unitarity error          {:.3e}", report.unitarity_error);
    println!("lift orthogonality error {:.3e}", report.lift_orthogonality_error);
    println!("complex vs lifted RNN    {:.3e}", report.rnn_step_error);
    println!("lift homomorphism error  {:.3e}", report.homomorphism_error);
    if let Some(dir) = &a.out {
        write_json(dir, "lift.json", &report)?;
    }
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_subcommands() {
        let cli = Cli::try_parse_from([
            "ornn", "train", "--task", "addition", "--T", "100", "--n", "64", "--m", "16", "--lr",
            "0.01", "--batch", "50", "--seed", "1", "--storage", "recompute", "--set", "eval_every=10",
        ])
        .unwrap();
        let Command::Train(a) = cli.command else { panic!() };
        let cfg = train_config(&a).unwrap();
        assert_eq!((cfg.n, cfg.m, cfg.batch, cfg.eval_every), (64, 16, 50, 10));
        assert_eq!(cfg.t_len, Some(100));

        for argv in [
            vec!["ornn", "gradcheck", "--n", "4,8", "--m", "1,2"],
            vec!["ornn", "bench", "--n", "16", "--m", "1,4", "--no-timing"],
            vec!["ornn", "qr", "a.txt", "--orthogonal"],
            vec!["ornn", "lift", "--n", "4"],
        ] {
            Cli::try_parse_from(argv).unwrap();
        }
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "n = 32\nm = 8\nlr = 0.5\n").unwrap();
        let cli = Cli::try_parse_from(["ornn", "train", "--config", path.to_str().unwrap(), "--m", "4"]).unwrap();
        let Command::Train(a) = cli.command else { panic!() };
        let cfg = train_config(&a).unwrap();
        assert_eq!((cfg.n, cfg.m, cfg.lr), (32, 4, 0.5));
    }

    #[test]
    fn gradcheck_keys() {
        let cfg = gradcheck_config(&vec![
            ("ns".into(), "2,3".into()),
            ("seeds".into(), "1,2,3".into()),
        ])
        .unwrap();
        assert_eq!(cfg.ns, vec![2, 3]);
        assert_eq!(cfg.seeds.len(), 3);
        assert!(gradcheck_config(&vec![("bogus".into(), "1".into())]).is_err());
    }
}
