//! Training harness: configuration, the Adam loop and metric logging.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::backprop::{bptt, evaluate, StorageMode};
use crate::config::{format_key_values, parse_value, KeyValues};
use crate::error::{Error, Result};
use crate::io::{save_checkpoint, Checkpoint};
use crate::model::losses::nmse;
use crate::model::{adam_step, Activation, AdamConfig, AdamState, OrnnParams};
use crate::tasks::{TaskBatch, TaskKind, TaskSpec, Targets};

pub const METRICS_HEADER: [&str; 6] = ["iteration", "epoch", "train_loss", "eval_metric", "wall_ms", "flops"];

/// Every knob of a training run. Keys accepted by [`TrainConfig::set`] are
/// the field names, plus `T` for `t_len` and `target` for `target_metric`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub task: TaskKind,
    /// `None` uses the task default (100 for addition, 800 for the waveform;
    /// the copy task derives its length from payload and delay).
    pub t_len: Option<usize>,
    pub n: usize,
    pub m: usize,
    pub activation: Activation,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Sequences per iteration. The waveform task always fits one sequence,
    /// since every sequence shares the same start-token input.
    pub batch: usize,
    pub seed: u64,
    pub iterations: u64,
    /// Overrides `iterations` with `epochs * iters_per_epoch` when set.
    pub epochs: Option<u64>,
    /// Iterations per epoch for tasks with fresh batches; the waveform task
    /// has one pass per iteration.
    pub iters_per_epoch: u64,
    pub storage: StorageMode,
    pub eval_every: u64,
    /// Held-out sequences for the evaluation metric (fresh-batch tasks).
    pub eval_batch: usize,
    /// Stop as soon as the evaluation metric falls below this value.
    pub target_metric: Option<f64>,
    pub symbols: usize,
    pub payload: usize,
    pub delay: usize,
    pub components: usize,
    /// Fill the `wall_ms` column. Off by default so metric files are
    /// byte-reproducible.
    pub wall_clock: bool,
    /// Print progress to stderr every this many iterations (0 = quiet).
    pub log_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            task: TaskKind::Addition,
            t_len: None,
            n: 64,
            m: 16,
            activation: Activation::LeakyRelu,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch: 50,
            seed: 1,
            iterations: 1000,
            epochs: None,
            iters_per_epoch: 100,
            storage: StorageMode::StoreTapes,
            eval_every: 50,
            eval_batch: 200,
            target_metric: None,
            symbols: 8,
            payload: 10,
            delay: 20,
            components: 3,
            wall_clock: false,
            log_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "task" => self.task = value.parse()?,
            "T" | "t_len" => self.t_len = Some(parse_value(key, value)?),
            "n" => self.n = parse_value(key, value)?,
            "m" => self.m = parse_value(key, value)?,
            "activation" => self.activation = value.parse()?,
            "lr" => self.lr = parse_value(key, value)?,
            "beta1" => self.beta1 = parse_value(key, value)?,
            "beta2" => self.beta2 = parse_value(key, value)?,
            "eps" => self.eps = parse_value(key, value)?,
            "batch" => self.batch = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "iterations" => self.iterations = parse_value(key, value)?,
            "epochs" => self.epochs = Some(parse_value(key, value)?),
            "iters_per_epoch" => self.iters_per_epoch = parse_value(key, value)?,
            "storage" => self.storage = value.parse()?,
            "eval_every" => self.eval_every = parse_value(key, value)?,
            "eval_batch" => self.eval_batch = parse_value(key, value)?,
            "target" | "target_metric" => {
                self.target_metric = match value {
                    "" | "none" => None,
                    v => Some(parse_value(key, v)?),
                }
            }
            "symbols" => self.symbols = parse_value(key, value)?,
            "payload" => self.payload = parse_value(key, value)?,
            "delay" => self.delay = parse_value(key, value)?,
            "components" => self.components = parse_value(key, value)?,
            "wall_clock" => self.wall_clock = parse_value(key, value)?,
            "log_every" => self.log_every = parse_value(key, value)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, v) in kv {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// The resolved configuration in `key = value` form.
    pub fn to_key_values(&self) -> KeyValues {
        let mut kv: Vec<(&str, String)> = vec![
            ("task", self.task.to_string()),
            ("T", self.task_spec().sequence_len().to_string()),
            ("n", self.n.to_string()),
            ("m", self.m.to_string()),
            ("activation", self.activation.to_string()),
            ("lr", self.lr.to_string()),
            ("beta1", self.beta1.to_string()),
            ("beta2", self.beta2.to_string()),
            ("eps", self.eps.to_string()),
            ("batch", self.task_spec().batch.to_string()),
            ("seed", self.seed.to_string()),
            ("iterations", self.max_iterations().to_string()),
            ("iters_per_epoch", self.iters_per_epoch.to_string()),
            ("storage", self.storage.to_string()),
            ("eval_every", self.eval_every.to_string()),
            ("eval_batch", self.eval_batch.to_string()),
            ("symbols", self.symbols.to_string()),
            ("payload", self.payload.to_string()),
            ("delay", self.delay.to_string()),
            ("components", self.components.to_string()),
            ("wall_clock", self.wall_clock.to_string()),
        ];
        if let Some(t) = self.target_metric {
            kv.push(("target", t.to_string()));
        }
        kv.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if self.m == 0 || self.m > self.n {
            return Err(Error::Config(format!(
                "need 1 <= m <= n, got n = {}, m = {}",
                self.n, self.m
            )));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.eps <= 0.0 {
            return Err(Error::Config("Adam needs beta in [0, 1) and eps > 0".into()));
        }
        if self.eval_every == 0 || self.iters_per_epoch == 0 || self.eval_batch == 0 {
            return Err(Error::Config(
                "eval_every, iters_per_epoch and eval_batch must be positive".into(),
            ));
        }
        if self.activation == Activation::ModReluReal && !self.n.is_multiple_of(2) {
            return Err(Error::Config("modrelu-real needs an even n".into()));
        }
        self.task_spec().validate()
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn max_iterations(&self) -> u64 {
        match self.epochs {
            Some(e) => e * self.effective_iters_per_epoch(),
            None => self.iterations,
        }
    }

    fn effective_iters_per_epoch(&self) -> u64 {
        if self.task.fresh_batches() {
            self.iters_per_epoch
        } else {
            1
        }
    }

    /// Task spec for the training stream.
    pub fn task_spec(&self) -> TaskSpec {
        let t_len = self.t_len.unwrap_or(match self.task {
            TaskKind::Waveform => 800,
            _ => 100,
        });
        let batch = match self.task {
            TaskKind::Waveform => 1,
            _ => self.batch,
        };
        let mut spec = TaskSpec::new(self.task, t_len, batch, self.seed);
        spec.symbols = self.symbols;
        spec.payload = self.payload;
        spec.delay = self.delay;
        spec.components = self.components;
        if self.task == TaskKind::Copy {
            spec.t_len = spec.sequence_len();
        }
        spec
    }
}

/// One line of `metrics.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub iteration: u64,
    pub epoch: u64,
    pub train_loss: f64,
    pub eval_metric: Option<f64>,
    pub wall_ms: Option<u128>,
    /// Cumulative hidden-to-hidden flops.
    pub flops: u64,
}

impl MetricRow {
    fn record(&self) -> [String; 6] {
        [
            self.iteration.to_string(),
            self.epoch.to_string(),
            self.train_loss.to_string(),
            self.eval_metric.map(|v| v.to_string()).unwrap_or_default(),
            self.wall_ms.map(|v| v.to_string()).unwrap_or_default(),
            self.flops.to_string(),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub rows: Vec<MetricRow>,
    pub params: OrnnParams,
    pub final_metric: f64,
    pub best_metric: f64,
    pub best_iteration: u64,
    /// Iteration at which the target metric was reached.
    pub reached_target: Option<u64>,
}

/// Evaluation metric: MSE for addition, mean cross-entropy for copy and NMSE
/// for the waveform.
pub fn eval_metric(params: &OrnnParams, batch: &TaskBatch, task: TaskKind) -> Result<f64> {
    let e = evaluate(params, batch)?;
    match (task, &batch.targets) {
        (TaskKind::Waveform, Targets::Regression { values, .. }) => nmse(&e.outputs, values),
        _ => Ok(e.loss),
    }
}

/// Name of the evaluation metric for a task.
pub fn metric_name(task: TaskKind) -> &'static str {
    match task {
        TaskKind::Addition => "mse",
        TaskKind::Copy => "cross_entropy",
        TaskKind::Waveform => "nmse",
    }
}

const DATA_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;
const EVAL_STREAM: u64 = 0x5851_f42d_4c95_7f2d;

/// Runs a training job. With `out` set, writes `metrics.csv`, `config.txt`,
/// `best.ckpt` (lowest evaluation metric) and `final.ckpt` there.
pub fn train(cfg: &TrainConfig, out: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let spec = cfg.task_spec();
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = OrnnParams::init(
        cfg.n,
        cfg.m,
        spec.input_dim(),
        spec.output_dim(),
        cfg.activation,
        &mut init_rng,
    )?;
    let mut adam = AdamState::for_params(&params);
    let adam_cfg = cfg.adam();

    let mut data_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ DATA_STREAM);
    let fixed = if cfg.task.fresh_batches() {
        None
    } else {
        Some(spec.generate_with(&mut data_rng)?)
    };
    let eval_data = match &fixed {
        Some(b) => b.clone(),
        None => {
            let eval_spec = TaskSpec {
                batch: cfg.eval_batch,
                ..spec.clone()
            };
            eval_spec.generate_with(&mut ChaCha8Rng::seed_from_u64(cfg.seed ^ EVAL_STREAM))?
        }
    };

    let mut writer = match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join("config.txt"), format_key_values(&cfg.to_key_values()))?;
            let mut w = csv::Writer::from_path(dir.join("metrics.csv"))?;
            w.write_record(METRICS_HEADER)?;
            Some(w)
        }
        None => None,
    };
    let best_path: Option<PathBuf> = out.map(|d| d.join("best.ckpt"));

    let start = Instant::now();
    let max_it = cfg.max_iterations();
    let per_epoch = cfg.effective_iters_per_epoch();
    let mut rows = Vec::with_capacity(max_it as usize);
    let mut flops = 0u64;
    let mut best_metric = f64::INFINITY;
    let mut best_iteration = 0;
    let mut final_metric = f64::NAN;
    let mut reached_target = None;

    for it in 1..=max_it {
        let at = |e: Error| Error::Training {
            iteration: it,
            source: Box::new(e),
        };
        let fresh;
        let batch = match &fixed {
            Some(b) => b,
            None => {
                fresh = spec.generate_with(&mut data_rng).map_err(at)?;
                &fresh
            }
        };
        let step = bptt(&params, batch, cfg.storage).map_err(at)?;
        if !step.loss.is_finite() {
            return Err(at(Error::Numerical(format!("training loss is {}", step.loss))));
        }
        adam_step(&mut params, &step.grads, &mut adam, &adam_cfg).map_err(at)?;
        flops += step.fp_flops + step.bp_flops;

        let mut metric = None;
        if it % cfg.eval_every == 0 || it == max_it {
            let value = eval_metric(&params, &eval_data, cfg.task).map_err(at)?;
            metric = Some(value);
            final_metric = value;
            if value < best_metric {
                best_metric = value;
                best_iteration = it;
                if let Some(p) = &best_path {
                    save_checkpoint(
                        p,
                        &Checkpoint {
                            params: params.clone(),
                            adam: adam.clone(),
                            iteration: it,
                        },
                    )?;
                }
            }
            if reached_target.is_none() && cfg.target_metric.is_some_and(|t| value < t) {
                reached_target = Some(it);
            }
        }
        let row = MetricRow {
            iteration: it,
            epoch: (it - 1) / per_epoch,
            train_loss: step.loss,
            eval_metric: metric,
            wall_ms: cfg.wall_clock.then(|| start.elapsed().as_millis()),
            flops,
        };
        if let Some(w) = writer.as_mut() {
            w.write_record(row.record())?;
        }
        if cfg.log_every > 0 && (it % cfg.log_every == 0 || reached_target.is_some()) {
            let mut err = std::io::stderr().lock();
            let _ = writeln!(
                err,
                "iter {it:>6}  loss {:.6}  {} {}",
                step.loss,
                metric_name(cfg.task),
                metric.map_or("-".to_string(), |v| format!("{v:.6}"))
            );
        }
        rows.push(row);
        if reached_target.is_some() {
            break;
        }
    }

    if let Some(mut w) = writer {
        w.flush()?;
    }
    if let Some(dir) = out {
        save_checkpoint(
            dir.join("final.ckpt"),
            &Checkpoint {
                params: params.clone(),
                adam,
                iteration: rows.last().map_or(0, |r| r.iteration),
            },
        )?;
    }
    Ok(TrainOutcome {
        rows,
        params,
        final_metric,
        best_metric,
        best_iteration,
        reached_target,
    })
}

/// Writes rows in the `metrics.csv` layout.
pub fn write_metrics<W: std::io::Write>(w: W, rows: &[MetricRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(METRICS_HEADER)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush()?;
    Ok(())
}

/// Convenience for writing a metrics file to disk.
pub fn save_metrics(path: impl AsRef<Path>, rows: &[MetricRow]) -> Result<()> {
    write_metrics(File::create(path)?, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_key_values;
    use crate::householder::{materialize, orthogonality_error};

    fn small(task: TaskKind) -> TrainConfig {
        TrainConfig {
            task,
            t_len: Some(10),
            n: 8,
            m: 4,
            batch: 4,
            iterations: 20,
            eval_every: 5,
            eval_batch: 8,
            lr: 1e-2,
            payload: 2,
            delay: 3,
            symbols: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn config_keys_round_trip() {
        let kv = parse_key_values("task = copy\nn = 16\nm = 16\nlr = 0.01\nstorage = recompute\nT = 30\ntarget = 0.5\n").unwrap();
        let cfg = TrainConfig::from_key_values(&kv).unwrap();
        assert_eq!(cfg.task, TaskKind::Copy);
        assert_eq!(cfg.storage, StorageMode::RecomputeTapes);
        assert_eq!(cfg.target_metric, Some(0.5));
        let again = TrainConfig::from_key_values(&cfg.to_key_values()).unwrap();
        assert_eq!(again.to_key_values(), cfg.to_key_values());
    }

    #[test]
    fn bad_configs() {
        let bad = |s: &str| TrainConfig::from_key_values(&parse_key_values(s).unwrap()).is_err();
        assert!(bad("lr = 0"));
        assert!(bad("n = 4\nm = 5"));
        assert!(bad("m = 0"));
        assert!(bad("colour = red"));
        assert!(bad("task = addition\nT = 3"));
        assert!(bad("n = 5\nm = 2\nactivation = modrelu-real"));
    }

    #[test]
    fn runs_are_deterministic_and_stay_orthogonal() {
        for task in [TaskKind::Addition, TaskKind::Copy, TaskKind::Waveform] {
            let cfg = small(task);
            let a = train(&cfg, None).unwrap();
            let b = train(&cfg, None).unwrap();
            assert_eq!(a.rows, b.rows);
            assert_eq!(a.rows.len(), 20);
            assert!(orthogonality_error(&materialize(&a.params.stack)) < 1e-12);
            assert!(a.rows.iter().all(|r| r.wall_ms.is_none()));
            assert_eq!(a.rows.iter().filter(|r| r.eval_metric.is_some()).count(), 4);
        }
    }

    #[test]
    fn storage_mode_changes_only_flops() {
        let mut cfg = small(TaskKind::Addition);
        let a = train(&cfg, None).unwrap();
        cfg.storage = StorageMode::RecomputeTapes;
        let b = train(&cfg, None).unwrap();
        for (x, y) in a.rows.iter().zip(&b.rows) {
            assert_eq!(x.train_loss.to_bits(), y.train_loss.to_bits());
            assert!(y.flops > x.flops);
        }
    }

    #[test]
    fn early_stop_on_target() {
        let mut cfg = small(TaskKind::Addition);
        cfg.target_metric = Some(f64::INFINITY);
        let out = train(&cfg, None).unwrap();
        assert_eq!(out.reached_target, Some(5));
        assert_eq!(out.rows.len(), 5);
    }

    #[test]
    fn writes_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(TaskKind::Waveform);
        cfg.epochs = Some(6);
        let out = train(&cfg, Some(dir.path())).unwrap();
        assert_eq!(out.rows.len(), 6);
        assert_eq!(out.rows[5].epoch, 5);
        let text = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert!(text.starts_with("iteration,epoch,train_loss,eval_metric,wall_ms,flops\n"));
        assert_eq!(text.lines().count(), 7);
        let best = crate::io::load_checkpoint(dir.path().join("best.ckpt")).unwrap();
        assert_eq!(best.iteration, out.best_iteration);
        let fin = crate::io::load_checkpoint(dir.path().join("final.ckpt")).unwrap();
        assert_eq!(fin.params, out.params);
        assert!(dir.path().join("config.txt").exists());
    }
}
