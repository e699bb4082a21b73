//! Seeded synthetic sequence tasks.
//!
//! Every generator is a pure function of its spec and seed.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Addition,
    Copy,
    Waveform,
}

impl TaskKind {
    /// Addition and copy draw a fresh batch per iteration; the waveform task
    /// trains on one fixed batch for many epochs.
    pub fn fresh_batches(self) -> bool {
        !matches!(self, TaskKind::Waveform)
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Addition => "addition",
            TaskKind::Copy => "copy",
            TaskKind::Waveform => "waveform",
        })
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "addition" | "add" => Ok(TaskKind::Addition),
            "copy" => Ok(TaskKind::Copy),
            "waveform" | "wave" => Ok(TaskKind::Waveform),
            other => Err(Error::Config(format!("unknown task `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub kind: TaskKind,
    /// Sequence length. For the copy task it is derived as `2 * payload + delay`.
    pub t_len: usize,
    pub batch: usize,
    pub seed: u64,
    /// Copy task: alphabet size.
    pub symbols: usize,
    /// Copy task: payload length.
    pub payload: usize,
    /// Copy task: delay between the payload and the recall.
    pub delay: usize,
    /// Waveform task: number of sinusoid components.
    pub components: usize,
}

impl TaskSpec {
    pub fn new(kind: TaskKind, t_len: usize, batch: usize, seed: u64) -> Self {
        Self {
            kind,
            t_len,
            batch,
            seed,
            symbols: 8,
            payload: 10,
            delay: 20,
            components: 3,
        }
    }

    pub fn copy(symbols: usize, payload: usize, delay: usize, batch: usize, seed: u64) -> Self {
        Self {
            t_len: 2 * payload + delay,
            symbols,
            payload,
            delay,
            ..Self::new(TaskKind::Copy, 0, batch, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::TaskSpec("batch size must be positive".into()));
        }
        match self.kind {
            TaskKind::Addition if self.t_len < 4 => Err(Error::TaskSpec(format!(
                "addition needs T >= 4, got {}",
                self.t_len
            ))),
            TaskKind::Copy if self.symbols < 2 || self.payload < 1 || self.delay < 1 => {
                Err(Error::TaskSpec(format!(
                    "copy needs K >= 2, L >= 1, D >= 1 (got K = {}, L = {}, D = {})",
                    self.symbols, self.payload, self.delay
                )))
            }
            TaskKind::Waveform if self.components < 1 || self.t_len < 2 => Err(Error::TaskSpec(
                "waveform needs at least one component and T >= 2".into(),
            )),
            _ => Ok(()),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self.kind {
            TaskKind::Addition => 2,
            TaskKind::Copy => self.symbols + 2,
            TaskKind::Waveform => 1,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self.kind {
            TaskKind::Addition | TaskKind::Waveform => 1,
            TaskKind::Copy => self.symbols + 1,
        }
    }

    pub fn sequence_len(&self) -> usize {
        match self.kind {
            TaskKind::Copy => 2 * self.payload + self.delay,
            _ => self.t_len,
        }
    }

    /// Generates the batch for this spec's seed.
    pub fn generate(&self) -> Result<TaskBatch> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        self.generate_with(&mut rng)
    }

    pub fn generate_with<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<TaskBatch> {
        match self.kind {
            TaskKind::Addition => gen_addition(self, rng),
            TaskKind::Copy => gen_copy(self, rng),
            TaskKind::Waveform => gen_waveform(self, rng),
        }
    }
}

/// Which timesteps contribute to the loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scored {
    Last,
    All,
}

impl Scored {
    pub fn count(self, t_len: usize) -> usize {
        match self {
            Scored::Last => 1,
            Scored::All => t_len,
        }
    }

    /// Index into the per-sequence target rows for timestep `t`, if scored.
    pub fn slot(self, t: usize, t_len: usize) -> Option<usize> {
        match self {
            Scored::All => Some(t),
            Scored::Last if t + 1 == t_len => Some(0),
            Scored::Last => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Mse,
    CrossEntropy,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    /// `batch x scored steps x dim`, row-major.
    Regression {
        values: Vec<f64>,
        dim: usize,
        scored: Scored,
    },
    /// `batch x scored steps`.
    Classes {
        labels: Vec<usize>,
        classes: usize,
        scored: Scored,
    },
}

impl Targets {
    pub fn scored(&self) -> Scored {
        match self {
            Targets::Regression { scored, .. } | Targets::Classes { scored, .. } => *scored,
        }
    }

    pub fn loss_kind(&self) -> LossKind {
        match self {
            Targets::Regression { .. } => LossKind::Mse,
            Targets::Classes { .. } => LossKind::CrossEntropy,
        }
    }

    /// Output width: the regression dimension or the number of classes.
    pub fn out_dim(&self) -> usize {
        match self {
            Targets::Regression { dim, .. } => *dim,
            Targets::Classes { classes, .. } => *classes,
        }
    }
}

/// A batch of input sequences with their targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskBatch {
    pub batch: usize,
    pub t_len: usize,
    pub n_x: usize,
    /// `batch x t_len x n_x`, row-major.
    pub inputs: Vec<f64>,
    pub targets: Targets,
}

impl TaskBatch {
    pub fn input(&self, b: usize, t: usize) -> &[f64] {
        let start = (b * self.t_len + t) * self.n_x;
        &self.inputs[start..start + self.n_x]
    }

    pub fn check(&self) -> Result<()> {
        let steps = self.targets.scored().count(self.t_len);
        let ok = self.inputs.len() == self.batch * self.t_len * self.n_x
            && match &self.targets {
                Targets::Regression { values, dim, .. } => values.len() == self.batch * steps * dim,
                Targets::Classes { labels, classes, .. } => {
                    labels.len() == self.batch * steps && labels.iter().all(|&l| l < *classes)
                }
            };
        if ok && self.batch > 0 && self.t_len > 0 {
            Ok(())
        } else {
            Err(Error::Shape("task batch tensors are inconsistent".into()))
        }
    }

    /// Little-endian bytes of every tensor, for reproducibility checks.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out: Vec<u8> = self.inputs.iter().flat_map(|v| v.to_le_bytes()).collect();
        match &self.targets {
            Targets::Regression { values, .. } => {
                out.extend(values.iter().flat_map(|v| v.to_le_bytes()))
            }
            Targets::Classes { labels, .. } => {
                out.extend(labels.iter().flat_map(|&l| (l as u64).to_le_bytes()))
            }
        }
        out
    }
}

/// Two-channel sequences: channel 0 is Uniform(0, 1) noise, channel 1 marks one
/// position in each half. The target is the sum of the two marked values.
pub fn gen_addition<R: Rng + ?Sized>(spec: &TaskSpec, rng: &mut R) -> Result<TaskBatch> {
    spec.validate()?;
    let t_len = spec.t_len;
    let half = t_len / 2;
    let mut inputs = vec![0.0; spec.batch * t_len * 2];
    let mut targets = Vec::with_capacity(spec.batch);
    for b in 0..spec.batch {
        let seq = &mut inputs[b * t_len * 2..(b + 1) * t_len * 2];
        for t in 0..t_len {
            seq[2 * t] = rng.random::<f64>();
        }
        let first = rng.random_range(0..half);
        let second = rng.random_range(half..t_len);
        seq[2 * first + 1] = 1.0;
        seq[2 * second + 1] = 1.0;
        targets.push(seq[2 * first] + seq[2 * second]);
    }
    Ok(TaskBatch {
        batch: spec.batch,
        t_len,
        n_x: 2,
        inputs,
        targets: Targets::Regression {
            values: targets,
            dim: 1,
            scored: Scored::Last,
        },
    })
}

/// Copy task with `K + 2` one-hot input channels (symbols `0..K`, blank `K`,
/// go `K + 1`) and `K + 1` output classes (symbols plus blank).
///
/// Input: `L` symbols, `D - 1` blanks, go, `L` blanks.
/// Target: `L + D` blanks, then the `L` symbols.
pub fn gen_copy<R: Rng + ?Sized>(spec: &TaskSpec, rng: &mut R) -> Result<TaskBatch> {
    spec.validate()?;
    let (k, l, d) = (spec.symbols, spec.payload, spec.delay);
    let t_len = 2 * l + d;
    let channels = k + 2;
    let blank = k;
    let go = k + 1;
    let mut inputs = vec![0.0; spec.batch * t_len * channels];
    let mut labels = vec![blank; spec.batch * t_len];
    for b in 0..spec.batch {
        let payload: Vec<usize> = (0..l).map(|_| rng.random_range(0..k)).collect();
        for t in 0..t_len {
            let symbol = if t < l {
                payload[t]
            } else if t == l + d - 1 {
                go
            } else {
                blank
            };
            inputs[(b * t_len + t) * channels + symbol] = 1.0;
        }
        for (i, &s) in payload.iter().enumerate() {
            labels[b * t_len + l + d + i] = s;
        }
    }
    Ok(TaskBatch {
        batch: spec.batch,
        t_len,
        n_x: channels,
        inputs,
        targets: Targets::Classes {
            labels,
            classes: k + 1,
            scored: Scored::All,
        },
    })
}

/// Cross-entropy per symbol of a predictor that knows where the payload is
/// but guesses its symbols uniformly.
pub fn copy_memoryless_baseline(symbols: usize, payload: usize, delay: usize) -> f64 {
    (payload as f64 * (symbols as f64).ln()) / (2 * payload + delay) as f64
}

/// Sequence generation: the input is a single start token at `t = 0`; the
/// target is a mean-removed sum of sinusoids scaled to a peak magnitude of 1.
pub fn gen_waveform<R: Rng + ?Sized>(spec: &TaskSpec, rng: &mut R) -> Result<TaskBatch> {
    spec.validate()?;
    let t_len = spec.t_len;
    let mut inputs = vec![0.0; spec.batch * t_len];
    let mut values = Vec::with_capacity(spec.batch * t_len);
    for b in 0..spec.batch {
        inputs[b * t_len] = 1.0;
        let waves: Vec<(f64, f64, f64)> = (0..spec.components)
            .map(|_| {
                let period = rng.random_range(20.0..200.0);
                let phase = rng.random_range(0.0..TAU);
                let amp = if spec.components == 1 {
                    1.0
                } else {
                    rng.random_range(0.5..1.0)
                };
                (TAU / period, phase, amp)
            })
            .collect();
        let mut seq: Vec<f64> = (0..t_len)
            .map(|t| {
                waves
                    .iter()
                    .map(|&(w, p, a)| a * (w * t as f64 + p).sin())
                    .sum()
            })
            .collect();
        normalise(&mut seq);
        values.extend(seq);
    }
    Ok(TaskBatch {
        batch: spec.batch,
        t_len,
        n_x: 1,
        inputs,
        targets: Targets::Regression {
            values,
            dim: 1,
            scored: Scored::All,
        },
    })
}

fn normalise(seq: &mut [f64]) {
    let mean = seq.iter().sum::<f64>() / seq.len() as f64;
    seq.iter_mut().for_each(|v| *v -= mean);
    let peak = seq.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        seq.iter_mut().for_each(|v| *v /= peak);
    }
}
