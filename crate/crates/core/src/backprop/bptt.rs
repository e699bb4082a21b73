use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::flops::{FlopCounter, NoFlops};
use crate::householder::{forward, shared_norms, ForwardTape, ReflectionStack};
use crate::model::losses::{cross_entropy_single, softmax};
use crate::model::{ModelGrads, OrnnParams};
use crate::tasks::{TaskBatch, Targets};

use super::kernel::{backward_into, backward_recompute_into};

/// Whether back-propagation reads stored forward tapes or regenerates them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StorageMode {
    /// Keep every step's H matrix: `n (m + 1) T` values per sequence.
    #[default]
    StoreTapes,
    /// Keep only hidden states and rebuild each tape during the backward pass.
    RecomputeTapes,
}

impl fmt::Display for StorageMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StorageMode::StoreTapes => "store",
            StorageMode::RecomputeTapes => "recompute",
        })
    }
}

impl FromStr for StorageMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "store" | "store-tapes" => Ok(StorageMode::StoreTapes),
            "recompute" | "recompute-tapes" => Ok(StorageMode::RecomputeTapes),
            other => Err(Error::Config(format!("unknown storage mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BpttOutput {
    pub loss: f64,
    pub grads: ModelGrads,
    /// Hidden-to-hidden flops of the forward pass.
    pub fp_flops: u64,
    /// Hidden-to-hidden flops of the backward pass (including regenerated tapes).
    pub bp_flops: u64,
    /// Largest number of tape values held at once for one sequence.
    pub peak_tape_values: usize,
}

/// Model outputs at the scored timesteps, laid out like the targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub outputs: Vec<f64>,
}

fn check_dims(params: &OrnnParams, batch: &TaskBatch) -> Result<()> {
    params.check_shapes()?;
    batch.check()?;
    if batch.n_x != params.n_x() || batch.targets.out_dim() != params.n_o() {
        return Err(Error::Shape(format!(
            "batch has n_x = {}, n_o = {}; model has n_x = {}, n_o = {}",
            batch.n_x,
            batch.targets.out_dim(),
            params.n_x(),
            params.n_o()
        )));
    }
    Ok(())
}

fn loss_scale(batch: &TaskBatch) -> f64 {
    let steps = batch.targets.scored().count(batch.t_len);
    match &batch.targets {
        Targets::Regression { dim, .. } => 1.0 / (batch.batch * steps * dim) as f64,
        Targets::Classes { .. } => 1.0 / (batch.batch * steps) as f64,
    }
}

/// Loss contribution of one output and (optionally) its gradient.
fn score(targets: &Targets, row: usize, out: &[f64], scale: f64, d_out: Option<&mut Vec<f64>>) -> f64 {
    match targets {
        Targets::Regression { values, dim, .. } => {
            let y = &values[row * dim..(row + 1) * dim];
            if let Some(d) = d_out {
                *d = out.iter().zip(y).map(|(o, t)| 2.0 * (o - t) * scale).collect();
            }
            out.iter().zip(y).map(|(o, t)| (o - t) * (o - t)).sum::<f64>() * scale
        }
        Targets::Classes { labels, .. } => {
            let label = labels[row];
            if let Some(d) = d_out {
                let mut p = softmax(out);
                p[label] -= 1.0;
                p.iter_mut().for_each(|v| *v *= scale);
                *d = p;
            }
            cross_entropy_single(out, label) * scale
        }
    }
}

/// Forward pass over the whole batch without gradients.
pub fn evaluate(params: &OrnnParams, batch: &TaskBatch) -> Result<Evaluation> {
    check_dims(params, batch)?;
    let norms = shared_norms(&params.stack)?;
    let scored = batch.targets.scored();
    let steps = scored.count(batch.t_len);
    let scale = loss_scale(batch);
    let mut loss = 0.0;
    let mut outputs = Vec::with_capacity(batch.batch * steps * params.n_o());
    for b in 0..batch.batch {
        let mut h = vec![0.0; params.n()];
        for t in 0..batch.t_len {
            let tape = forward(&params.stack, &norms, &h, &mut NoFlops)?;
            let mut pre = tape.output().to_vec();
            params.input_drive(&mut pre, batch.input(b, t));
            h = params.activation.apply(&pre, &params.hidden_bias)?;
            if let Some(slot) = scored.slot(t, batch.t_len) {
                let out = params.output(&h);
                loss += score(&batch.targets, b * steps + slot, &out, scale, None);
                outputs.extend(out);
            }
        }
    }
    Ok(Evaluation { loss, outputs })
}

/// Back-propagation through time over a batch.
///
/// Per-step chain gradients are accumulated in reverse time within each
/// sequence and sequences are processed in ascending order, so the result is
/// bitwise reproducible and identical across storage modes.
pub fn bptt(params: &OrnnParams, batch: &TaskBatch, mode: StorageMode) -> Result<BpttOutput> {
    check_dims(params, batch)?;
    let norms = shared_norms(&params.stack)?;
    let stack = &params.stack;
    let n = params.n();
    let t_len = batch.t_len;
    let scored = batch.targets.scored();
    let steps = scored.count(t_len);
    let scale = loss_scale(batch);

    let mut grads = ModelGrads::zeros_like(params);
    let mut fp = FlopCounter::default();
    let mut bp = FlopCounter::default();
    let mut loss = 0.0;
    let mut peak_tape_values = 0;

    let mut hs: Vec<Vec<f64>> = Vec::with_capacity(t_len + 1);
    let mut pres: Vec<Vec<f64>> = Vec::with_capacity(t_len);
    let mut tapes: Vec<ForwardTape> = Vec::new();
    let mut d_outs: Vec<Option<Vec<f64>>> = Vec::with_capacity(t_len);

    for b in 0..batch.batch {
        hs.clear();
        pres.clear();
        tapes.clear();
        d_outs.clear();
        hs.push(vec![0.0; n]);

        for t in 0..t_len {
            let tape = forward(stack, &norms, &hs[t], &mut fp)?;
            let mut pre = tape.output().to_vec();
            params.input_drive(&mut pre, batch.input(b, t));
            let h = params.activation.apply(&pre, &params.hidden_bias)?;
            if mode == StorageMode::StoreTapes {
                tapes.push(tape);
            }
            let d_out = match scored.slot(t, t_len) {
                Some(slot) => {
                    let out = params.output(&h);
                    let mut d = Vec::new();
                    loss += score(&batch.targets, b * steps + slot, &out, scale, Some(&mut d));
                    Some(d)
                }
                None => None,
            };
            pres.push(pre);
            hs.push(h);
            d_outs.push(d_out);
        }
        let held: usize = tapes.iter().map(|tp| tp.stored_values()).sum();
        peak_tape_values = peak_tape_values.max(held);

        let mut d_h_next = vec![0.0; n];
        for t in (0..t_len).rev() {
            let h_t = &hs[t + 1];
            if let Some(d_o) = &d_outs[t] {
                accumulate_output(params, &mut grads, h_t, d_o, &mut d_h_next);
            }
            let d_pre = params.activation.backward(
                &pres[t],
                &params.hidden_bias,
                &d_h_next,
                &mut grads.d_hidden_bias,
            );
            accumulate_input(params, &mut grads, batch.input(b, t), &d_pre);

            let mut g = match mode {
                StorageMode::StoreTapes => {
                    backward_into(stack, &tapes[t], &d_pre, &mut grads.d_u, &mut bp)?.0
                }
                StorageMode::RecomputeTapes => {
                    backward_recompute_into(stack, &norms, &hs[t], &d_pre, &mut grads.d_u, &mut bp)?
                }
            };
            stack.apply_sign(&mut g);
            d_h_next = g;
        }
    }
    ReflectionStack::mask_structural(&mut grads.d_u);

    Ok(BpttOutput {
        loss,
        grads,
        fp_flops: fp.get(),
        bp_flops: bp.get(),
        peak_tape_values,
    })
}

fn accumulate_output(
    params: &OrnnParams,
    grads: &mut ModelGrads,
    h: &[f64],
    d_o: &[f64],
    d_h: &mut [f64],
) {
    let n_o = params.n_o();
    let y = params.y.as_slice();
    let d_y = grads.d_y.as_mut_slice();
    for (k, &hk) in h.iter().enumerate() {
        let col = &y[k * n_o..(k + 1) * n_o];
        let d_col = &mut d_y[k * n_o..(k + 1) * n_o];
        let mut acc = 0.0;
        for i in 0..n_o {
            d_col[i] += d_o[i] * hk;
            acc += col[i] * d_o[i];
        }
        d_h[k] += acc;
    }
    for (c, d) in grads.d_output_bias.iter_mut().zip(d_o) {
        *c += d;
    }
}

fn accumulate_input(params: &OrnnParams, grads: &mut ModelGrads, x: &[f64], d_pre: &[f64]) {
    let n = params.n();
    let d_v = grads.d_v.as_mut_slice();
    for (k, &xk) in x.iter().enumerate() {
        if xk != 0.0 {
            for (dv, &dp) in d_v[k * n..(k + 1) * n].iter_mut().zip(d_pre) {
                *dv += dp * xk;
            }
        }
    }
    if params.activation != crate::model::Activation::ModReluReal {
        for (db, &dp) in grads.d_hidden_bias.iter_mut().zip(d_pre) {
            *db += dp;
        }
    }
}

/// Shares the chain's squared norms across a batch; exposed for callers that
/// drive [`forward`] step by step.
pub fn batch_norms(params: &OrnnParams) -> Result<Arc<[f64]>> {
    shared_norms(&params.stack)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::backprop::local_fpbp;
    use crate::model::Activation;
    use crate::tasks::{Scored, TaskKind, TaskSpec};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_batch(rng: &mut ChaCha8Rng, batch: usize, t_len: usize, n_x: usize, dim: usize) -> TaskBatch {
        TaskBatch {
            batch,
            t_len,
            n_x,
            inputs: (0..batch * t_len * n_x).map(|_| rng.random_range(-1.0..1.0)).collect(),
            targets: Targets::Regression {
                values: (0..batch * t_len * dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
                dim,
                scored: Scored::All,
            },
        }
    }

    #[test]
    fn single_step_is_chain_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = OrnnParams::init(6, 3, 2, 1, Activation::Identity, &mut rng).unwrap();
        let batch = TaskBatch {
            batch: 1,
            t_len: 1,
            n_x: 2,
            inputs: vec![0.4, -0.9],
            targets: Targets::Regression {
                values: vec![0.7],
                dim: 1,
                scored: Scored::Last,
            },
        };
        let out = bptt(&p, &batch, StorageMode::StoreTapes).unwrap();
        // h_0 = 0, so dU vanishes and dV = d_pre x'
        let h1 = crate::model::cell_forward(&p, &[0.0; 6], &[0.4, -0.9]).unwrap().0;
        let o = p.output(&h1)[0];
        let d_o = 2.0 * (o - 0.7);
        let d_pre: Vec<f64> = (0..6).map(|k| p.y[(0, k)] * d_o).collect();
        let (_, chain, _) = local_fpbp(&p.stack, &[0.0; 6], &d_pre).unwrap();
        assert_eq!(out.grads.d_u, chain.d_u);
        for k in 0..6 {
            assert!((out.grads.d_v[(k, 0)] - d_pre[k] * 0.4).abs() < 1e-15);
            assert!((out.grads.d_y[(0, k)] - d_o * h1[k]).abs() < 1e-15);
        }
        assert!((out.loss - (o - 0.7).powi(2)).abs() < 1e-15);
    }

    #[test]
    fn storage_modes_are_bitwise_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (n, m) in [(8, 4), (8, 8)] {
            let p = OrnnParams::init(n, m, 3, 2, Activation::LeakyRelu, &mut rng).unwrap();
            let batch = random_batch(&mut rng, 3, 6, 3, 2);
            let a = bptt(&p, &batch, StorageMode::StoreTapes).unwrap();
            let b = bptt(&p, &batch, StorageMode::RecomputeTapes).unwrap();
            assert_eq!(a.grads, b.grads);
            assert_eq!(a.loss.to_bits(), b.loss.to_bits());
            assert_eq!(b.peak_tape_values, 0);
            assert_eq!(a.peak_tape_values, 6 * n * (p.stack.cols() + 1));
        }
    }

    fn fd_check(p: &OrnnParams, batch: &TaskBatch) {
        let analytic = bptt(p, batch, StorageMode::StoreTapes).unwrap();
        let eps = 1e-6;
        let base = p.clone();
        let names = crate::model::TENSOR_NAMES;
        let grads = analytic.grads.tensors();
        for (ti, name) in names.iter().enumerate() {
            let len = base.tensors()[ti].len();
            let gmax = grads[ti].iter().fold(0.0f64, |a, v| a.max(v.abs()));
            for j in 0..len {
                if ti == 0 {
                    let n = base.n();
                    if j % n < j / n {
                        continue;
                    }
                }
                let mut plus = base.clone();
                plus.tensors_mut()[ti][j] += eps;
                let mut minus = base.clone();
                minus.tensors_mut()[ti][j] -= eps;
                let lp = evaluate(&plus, batch).unwrap().loss;
                let lm = evaluate(&minus, batch).unwrap().loss;
                let fd = (lp - lm) / (2.0 * eps);
                let got = grads[ti][j];
                assert!(
                    (fd - got).abs() <= 1e-5 * gmax.max(1e-3),
                    "{name}[{j}]: analytic {got}, fd {fd}"
                );
            }
        }
    }

    #[test]
    fn three_step_sequence_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for act in [Activation::Identity, Activation::LeakyRelu, Activation::ModReluReal] {
            let mut p = OrnnParams::init(8, 4, 2, 2, act, &mut rng).unwrap();
            for b in p.hidden_bias.iter_mut() {
                *b = rng.random_range(-0.1..0.1);
            }
            let batch = random_batch(&mut rng, 2, 3, 2, 2);
            fd_check(&p, &batch);
        }
    }

    #[test]
    fn full_stack_and_classes_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = OrnnParams::init(6, 6, 4, 3, Activation::LeakyRelu, &mut rng).unwrap();
        let spec = TaskSpec::copy(2, 1, 2, 2, 5);
        let batch = spec.generate().unwrap();
        fd_check(&p, &batch);

        let p = OrnnParams::init(8, 8, 2, 1, Activation::Identity, &mut rng).unwrap();
        let batch = TaskSpec::new(TaskKind::Addition, 5, 3, 6).generate().unwrap();
        fd_check(&p, &batch);
    }

    #[test]
    fn evaluate_agrees_with_bptt_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = OrnnParams::init(10, 5, 2, 1, Activation::LeakyRelu, &mut rng).unwrap();
        let batch = TaskSpec::new(TaskKind::Addition, 12, 4, 8).generate().unwrap();
        let e = evaluate(&p, &batch).unwrap();
        let b = bptt(&p, &batch, StorageMode::RecomputeTapes).unwrap();
        assert_eq!(e.loss.to_bits(), b.loss.to_bits());
        assert_eq!(e.outputs.len(), 4);
    }

    #[test]
    fn dimension_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = OrnnParams::init(4, 2, 3, 1, Activation::Identity, &mut rng).unwrap();
        let batch = TaskSpec::new(TaskKind::Addition, 6, 2, 1).generate().unwrap();
        assert!(matches!(
            bptt(&p, &batch, StorageMode::StoreTapes),
            Err(Error::Shape(_))
        ));
        let _ = DMatrix::<f64>::zeros(1, 1);
    }
}
