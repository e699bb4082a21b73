use crate::error::{Error, Result};

/// Mean squared error over all entries.
pub fn mse(outputs: &[f64], targets: &[f64]) -> Result<f64> {
    check(outputs.len(), targets.len())?;
    let sum: f64 = outputs.iter().zip(targets).map(|(o, t)| (o - t) * (o - t)).sum();
    Ok(sum / outputs.len() as f64)
}

/// MSE divided by the (population) variance of the targets.
pub fn nmse(outputs: &[f64], targets: &[f64]) -> Result<f64> {
    let err = mse(outputs, targets)?;
    let var = variance(targets);
    if var == 0.0 {
        return Err(Error::Numerical("NMSE undefined for constant targets".into()));
    }
    Ok(err / var)
}

pub fn variance(x: &[f64]) -> f64 {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / x.len() as f64
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `-ln softmax(logits)[label]`, computed via log-sum-exp.
pub fn cross_entropy_single(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    lse - logits[label]
}

/// Mean cross-entropy over samples; `logits` holds `labels.len()` rows of
/// `classes` values.
pub fn cross_entropy(logits: &[f64], labels: &[usize], classes: usize) -> Result<f64> {
    check(logits.len(), labels.len() * classes)?;
    if labels.iter().any(|&l| l >= classes) {
        return Err(Error::Shape(format!("label out of range 0..{classes}")));
    }
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| cross_entropy_single(&logits[i * classes..(i + 1) * classes], l))
        .sum();
    Ok(total / labels.len() as f64)
}

fn check(a: usize, b: usize) -> Result<()> {
    if a == 0 {
        return Err(Error::Shape("empty batch".into()));
    }
    if a != b {
        return Err(Error::Shape(format!("{a} outputs vs {b} targets")));
    }
    Ok(())
}
