use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::unitary::modrelu_real;

/// Hidden-state nonlinearity of the recurrent cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    /// `max(x / 10, x)`
    LeakyRelu,
    /// modReLU acting on `(i, i + n/2)` coordinate pairs; the hidden bias is
    /// the per-pair modReLU bias instead of an additive term.
    ModReluReal,
    Identity,
}

impl Activation {
    /// Length of the hidden bias vector for a hidden size of `n`.
    pub fn bias_len(self, n: usize) -> usize {
        match self {
            Activation::ModReluReal => n / 2,
            _ => n,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Activation::LeakyRelu => 0,
            Activation::ModReluReal => 1,
            Activation::Identity => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Activation::LeakyRelu),
            1 => Ok(Activation::ModReluReal),
            2 => Ok(Activation::Identity),
            _ => Err(Error::Format(format!("unknown activation code {code}"))),
        }
    }

    /// `h = phi(pre; bias)`. The bias is only consumed by modReLU.
    pub fn apply(self, pre: &[f64], bias: &[f64]) -> Result<Vec<f64>> {
        match self {
            Activation::LeakyRelu => Ok(leaky_relu(pre)),
            Activation::Identity => Ok(pre.to_vec()),
            Activation::ModReluReal => modrelu_real(pre, bias),
        }
    }

    /// Given `dL/dh`, returns `dL/dpre` and accumulates `dL/dbias` for modReLU.
    pub fn backward(self, pre: &[f64], bias: &[f64], d_h: &[f64], d_bias: &mut [f64]) -> Vec<f64> {
        match self {
            Activation::Identity => d_h.to_vec(),
            Activation::LeakyRelu => pre
                .iter()
                .zip(d_h)
                .map(|(&x, &g)| if x >= 0.0 { g } else { 0.1 * g })
                .collect(),
            Activation::ModReluReal => modrelu_real_backward(pre, bias, d_h, d_bias),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::LeakyRelu => "leaky-relu",
            Activation::ModReluReal => "modrelu-real",
            Activation::Identity => "identity",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "leaky-relu" | "leaky_relu" => Ok(Activation::LeakyRelu),
            "modrelu-real" | "modrelu" => Ok(Activation::ModReluReal),
            "identity" | "linear" => Ok(Activation::Identity),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }
}

/// Elementwise `max(x / 10, x)`.
pub fn leaky_relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| (v / 10.0).max(v)).collect()
}

fn modrelu_real_backward(pre: &[f64], bias: &[f64], d_h: &[f64], d_bias: &mut [f64]) -> Vec<f64> {
    let half = pre.len() / 2;
    let mut d_pre = vec![0.0; pre.len()];
    for p in 0..half {
        let (a, b) = (pre[p], pre[p + half]);
        let r = a.hypot(b);
        if r == 0.0 || r + bias[p] <= 0.0 {
            continue;
        }
        // out_i = (1 + bias / r) a_i
        let s = 1.0 + bias[p] / r;
        let (ga, gb) = (d_h[p], d_h[p + half]);
        let proj = (ga * a + gb * b) / (r * r * r);
        d_pre[p] = s * ga - bias[p] * a * proj;
        d_pre[p + half] = s * gb - bias[p] * b * proj;
        d_bias[p] += (ga * a + gb * b) / r;
    }
    d_pre
}
