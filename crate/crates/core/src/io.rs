//! File formats.
//!
//! * `ORNN1` binary stack: magic `ORNN1`, `n` and `m` as `u64` LE, the sign
//!   as `f64` LE, then `U` column-major as `f64` LE with structural zeros.
//! * Checkpoint: an `ORNN1` stack followed by the tag `CKPT`, a `u32`
//!   version, the activation code, the iteration, the dense tensors and the
//!   Adam moments.
//! * Text matrices: one row per line, entries separated by spaces, printed
//!   with shortest round-trip formatting.
//! * Interchange vectors for the fused step, see [`FpbpVector`].

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::householder::ReflectionStack;
use crate::model::{Activation, AdamState, OrnnParams};
use crate::tasks::{TaskBatch, Targets};

pub const MAGIC: &[u8; 5] = b"ORNN1";
pub const CHECKPOINT_TAG: &[u8; 4] = b"CKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

fn put_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn put_f64s<W: Write>(w: &mut W, v: &[f64]) -> Result<()> {
    for x in v {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn get_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn get_f64s<R: Read>(r: &mut R, len: usize) -> Result<Vec<f64>> {
    (0..len).map(|_| get_f64(r)).collect()
}

fn get_usize<R: Read>(r: &mut R, what: &str) -> Result<usize> {
    let v = get_u64(r)?;
    if v > (1 << 32) {
        return Err(Error::Format(format!("implausible {what}: {v}")));
    }
    Ok(v as usize)
}

pub fn write_stack<W: Write>(w: &mut W, stack: &ReflectionStack) -> Result<()> {
    w.write_all(MAGIC)?;
    put_u64(w, stack.n() as u64)?;
    put_u64(w, stack.m() as u64)?;
    w.write_all(&stack.sign().to_le_bytes())?;
    put_f64s(w, stack.u().as_slice())
}

pub fn read_stack<R: Read>(r: &mut R) -> Result<ReflectionStack> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("missing ORNN1 magic".into()));
    }
    let n = get_usize(r, "n")?;
    let m = get_usize(r, "m")?;
    let sign = get_f64(r)?;
    if n == 0 || m == 0 || m > n {
        return Err(Error::Format(format!("invalid stack header n = {n}, m = {m}")));
    }
    let cols = ReflectionStack::stored_columns(n, m);
    let data = get_f64s(r, n * cols)?;
    ReflectionStack::new(n, m, DMatrix::from_vec(n, cols, data), sign)
}

pub fn save_stack(path: impl AsRef<Path>, stack: &ReflectionStack) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_stack(&mut w, stack)?;
    Ok(w.flush()?)
}

pub fn load_stack(path: impl AsRef<Path>) -> Result<ReflectionStack> {
    read_stack(&mut BufReader::new(File::open(path)?))
}

/// Parameters, optimizer state and progress of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: OrnnParams,
    pub adam: AdamState,
    pub iteration: u64,
}

fn put_matrix<W: Write>(w: &mut W, m: &DMatrix<f64>) -> Result<()> {
    put_u64(w, m.nrows() as u64)?;
    put_u64(w, m.ncols() as u64)?;
    put_f64s(w, m.as_slice())
}

fn get_matrix<R: Read>(r: &mut R) -> Result<DMatrix<f64>> {
    let rows = get_usize(r, "rows")?;
    let cols = get_usize(r, "cols")?;
    Ok(DMatrix::from_vec(rows, cols, get_f64s(r, rows * cols)?))
}

fn put_vec<W: Write>(w: &mut W, v: &[f64]) -> Result<()> {
    put_u64(w, v.len() as u64)?;
    put_f64s(w, v)
}

fn get_vec<R: Read>(r: &mut R) -> Result<Vec<f64>> {
    let len = get_usize(r, "length")?;
    get_f64s(r, len)
}

pub fn write_checkpoint<W: Write>(w: &mut W, ckpt: &Checkpoint) -> Result<()> {
    let p = &ckpt.params;
    write_stack(w, &p.stack)?;
    w.write_all(CHECKPOINT_TAG)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&[p.activation.code()])?;
    put_u64(w, ckpt.iteration)?;
    put_matrix(w, &p.v)?;
    put_matrix(w, &p.y)?;
    put_vec(w, &p.hidden_bias)?;
    put_vec(w, &p.output_bias)?;
    put_u64(w, ckpt.adam.step)?;
    put_u64(w, ckpt.adam.m.len() as u64)?;
    for (m, v) in ckpt.adam.m.iter().zip(&ckpt.adam.v) {
        put_vec(w, m)?;
        put_vec(w, v)?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<Checkpoint> {
    let stack = read_stack(r)?;
    let mut tag = [0u8; 4];
    r.read_exact(&mut tag)?;
    if &tag != CHECKPOINT_TAG {
        return Err(Error::Format("missing checkpoint tag".into()));
    }
    let mut version = [0u8; 4];
    r.read_exact(&mut version)?;
    let version = u32::from_le_bytes(version);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let mut code = [0u8; 1];
    r.read_exact(&mut code)?;
    let activation = Activation::from_code(code[0])?;
    let iteration = get_u64(r)?;
    let v = get_matrix(r)?;
    let y = get_matrix(r)?;
    let hidden_bias = get_vec(r)?;
    let output_bias = get_vec(r)?;
    let step = get_u64(r)?;
    let count = get_usize(r, "tensor count")?;
    let mut m = Vec::with_capacity(count);
    let mut vv = Vec::with_capacity(count);
    for _ in 0..count {
        m.push(get_vec(r)?);
        vv.push(get_vec(r)?);
    }
    let params = OrnnParams {
        stack,
        v,
        y,
        hidden_bias,
        output_bias,
        activation,
    };
    params.check_shapes()?;
    let adam = AdamState { step, m, v: vv };
    let expected = AdamState::for_params(&params);
    if adam.m.len() != expected.m.len()
        || adam.m.iter().zip(&expected.m).any(|(a, b)| a.len() != b.len())
        || adam.v.iter().zip(&expected.v).any(|(a, b)| a.len() != b.len())
    {
        return Err(Error::Format("optimizer state does not match parameters".into()));
    }
    Ok(Checkpoint {
        params,
        adam,
        iteration,
    })
}

pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, ckpt)?;
    Ok(w.flush()?)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    read_checkpoint(&mut BufReader::new(File::open(path)?))
}

fn join(row: impl Iterator<Item = f64>) -> String {
    row.map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ")
}

fn parse_row(line: &str, lineno: usize) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| Error::Format(format!("line {lineno}: bad number `{tok}`")))
        })
        .collect()
}

pub fn format_matrix_text(m: &DMatrix<f64>) -> String {
    let mut s = String::new();
    for r in 0..m.nrows() {
        s.push_str(&join(m.row(r).iter().copied()));
        s.push('\n');
    }
    s
}

/// Parses whitespace-separated rows; blank lines and `#` comments are skipped.
pub fn parse_matrix_text(text: &str) -> Result<DMatrix<f64>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        rows.push(parse_row(line, i + 1)?);
    }
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Format("matrix rows are empty or ragged".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |r, c| rows[r][c]))
}

pub fn write_matrix_text(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    Ok(std::fs::write(path, format_matrix_text(m))?)
}

pub fn read_matrix_text(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    parse_matrix_text(&std::fs::read_to_string(path)?)
}

/// Complex vector as one line of interleaved `re im` pairs.
pub fn format_complex_text(z: &[Complex64]) -> String {
    join(z.iter().flat_map(|c| [c.re, c.im]))
}

pub fn parse_complex_text(line: &str) -> Result<Vec<Complex64>> {
    let v = parse_row(line, 1)?;
    if v.len() % 2 != 0 {
        return Err(Error::Format("odd number of values in complex vector".into()));
    }
    Ok(v.chunks(2).map(|p| Complex64::new(p[0], p[1])).collect())
}

/// Dumps a batch as text: a header `batch t_len n_x out_dim`, one line of
/// inputs per `(sequence, step)`, then one line of targets per scored output.
pub fn format_batch_text(batch: &TaskBatch) -> String {
    let mut s = format!(
        "{} {} {} {}\n",
        batch.batch,
        batch.t_len,
        batch.n_x,
        batch.targets.out_dim()
    );
    for b in 0..batch.batch {
        for t in 0..batch.t_len {
            s.push_str(&join(batch.input(b, t).iter().copied()));
            s.push('\n');
        }
    }
    match &batch.targets {
        Targets::Regression { values, dim, .. } => {
            for row in values.chunks(*dim) {
                s.push_str(&join(row.iter().copied()));
                s.push('\n');
            }
        }
        Targets::Classes { labels, .. } => {
            for l in labels {
                s.push_str(&format!("{l}\n"));
            }
        }
    }
    s
}

/// One fused forward/backward case: inputs `U`, `h`, `gC` and the expected
/// `C = W h`, `g = dL/dh` and unmasked `G = dL/dU`.
///
/// Text layout of a stanza: a line `n m`, `n` rows of `U`, one line each for
/// `h`, `gC`, `C` and `g`, then `n` rows of `G`. Stanzas are separated by
/// blank lines; `#` lines are comments.
#[derive(Debug, Clone, PartialEq)]
pub struct FpbpVector {
    pub u: DMatrix<f64>,
    pub h: Vec<f64>,
    pub grad_c: Vec<f64>,
    pub c: Vec<f64>,
    pub g: Vec<f64>,
    pub big_g: DMatrix<f64>,
}

pub fn format_fpbp_vectors(cases: &[FpbpVector]) -> String {
    let mut s = String::new();
    for (i, v) in cases.iter().enumerate() {
        if i > 0 {
            s.push('\n');
        }
        s.push_str(&format!("{} {}\n", v.u.nrows(), v.u.ncols()));
        s.push_str(&format_matrix_text(&v.u));
        for line in [&v.h, &v.grad_c, &v.c, &v.g] {
            s.push_str(&join(line.iter().copied()));
            s.push('\n');
        }
        s.push_str(&format_matrix_text(&v.big_g));
    }
    s
}

pub fn parse_fpbp_vectors(text: &str) -> Result<Vec<FpbpVector>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .peekable();
    let mut out = Vec::new();
    let next_row = |lines: &mut std::iter::Peekable<_>, len: usize| -> Result<Vec<f64>> {
        let (no, line): (usize, &str) = Iterator::next(lines)
            .ok_or_else(|| Error::Format("truncated interchange stanza".into()))?;
        let row = parse_row(line, no)?;
        if row.len() != len {
            return Err(Error::Format(format!(
                "line {no}: expected {len} values, got {}",
                row.len()
            )));
        }
        Ok(row)
    };
    while lines.peek().is_some() {
        let head = next_row(&mut lines, 2)?;
        let (n, m) = (head[0] as usize, head[1] as usize);
        if n == 0 || m == 0 || m > n || head[0] != n as f64 || head[1] != m as f64 {
            return Err(Error::Format(format!("bad stanza header {head:?}")));
        }
        let matrix = |lines: &mut std::iter::Peekable<_>| -> Result<DMatrix<f64>> {
            let rows: Vec<Vec<f64>> = (0..n).map(|_| next_row(lines, m)).collect::<Result<_>>()?;
            Ok(DMatrix::from_fn(n, m, |r, c| rows[r][c]))
        };
        let u = matrix(&mut lines)?;
        let h = next_row(&mut lines, n)?;
        let grad_c = next_row(&mut lines, n)?;
        let c = next_row(&mut lines, n)?;
        let g = next_row(&mut lines, n)?;
        let big_g = matrix(&mut lines)?;
        out.push(FpbpVector {
            u,
            h,
            grad_c,
            c,
            g,
            big_g,
        });
    }
    Ok(out)
}
