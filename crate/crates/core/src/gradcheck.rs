//! Gradient-check suites comparing the fused kernel against independent
//! references: the closed-form WY expressions, central finite differences
//! and committed reference vectors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::backprop::{
    finite_diff_grad, fused_step_unmasked, grad_formulas, grad_formulas_faulty, local_fpbp,
    relative_error, FD_EPS,
};
use crate::error::Result;
use crate::householder::ReflectionStack;
use crate::io::FpbpVector;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Reference vectors shipped with the crate.
pub const SHIPPED_VECTORS: &str = include_str!("../tests/data/fpbp_vectors.txt");

#[derive(Debug, Clone)]
pub struct GradcheckConfig {
    pub ns: Vec<usize>,
    /// Explicit `m` values; `None` uses `{1, n/2, n-1, n}` for each `n`.
    pub ms: Option<Vec<usize>>,
    pub seeds: Vec<u64>,
    pub fd_eps: f64,
    pub fd_tol: f64,
    pub formula_tol: f64,
    pub vector_tol: f64,
    pub vectors: Vec<FpbpVector>,
    /// Replace the closed-form oracle by a copy with one term's sign flipped.
    pub inject_fault: bool,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            ns: vec![4, 8, 16, 32],
            ms: None,
            seeds: vec![0],
            fd_eps: FD_EPS,
            fd_tol: 1e-6,
            formula_tol: 1e-11,
            vector_tol: 1e-12,
            vectors: Vec::new(),
            inject_fault: false,
        }
    }
}

/// `{1, n/2, n-1, n}` without duplicates or zeros.
pub fn default_ms(n: usize) -> Vec<usize> {
    let mut ms = vec![1, n / 2, n.saturating_sub(1), n];
    ms.retain(|&m| m >= 1);
    ms.sort_unstable();
    ms.dedup();
    ms
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CaseResult {
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub rel_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SuiteReport {
    pub name: String,
    pub tolerance: f64,
    pub cases: usize,
    pub skipped: usize,
    pub worst_rel_error: f64,
    pub worst_case: Option<CaseResult>,
    pub failures: Vec<CaseResult>,
    pub passed: bool,
}

impl SuiteReport {
    fn from_cases(name: &str, tolerance: f64, results: Vec<CaseResult>, skipped: usize) -> Self {
        let worst = results
            .iter()
            .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
            .cloned();
        let failures: Vec<CaseResult> = results.iter().filter(|c| !c.passed).cloned().collect();
        Self {
            name: name.to_string(),
            tolerance,
            cases: results.len(),
            skipped,
            worst_rel_error: worst.as_ref().map_or(0.0, |c| c.rel_error),
            worst_case: worst,
            passed: failures.is_empty(),
            failures,
        }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct GradcheckReport {
    pub schema_version: u32,
    pub fault_injected: bool,
    pub suites: Vec<SuiteReport>,
    pub passed: bool,
}

fn case_inputs(n: usize, m: usize, seed: u64) -> Result<(ReflectionStack, Vec<f64>, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1_000_003) ^ ((n as u64) << 32) ^ m as u64);
    let stack = ReflectionStack::random(n, m, &mut rng)?;
    let h = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let g = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    Ok((stack, h, g))
}

/// Relative error of the unmasked fused step against one reference vector.
pub fn vector_error(v: &FpbpVector) -> Result<f64> {
    let (c, g, big_g) = fused_step_unmasked(&v.u, &v.h, &v.grad_c)?;
    let max_abs = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let amax = |a: &[f64]| a.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let diff = max_abs(&c, &v.c)
        .max(max_abs(&g, &v.g))
        .max(max_abs(big_g.as_slice(), v.big_g.as_slice()));
    let scale = amax(&v.c).max(amax(&v.g)).max(amax(v.big_g.as_slice())).max(1e-300);
    Ok(diff / scale)
}

pub fn run_gradcheck(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    let mut formula = Vec::new();
    let mut formula_skipped = 0;
    let mut fd = Vec::new();
    for &n in &cfg.ns {
        let ms = cfg.ms.clone().unwrap_or_else(|| default_ms(n));
        for m in ms.into_iter().filter(|&m| m >= 1 && m <= n) {
            for &seed in &cfg.seeds {
                let (stack, h, g) = case_inputs(n, m, seed)?;
                let (_, kernel, _) = local_fpbp(&stack, &h, &g)?;
                if m < n {
                    let reference = if cfg.inject_fault {
                        grad_formulas_faulty(&stack, &h, &g)?
                    } else {
                        grad_formulas(&stack, &h, &g)?
                    };
                    let e = relative_error(&kernel, &reference);
                    formula.push(CaseResult {
                        n,
                        m,
                        seed,
                        rel_error: e,
                        passed: e < cfg.formula_tol,
                    });
                } else {
                    formula_skipped += 1;
                }
                let reference = finite_diff_grad(&stack, &h, &g, cfg.fd_eps)?;
                let e = relative_error(&kernel, &reference);
                fd.push(CaseResult {
                    n,
                    m,
                    seed,
                    rel_error: e,
                    passed: e < cfg.fd_tol,
                });
            }
        }
    }
    let mut vectors = Vec::new();
    for (i, v) in cfg.vectors.iter().enumerate() {
        let e = vector_error(v)?;
        vectors.push(CaseResult {
            n: v.u.nrows(),
            m: v.u.ncols(),
            seed: i as u64,
            rel_error: e,
            passed: e < cfg.vector_tol,
        });
    }
    let suites = vec![
        SuiteReport::from_cases("kernel_vs_formula", cfg.formula_tol, formula, formula_skipped),
        SuiteReport::from_cases("kernel_vs_finite_difference", cfg.fd_tol, fd, 0),
        SuiteReport::from_cases("kernel_vs_reference_vectors", cfg.vector_tol, vectors, 0),
    ];
    let passed = suites.iter().all(|s| s.passed);
    Ok(GradcheckReport {
        schema_version: REPORT_SCHEMA_VERSION,
        fault_injected: cfg.inject_fault,
        suites,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::parse_fpbp_vectors;

    #[test]
    fn m_grid() {
        assert_eq!(default_ms(8), vec![1, 4, 7, 8]);
        assert_eq!(default_ms(2), vec![1, 2]);
        assert_eq!(default_ms(1), vec![1]);
    }

    #[test]
    fn default_sweep_passes() {
        let cfg = GradcheckConfig {
            vectors: parse_fpbp_vectors(SHIPPED_VECTORS).unwrap(),
            ..GradcheckConfig::default()
        };
        let report = run_gradcheck(&cfg).unwrap();
        assert!(report.passed, "{report:#?}");
        assert_eq!(report.suites[0].skipped, 4);
        assert!(report.suites.iter().all(|s| s.worst_rel_error < 1e-6));
        assert!(report.suites[2].cases >= 10);
    }

    #[test]
    fn minimal_case() {
        let cfg = GradcheckConfig {
            ns: vec![2],
            ms: Some(vec![1]),
            ..GradcheckConfig::default()
        };
        assert!(run_gradcheck(&cfg).unwrap().passed);
    }

    #[test]
    fn injected_fault_is_caught_and_named() {
        let cfg = GradcheckConfig {
            ns: vec![6],
            ms: Some(vec![3]),
            seeds: vec![11],
            inject_fault: true,
            ..GradcheckConfig::default()
        };
        let report = run_gradcheck(&cfg).unwrap();
        assert!(!report.passed);
        let f = &report.suites[0].failures[0];
        assert_eq!((f.n, f.m, f.seed), (6, 3, 11));
        assert!(report.suites[1].passed);
        let json = serde_json::to_value(&report).unwrap();
        assert_eq!(json["schema_version"], 1);
    }
}
