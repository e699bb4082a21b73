//! Flop instrumentation for the hidden-to-hidden kernels.
//!
//! Convention: one multiply, one add (or subtract) and one divide each count as
//! one flop. Negation and copies are free. Only computation through the
//! hidden-to-hidden connection is counted.

/// Receives flop tallies from instrumented kernels.
pub trait FlopSink {
    fn record(&mut self, flops: u64);
}

/// Discards all tallies; compiles to nothing in the kernels.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoFlops;

impl FlopSink for NoFlops {
    #[inline(always)]
    fn record(&mut self, _flops: u64) {}
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct FlopCounter(pub u64);

impl FlopCounter {
    pub fn get(&self) -> u64 {
        self.0
    }
}

impl FlopSink for FlopCounter {
    #[inline(always)]
    fn record(&mut self, flops: u64) {
        self.0 += flops;
    }
}

/// Closed-form per-step flop counts for the Householder chain with `n` hidden
/// units and `m` reflections (`m <= n - 1`).
pub mod closed_form {
    pub fn forward(n: u64, m: u64) -> u64 {
        (4 * n - m + 2) * m
    }

    pub fn backward_stored(n: u64, m: u64) -> u64 {
        (7 * n - 2 * m + 3) * m
    }

    pub fn backward_recompute(n: u64, m: u64) -> u64 {
        (11 * n - 3 * m + 5) * m
    }

    pub fn dense_forward(n: u64) -> u64 {
        2 * n * n - n
    }

    pub fn dense_backward(n: u64) -> u64 {
        3 * n * n - n
    }
}
