//! Task bodies.
//!
//! * `Compute`: 64 independent lanes of `x = x * x + x`, counted as one
//!   fused multiply-add (2 FLOPs) per lane per iteration.
//! * `Memory`: sequential read-modify-write over a rotating window of a
//!   fixed scratch buffer, so the working set does not shrink with the
//!   iteration count.
//! * `Empty`: does nothing; only useful for raw overhead measurements.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

pub const COMPUTE_LANES: usize = 64;
pub const COMPUTE_INIT: f64 = 1.2345;
pub const FLOPS_PER_ITERATION: u64 = 2 * COMPUTE_LANES as u64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Compute,
    Memory,
    Empty,
}

impl KernelKind {
    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Compute => "compute",
            KernelKind::Memory => "memory",
            KernelKind::Empty => "empty",
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelKind {
    type Err = KernelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "compute" => Ok(KernelKind::Compute),
            "memory" => Ok(KernelKind::Memory),
            "empty" => Ok(KernelKind::Empty),
            _ => Err(KernelError::UnknownKernel(s.to_string())),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("unknown kernel `{0}`")]
    UnknownKernel(String),
    #[error("empty kernel must have 0 iterations, got {0}")]
    EmptyWithIterations(u64),
    #[error("memory kernel needs 0 < span ({span}) <= scratch ({scratch}) with scratch a multiple of span")]
    BadMemoryLayout { span: usize, scratch: usize },
    #[error("imbalance must lie in [0, 1], got {0}")]
    BadImbalance(f64),
    #[error("scratch buffer is {got} bytes, kernel expects {expected}")]
    ScratchSize { expected: usize, got: usize },
    #[error("cursor {cursor} is not a multiple of span {span} inside scratch {scratch}")]
    BadCursor { cursor: usize, span: usize, scratch: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub iterations: u64,
    /// Bytes touched per iteration (memory kernel only).
    pub span_bytes: usize,
    /// Total working-set size (memory kernel only).
    pub scratch_bytes: usize,
    /// Degree of load imbalance in `[0, 1]`.
    pub imbalance: f64,
    pub seed: u64,
}

impl KernelSpec {
    pub fn empty() -> Self {
        Self {
            kind: KernelKind::Empty,
            iterations: 0,
            span_bytes: 0,
            scratch_bytes: 0,
            imbalance: 0.0,
            seed: 0,
        }
    }

    pub fn compute(iterations: u64) -> Self {
        Self {
            kind: KernelKind::Compute,
            iterations,
            ..Self::empty()
        }
    }

    pub fn memory(iterations: u64, span_bytes: usize, scratch_bytes: usize) -> Self {
        Self {
            kind: KernelKind::Memory,
            iterations,
            span_bytes,
            scratch_bytes,
            ..Self::empty()
        }
    }

    pub fn with_imbalance(mut self, imbalance: f64, seed: u64) -> Self {
        self.imbalance = imbalance;
        self.seed = seed;
        self
    }

    pub fn with_iterations(mut self, iterations: u64) -> Self {
        self.iterations = iterations;
        self
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        if !(0.0..=1.0).contains(&self.imbalance) {
            return Err(KernelError::BadImbalance(self.imbalance));
        }
        match self.kind {
            KernelKind::Empty if self.iterations != 0 => {
                Err(KernelError::EmptyWithIterations(self.iterations))
            }
            KernelKind::Memory
                if self.span_bytes == 0
                    || self.span_bytes > self.scratch_bytes
                    || !self.scratch_bytes.is_multiple_of(self.span_bytes) =>
            {
                Err(KernelError::BadMemoryLayout {
                    span: self.span_bytes,
                    scratch: self.scratch_bytes,
                })
            }
            _ => Ok(()),
        }
    }

    /// Work attributed to `iterations` executed iterations: FLOPs for the
    /// compute kernel, bytes moved (read + write) for the memory kernel.
    pub fn work_for(&self, iterations: u64) -> u64 {
        match self.kind {
            KernelKind::Compute => FLOPS_PER_ITERATION * iterations,
            KernelKind::Memory => 2 * self.span_bytes as u64 * iterations,
            KernelKind::Empty => 0,
        }
    }

    /// Duration multiplier for task `(t, i)` of graph `graph_id`.
    pub fn imbalance_factor(&self, graph_id: usize, t: usize, i: usize) -> f64 {
        if self.imbalance == 0.0 {
            return 1.0;
        }
        let u = rng::uniform(&[self.seed, graph_id as u64, t as u64, i as u64]);
        (1.0 - self.imbalance) + self.imbalance * u
    }

    /// Iterations task `(t, i)` actually runs once imbalance is applied.
    pub fn effective_iterations(&self, graph_id: usize, t: usize, i: usize) -> u64 {
        if self.imbalance == 0.0 {
            return self.iterations;
        }
        (self.iterations as f64 * self.imbalance_factor(graph_id, t, i)).round() as u64
    }
}

/// A fresh 64-lane buffer holding the kernel's initial value.
pub fn compute_buffer() -> [f64; COMPUTE_LANES] {
    [COMPUTE_INIT; COMPUTE_LANES]
}

/// Applies `x = x * x + x` to every lane `iterations` times.
///
/// Multiply and add are rounded separately, so the result is bit-identical
/// to the scalar recurrence; the lane loop is left to the auto-vectorizer.
#[inline(never)]
pub fn compute_kernel(iterations: u64, lanes: &mut [f64; COMPUTE_LANES]) {
    for _ in 0..iterations {
        for x in lanes.iter_mut() {
            *x = *x * *x + *x;
        }
    }
}

/// Runs `iterations` sequential read-modify-write passes of `span_bytes`
/// each over `scratch`, starting at `cursor`, and returns the new cursor.
pub fn memory_kernel(
    spec: &KernelSpec,
    iterations: u64,
    scratch: &mut [u8],
    cursor: usize,
) -> Result<usize, KernelError> {
    let (span, total) = (spec.span_bytes, spec.scratch_bytes);
    if span == 0 || total % span != 0 {
        return Err(KernelError::BadMemoryLayout {
            span,
            scratch: total,
        });
    }
    if scratch.len() != total {
        return Err(KernelError::ScratchSize {
            expected: total,
            got: scratch.len(),
        });
    }
    if !cursor.is_multiple_of(span) || cursor >= total {
        return Err(KernelError::BadCursor {
            cursor,
            span,
            scratch: total,
        });
    }
    let mut cursor = cursor;
    for _ in 0..iterations {
        touch(&mut scratch[cursor..cursor + span]);
        cursor += span;
        if cursor == total {
            cursor = 0;
        }
    }
    Ok(cursor)
}

#[inline]
fn touch(window: &mut [u8]) {
    let mut words = window.chunks_exact_mut(8);
    for w in &mut words {
        let x = u64::from_le_bytes(w.try_into().unwrap());
        w.copy_from_slice(&x.wrapping_add(1).to_le_bytes());
    }
    for b in words.into_remainder() {
        *b = b.wrapping_add(1);
    }
}
