//! Self-validating task payloads.
//!
//! Layout of every task output (little endian):
//!
//! ```text
//! [0, 8)    t
//! [8, 16)   i
//! [16, n)   byte k = (t + i + k) mod 256
//! ```
//!
//! A consumer checks that it received exactly the outputs of its expected
//! dependencies, in dependency order, and that the filler is intact.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::graph::{ColumnSet, Point, MIN_OUTPUT_BYTES};

/// Payloads up to this size have every body byte checked; larger ones are
/// probed at [`PROBE_COUNT`] evenly spaced offsets.
pub const FULL_CHECK_LIMIT: usize = 4096;
pub const PROBE_COUNT: usize = 64;

/// The immutable output of one task. Cloning shares the buffer.
#[derive(Clone, PartialEq, Eq)]
pub struct TaskOutput(Arc<[u8]>);

impl TaskOutput {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Producer coordinates from the header.
    pub fn header(&self) -> Option<Point> {
        decode_header(&self.0)
    }

    /// Wraps raw bytes without checking them.
    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        Self(bytes.into())
    }
}

impl AsRef<[u8]> for TaskOutput {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for TaskOutput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TaskOutput")
            .field("header", &self.header())
            .field("len", &self.len())
            .finish()
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("output_bytes must be at least {MIN_OUTPUT_BYTES}, got {0}")]
pub struct OutputTooSmall(pub usize);

#[inline]
fn filler(t: usize, i: usize, k: usize) -> u8 {
    (t as u64).wrapping_add(i as u64).wrapping_add(k as u64) as u8
}

/// Builds the output of task `(t, i)`.
pub fn make_output(t: usize, i: usize, output_bytes: usize) -> Result<TaskOutput, OutputTooSmall> {
    if output_bytes < MIN_OUTPUT_BYTES {
        return Err(OutputTooSmall(output_bytes));
    }
    let mut buf = vec![0u8; output_bytes];
    buf[0..8].copy_from_slice(&(t as u64).to_le_bytes());
    buf[8..16].copy_from_slice(&(i as u64).to_le_bytes());
    let base = filler(t, i, 0);
    for (k, b) in buf.iter_mut().enumerate().skip(MIN_OUTPUT_BYTES) {
        *b = base.wrapping_add(k as u8);
    }
    Ok(TaskOutput(buf.into()))
}

pub fn decode_header(bytes: &[u8]) -> Option<Point> {
    if bytes.len() < MIN_OUTPUT_BYTES {
        return None;
    }
    let t = u64::from_le_bytes(bytes[0..8].try_into().ok()?);
    let i = u64::from_le_bytes(bytes[8..16].try_into().ok()?);
    Some(Point::new(usize::try_from(t).ok()?, usize::try_from(i).ok()?))
}

/// What went wrong when a task checked its inputs.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("task {task}: {kind}")]
pub struct Violation {
    pub task: Point,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    /// Wrong number of inputs.
    InputCount { expected: usize, got: usize },
    /// Input `index` came from the wrong producer (or had no header).
    WrongProducer {
        index: usize,
        expected: Point,
        got: Option<Point>,
    },
    /// Input from `producer` has the wrong length.
    Length {
        producer: Point,
        expected: usize,
        got: usize,
    },
    /// Body byte at `offset` of `producer`'s output does not match.
    CorruptByte {
        producer: Point,
        offset: usize,
        expected: u8,
        got: u8,
    },
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ViolationKind::InputCount { expected, got } => {
                write!(f, "expected {expected} inputs, got {got}")
            }
            ViolationKind::WrongProducer {
                index,
                expected,
                got: Some(got),
            } => write!(
                f,
                "input {index}: expected output of task {expected} (column {}), got task {got} (column {})",
                expected.i, got.i
            ),
            ViolationKind::WrongProducer {
                index,
                expected,
                got: None,
            } => write!(f, "input {index}: expected output of task {expected}, got an unreadable header"),
            ViolationKind::Length {
                producer,
                expected,
                got,
            } => write!(f, "output of {producer} is {got} bytes, expected {expected}"),
            ViolationKind::CorruptByte {
                producer,
                offset,
                expected,
                got,
            } => write!(
                f,
                "output of {producer} corrupt at byte offset {offset}: expected {expected:#04x}, got {got:#04x}"
            ),
        }
    }
}

/// Checks the inputs of `task` against the expected dependency columns.
///
/// `inputs` must be ordered like `expected_deps` (ascending column) and
/// each must be `output_bytes` long.
pub fn verify_inputs<B: AsRef<[u8]>>(
    task: Point,
    expected_deps: &ColumnSet,
    inputs: &[B],
    output_bytes: usize,
) -> Result<(), Violation> {
    let fail = |kind| Err(Violation { task, kind });
    if inputs.len() != expected_deps.len() {
        return fail(ViolationKind::InputCount {
            expected: expected_deps.len(),
            got: inputs.len(),
        });
    }
    let Some(prev) = task.t.checked_sub(1) else {
        return Ok(());
    };
    for (index, (col, input)) in expected_deps.iter().zip(inputs).enumerate() {
        let bytes = input.as_ref();
        let expected = Point::new(prev, col);
        let got = decode_header(bytes);
        if got != Some(expected) {
            return fail(ViolationKind::WrongProducer {
                index,
                expected,
                got,
            });
        }
        if bytes.len() != output_bytes {
            return fail(ViolationKind::Length {
                producer: expected,
                expected: output_bytes,
                got: bytes.len(),
            });
        }
        if let Some((offset, want, have)) = check_body(expected, bytes) {
            return fail(ViolationKind::CorruptByte {
                producer: expected,
                offset,
                expected: want,
                got: have,
            });
        }
    }
    Ok(())
}

/// Returns the first mismatching `(offset, expected, got)`, if any.
fn check_body(producer: Point, bytes: &[u8]) -> Option<(usize, u8, u8)> {
    let base = filler(producer.t, producer.i, 0);
    let body = bytes.len() - MIN_OUTPUT_BYTES;
    let probe = |k: usize| {
        let want = base.wrapping_add(k as u8);
        (bytes[k] != want).then_some((k, want, bytes[k]))
    };
    if bytes.len() <= FULL_CHECK_LIMIT {
        (MIN_OUTPUT_BYTES..bytes.len()).find_map(probe)
    } else {
        (0..PROBE_COUNT)
            .map(|n| MIN_OUTPUT_BYTES + n * (body - 1) / (PROBE_COUNT - 1))
            .find_map(probe)
    }
}
