//! Task graphs: a `height × width` iteration space plus a dependence
//! relation between consecutive timesteps.
//!
//! A task `(t, i)` may only depend on tasks of timestep `t - 1`. The
//! relation is evaluated on demand from a handful of parameters, so a
//! graph of any size costs a few words of memory and every query is a
//! pure function.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernels::{KernelError, KernelSpec};
use crate::rng;

/// Smallest payload that still has room for the `(t, i)` header.
pub const MIN_OUTPUT_BYTES: usize = 16;

/// Coordinates of one task: timestep `t` (vertical) and column `i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Point {
    pub t: usize,
    pub i: usize,
}

impl Point {
    pub const fn new(t: usize, i: usize) -> Self {
        Self { t, i }
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.t, self.i)
    }
}

/// Pattern names as accepted on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatternKind {
    Trivial,
    Stencil,
    Fft,
    Sweep,
    Tree,
    Random,
    Nearest,
    Spread,
}

impl PatternKind {
    pub const ALL: [PatternKind; 8] = [
        PatternKind::Trivial,
        PatternKind::Stencil,
        PatternKind::Fft,
        PatternKind::Sweep,
        PatternKind::Tree,
        PatternKind::Random,
        PatternKind::Nearest,
        PatternKind::Spread,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PatternKind::Trivial => "trivial",
            PatternKind::Stencil => "stencil",
            PatternKind::Fft => "fft",
            PatternKind::Sweep => "sweep",
            PatternKind::Tree => "tree",
            PatternKind::Random => "random",
            PatternKind::Nearest => "nearest",
            PatternKind::Spread => "spread",
        }
    }
}

impl fmt::Display for PatternKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PatternKind {
    type Err = SpecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PatternKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| SpecError::UnknownPattern(s.to_string()))
    }
}

/// A dependence relation together with its parameters.
///
/// Parameters only exist on the variants that use them, so a radix on a
/// stencil or a seed on a sweep cannot be expressed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DependencePattern {
    Trivial,
    Stencil,
    Fft,
    Sweep,
    Tree,
    /// Each column of the previous row is a dependency with probability
    /// `fraction`, decided by hashing `(seed, graph_id, t, i, j)`.
    Random { fraction: f64, seed: u64 },
    /// The `radix` columns closest to `i`.
    Nearest { radix: usize },
    /// `radix` columns spaced `ceil(width / radix)` apart, wrapping.
    Spread { radix: usize },
}

impl DependencePattern {
    pub const DEFAULT_RANDOM_FRACTION: f64 = 0.5;

    /// Builds a pattern from its kind and the optional parameters, using
    /// defaults for parameters the kind needs but was not given.
    pub fn from_parts(kind: PatternKind, radix: usize, fraction: f64, seed: u64) -> Self {
        match kind {
            PatternKind::Trivial => DependencePattern::Trivial,
            PatternKind::Stencil => DependencePattern::Stencil,
            PatternKind::Fft => DependencePattern::Fft,
            PatternKind::Sweep => DependencePattern::Sweep,
            PatternKind::Tree => DependencePattern::Tree,
            PatternKind::Random => DependencePattern::Random { fraction, seed },
            PatternKind::Nearest => DependencePattern::Nearest { radix },
            PatternKind::Spread => DependencePattern::Spread { radix },
        }
    }

    pub fn kind(&self) -> PatternKind {
        match self {
            DependencePattern::Trivial => PatternKind::Trivial,
            DependencePattern::Stencil => PatternKind::Stencil,
            DependencePattern::Fft => PatternKind::Fft,
            DependencePattern::Sweep => PatternKind::Sweep,
            DependencePattern::Tree => PatternKind::Tree,
            DependencePattern::Random { .. } => PatternKind::Random,
            DependencePattern::Nearest { .. } => PatternKind::Nearest,
            DependencePattern::Spread { .. } => PatternKind::Spread,
        }
    }

    pub fn radix(&self) -> Option<usize> {
        match *self {
            DependencePattern::Nearest { radix } | DependencePattern::Spread { radix } => {
                Some(radix)
            }
            _ => None,
        }
    }

    /// True for patterns whose width must be a power of two.
    pub fn needs_power_of_two(&self) -> bool {
        matches!(self, DependencePattern::Fft | DependencePattern::Tree)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecError {
    #[error("unknown dependence pattern `{0}`")]
    UnknownPattern(String),
    #[error("graph width and height must be at least 1 (got {width}x{height})")]
    EmptyGraph { width: usize, height: usize },
    #[error("pattern {pattern} requires a power-of-two width, got {width}")]
    WidthNotPowerOfTwo { pattern: PatternKind, width: usize },
    #[error("output_bytes must be at least {MIN_OUTPUT_BYTES}, got {0}")]
    OutputTooSmall(usize),
    #[error("random dependence fraction must lie in [0, 1], got {0}")]
    BadFraction(f64),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Full parameterization of one task graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskGraphSpec {
    pub graph_id: usize,
    pub width: usize,
    pub height: usize,
    pub pattern: DependencePattern,
    pub kernel: KernelSpec,
    pub output_bytes: usize,
}

impl TaskGraphSpec {
    /// A graph with an empty kernel and minimal payload; handy for
    /// structural queries.
    pub fn new(width: usize, height: usize, pattern: DependencePattern) -> Self {
        Self {
            graph_id: 0,
            width,
            height,
            pattern,
            kernel: KernelSpec::empty(),
            output_bytes: MIN_OUTPUT_BYTES,
        }
    }

    pub fn with_kernel(mut self, kernel: KernelSpec) -> Self {
        self.kernel = kernel;
        self
    }

    pub fn with_output_bytes(mut self, output_bytes: usize) -> Self {
        self.output_bytes = output_bytes;
        self
    }

    pub fn with_graph_id(mut self, graph_id: usize) -> Self {
        self.graph_id = graph_id;
        self
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        if self.width == 0 || self.height == 0 {
            return Err(SpecError::EmptyGraph {
                width: self.width,
                height: self.height,
            });
        }
        if self.pattern.needs_power_of_two() && !self.width.is_power_of_two() {
            return Err(SpecError::WidthNotPowerOfTwo {
                pattern: self.pattern.kind(),
                width: self.width,
            });
        }
        if let DependencePattern::Random { fraction, .. } = self.pattern {
            if !(0.0..=1.0).contains(&fraction) {
                return Err(SpecError::BadFraction(fraction));
            }
        }
        if self.output_bytes < MIN_OUTPUT_BYTES {
            return Err(SpecError::OutputTooSmall(self.output_bytes));
        }
        self.kernel.validate()?;
        Ok(())
    }

    fn log2_width(&self) -> usize {
        self.width.trailing_zeros() as usize
    }

    /// Does task `(t, i)` exist? Out-of-range points are simply absent.
    pub fn contains_point(&self, p: Point) -> bool {
        if p.t >= self.height || p.i >= self.width {
            return false;
        }
        match self.pattern {
            // Fan-out rows of a tree only hold multiples of W / 2^t.
            DependencePattern::Tree if p.t <= self.log2_width() => {
                p.i.is_multiple_of(self.width >> p.t)
            }
            _ => true,
        }
    }

    /// Number of tasks in timestep `t`.
    pub fn row_width(&self, t: usize) -> usize {
        if t >= self.height {
            return 0;
        }
        match self.pattern {
            DependencePattern::Tree if t <= self.log2_width() => 1 << t,
            _ => self.width,
        }
    }

    /// Columns of timestep `t - 1` that task `p` depends on.
    pub fn deps(&self, p: Point) -> ColumnSet {
        let mut out = ColumnSet::new();
        self.deps_into(p, &mut out);
        out
    }

    /// Like [`deps`](Self::deps) but reuses `out`'s allocation.
    pub fn deps_into(&self, p: Point, out: &mut ColumnSet) {
        out.clear();
        if p.t == 0 || !self.contains_point(p) {
            return;
        }
        let (t, i, w) = (p.t, p.i, self.width);
        match self.pattern {
            DependencePattern::Trivial => {}
            DependencePattern::Stencil => out.push_range(i.saturating_sub(1)..(i + 2).min(w)),
            DependencePattern::Sweep => out.push_range(i.saturating_sub(1)..i + 1),
            DependencePattern::Fft => {
                let lg = self.log2_width();
                if lg == 0 {
                    out.push(i);
                } else {
                    push_symmetric(out, i, 1 << ((t - 1) % lg), w);
                }
            }
            DependencePattern::Tree => {
                let lg = self.log2_width();
                if t <= lg {
                    // Parent in the broadcast tree: clear the bits below W / 2^(t-1).
                    let block = w >> (t - 1);
                    out.push(i - i % block);
                } else {
                    out.push(i);
                    if let Some(j) = tree_offset(t - 1 - lg).and_then(|off| i.checked_add(off)) {
                        if j < w {
                            out.push(j);
                        }
                    }
                }
            }
            DependencePattern::Random { fraction, seed } => {
                for j in 0..w {
                    if self.random_edge(seed, fraction, t, i, j) {
                        out.push(j);
                    }
                }
            }
            DependencePattern::Nearest { radix } => {
                let lo = i.saturating_sub(radix / 2);
                let hi = (i + radix.div_ceil(2)).min(w);
                out.push_range(lo..hi);
            }
            DependencePattern::Spread { radix } => {
                let stride = spread_stride(w, radix);
                out.extend_unsorted((0..radix).map(|k| (i + k * stride) % w));
            }
        }
    }

    /// Columns of timestep `t + 1` that depend on task `p`.
    pub fn reverse_deps(&self, p: Point) -> ColumnSet {
        let mut out = ColumnSet::new();
        self.reverse_deps_into(p, &mut out);
        out
    }

    pub fn reverse_deps_into(&self, p: Point, out: &mut ColumnSet) {
        out.clear();
        if p.t + 1 >= self.height || !self.contains_point(p) {
            return;
        }
        let (t, i, w) = (p.t, p.i, self.width);
        match self.pattern {
            DependencePattern::Trivial => {}
            DependencePattern::Stencil => out.push_range(i.saturating_sub(1)..(i + 2).min(w)),
            DependencePattern::Sweep => out.push_range(i..(i + 2).min(w)),
            DependencePattern::Fft => {
                let lg = self.log2_width();
                if lg == 0 {
                    out.push(i);
                } else {
                    push_symmetric(out, i, 1 << (t % lg), w);
                }
            }
            DependencePattern::Tree => {
                let lg = self.log2_width();
                if t < lg {
                    out.push(i);
                    out.push(i + (w >> (t + 1)));
                } else {
                    if let Some(j) = tree_offset(t - lg).and_then(|off| i.checked_sub(off)) {
                        out.push(j);
                    }
                    out.push(i);
                }
            }
            DependencePattern::Random { fraction, seed } => {
                for j in 0..w {
                    if self.random_edge(seed, fraction, t + 1, j, i) {
                        out.push(j);
                    }
                }
            }
            DependencePattern::Nearest { radix } => {
                if radix > 0 {
                    let lo = (i + 1).saturating_sub(radix.div_ceil(2));
                    let hi = (i + radix / 2 + 1).min(w);
                    out.push_range(lo..hi);
                }
            }
            DependencePattern::Spread { radix } => {
                let stride = spread_stride(w, radix);
                out.extend_unsorted((0..radix).map(|k| (i + w - (k * stride) % w) % w));
            }
        }
    }

    fn random_edge(&self, seed: u64, fraction: f64, t: usize, i: usize, j: usize) -> bool {
        let u = rng::uniform(&[seed, self.graph_id as u64, t as u64, i as u64, j as u64]);
        u < fraction
    }

    /// Total number of tasks in the graph.
    pub fn num_tasks(&self) -> usize {
        (0..self.height).map(|t| self.row_width(t)).sum()
    }

    /// Total number of dependence edges, by enumeration.
    pub fn num_deps(&self) -> usize {
        let mut set = ColumnSet::new();
        let mut total = 0;
        for t in 1..self.height {
            for i in 0..self.width {
                self.deps_into(Point::new(t, i), &mut set);
                total += set.len();
            }
        }
        total
    }

    /// Iterates over every task in timestep-major order.
    pub fn points(&self) -> impl Iterator<Item = Point> + '_ {
        (0..self.height)
            .flat_map(move |t| (0..self.width).map(move |i| Point::new(t, i)))
            .filter(move |&p| self.contains_point(p))
    }
}

fn push_symmetric(out: &mut ColumnSet, i: usize, off: usize, w: usize) {
    if let Some(lo) = i.checked_sub(off) {
        out.push(lo);
    }
    out.push(i);
    if i + off < w {
        out.push(i + off);
    }
}

fn tree_offset(exp: usize) -> Option<usize> {
    u32::try_from(exp).ok().and_then(|e| 1usize.checked_shl(e))
}

fn spread_stride(width: usize, radix: usize) -> usize {
    if radix == 0 {
        1
    } else {
        width.div_ceil(radix)
    }
}

/// A sorted set of columns stored as disjoint, non-adjacent half-open runs.
///
/// Stencil-like relations collapse to a single run, so membership and
/// iteration stay cheap no matter how the set was produced.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ColumnSet {
    runs: Vec<Range<usize>>,
    len: usize,
}

impl ColumnSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn clear(&mut self) {
        self.runs.clear();
        self.len = 0;
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn runs(&self) -> &[Range<usize>] {
        &self.runs
    }

    /// Appends a column that is greater than or equal to every column
    /// already present. Duplicates of the last column are ignored.
    pub fn push(&mut self, col: usize) {
        self.push_range(col..col + 1);
    }

    /// Appends a run whose start is not below the start of the last run.
    pub fn push_range(&mut self, range: Range<usize>) {
        if range.is_empty() {
            return;
        }
        if let Some(last) = self.runs.last_mut() {
            debug_assert!(range.start >= last.start, "runs must be pushed in order");
            if range.start <= last.end {
                if range.end > last.end {
                    self.len += range.end - last.end;
                    last.end = range.end;
                }
                return;
            }
        }
        self.len += range.len();
        self.runs.push(range);
    }

    /// Inserts columns in arbitrary order, removing duplicates.
    pub fn extend_unsorted(&mut self, cols: impl IntoIterator<Item = usize>) {
        let mut all: Vec<usize> = self.iter().chain(cols).collect();
        all.sort_unstable();
        self.clear();
        for c in all {
            self.push(c);
        }
    }

    pub fn contains(&self, col: usize) -> bool {
        let idx = self.runs.partition_point(|r| r.end <= col);
        self.runs.get(idx).is_some_and(|r| r.contains(&col))
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.runs.iter().flat_map(|r| r.clone())
    }

    pub fn to_vec(&self) -> Vec<usize> {
        self.iter().collect()
    }
}

impl FromIterator<usize> for ColumnSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        let mut set = ColumnSet::new();
        set.extend_unsorted(iter);
        set
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(pattern: DependencePattern, w: usize, h: usize) -> TaskGraphSpec {
        TaskGraphSpec::new(w, h, pattern)
    }

    fn deps(g: &TaskGraphSpec, t: usize, i: usize) -> Vec<usize> {
        g.deps(Point::new(t, i)).to_vec()
    }

    fn rdeps(g: &TaskGraphSpec, t: usize, i: usize) -> Vec<usize> {
        g.reverse_deps(Point::new(t, i)).to_vec()
    }

    #[test]
    fn stencil_contains() {
        let g = graph(DependencePattern::Stencil, 4, 4);
        assert!(g.contains_point(Point::new(2, 3)));
        assert!(!g.contains_point(Point::new(2, 4)));
        assert!(!g.contains_point(Point::new(4, 0)));
    }

    #[test]
    fn tree_fan_out_rows() {
        let g = graph(DependencePattern::Tree, 8, 8);
        assert!(!g.contains_point(Point::new(1, 3)));
        let active = |t| (0..8).filter(|&i| g.contains_point(Point::new(t, i))).collect::<Vec<_>>();
        assert_eq!(active(0), vec![0]);
        assert_eq!(active(1), vec![0, 4]);
        assert_eq!(active(2), vec![0, 2, 4, 6]);
        assert_eq!(active(3), (0..8).collect::<Vec<_>>());
        assert_eq!(active(5), (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn tree_parents_and_children() {
        let g = graph(DependencePattern::Tree, 8, 8);
        assert_eq!(deps(&g, 1, 4), vec![0]);
        assert_eq!(deps(&g, 2, 6), vec![4]);
        assert_eq!(deps(&g, 3, 7), vec![6]);
        assert_eq!(rdeps(&g, 0, 0), vec![0, 4]);
        assert_eq!(rdeps(&g, 2, 2), vec![2, 3]);
        // after the fan-out: {i, i + 2^(t-1-log2 W)}
        assert_eq!(deps(&g, 4, 5), vec![5, 6]);
        assert_eq!(deps(&g, 5, 5), vec![5, 7]);
        assert_eq!(deps(&g, 6, 5), vec![5]);
        assert_eq!(deps(&g, 7, 1), vec![1]);
    }

    #[test]
    fn stencil_examples() {
        let g = graph(DependencePattern::Stencil, 16, 4);
        assert_eq!(deps(&g, 1, 5), vec![4, 5, 6]);
        assert_eq!(deps(&g, 1, 0), vec![0, 1]);
        assert_eq!(deps(&g, 1, 15), vec![14, 15]);
        assert_eq!(rdeps(&g, 0, 5), vec![4, 5, 6]);
        assert!(deps(&g, 0, 5).is_empty());
        assert!(rdeps(&g, 3, 5).is_empty());
    }

    #[test]
    fn fft_example() {
        let g = graph(DependencePattern::Fft, 16, 8);
        assert_eq!(deps(&g, 3, 5), vec![1, 5, 9]);
        assert_eq!(deps(&g, 1, 5), vec![4, 5, 6]);
        // t' wraps after log2(16) = 4 steps
        assert_eq!(deps(&g, 5, 5), vec![4, 5, 6]);
        assert_eq!(deps(&g, 4, 5), vec![5, 13]);
    }

    #[test]
    fn fft_single_column() {
        let g = graph(DependencePattern::Fft, 1, 4);
        assert_eq!(deps(&g, 2, 0), vec![0]);
        assert_eq!(rdeps(&g, 2, 0), vec![0]);
    }

    #[test]
    fn sweep_examples() {
        let g = graph(DependencePattern::Sweep, 16, 4);
        assert_eq!(deps(&g, 1, 5), vec![4, 5]);
        assert_eq!(rdeps(&g, 0, 5), vec![5, 6]);
        assert_eq!(rdeps(&g, 0, 15), vec![15]);
    }

    #[test]
    fn nearest_and_spread_examples() {
        let g = graph(DependencePattern::Nearest { radix: 5 }, 32, 4);
        assert_eq!(deps(&g, 1, 10), vec![8, 9, 10, 11, 12]);
        let g = graph(DependencePattern::Nearest { radix: 0 }, 32, 4);
        assert!(deps(&g, 2, 10).is_empty());
        assert!(rdeps(&g, 1, 10).is_empty());
        let g = graph(DependencePattern::Spread { radix: 5 }, 20, 4);
        assert_eq!(deps(&g, 1, 3), vec![3, 7, 11, 15, 19]);
    }

    #[test]
    fn nearest_three_is_stencil_inside() {
        let n = graph(DependencePattern::Nearest { radix: 3 }, 16, 4);
        let s = graph(DependencePattern::Stencil, 16, 4);
        for i in 1..15 {
            assert_eq!(n.deps(Point::new(1, i)), s.deps(Point::new(1, i)));
        }
    }

    #[test]
    fn counts() {
        let g = graph(DependencePattern::Stencil, 4, 3);
        assert_eq!(g.num_tasks(), 12);
        assert_eq!(g.num_deps(), 20);
        let g = graph(DependencePattern::Trivial, 7, 5);
        assert_eq!(g.num_deps(), 0);
        let g = graph(DependencePattern::Tree, 8, 6);
        assert_eq!(g.num_tasks(), 1 + 2 + 4 + 8 * 3);
        assert_eq!(g.num_tasks(), g.points().count());
    }

    #[test]
    fn random_is_deterministic() {
        let p = DependencePattern::Random { fraction: 0.5, seed: 42 };
        let a = graph(p, 32, 4);
        let b = graph(p, 32, 4);
        assert_eq!(a.deps(Point::new(2, 7)), b.deps(Point::new(2, 7)));
        let c = graph(p, 32, 4).with_graph_id(1);
        assert_ne!(
            (1..4).map(|t| a.deps(Point::new(t, 7))).collect::<Vec<_>>(),
            (1..4).map(|t| c.deps(Point::new(t, 7))).collect::<Vec<_>>()
        );
    }

    #[test]
    fn validation_errors() {
        assert!(matches!(
            graph(DependencePattern::Fft, 12, 4).validate(),
            Err(SpecError::WidthNotPowerOfTwo { .. })
        ));
        assert!(matches!(
            graph(DependencePattern::Stencil, 0, 4).validate(),
            Err(SpecError::EmptyGraph { .. })
        ));
        assert!(matches!(
            graph(DependencePattern::Stencil, 4, 4).with_output_bytes(8).validate(),
            Err(SpecError::OutputTooSmall(8))
        ));
        assert!(graph(DependencePattern::Spread { radix: 3 }, 12, 4).validate().is_ok());
        assert_eq!("FFT".parse::<PatternKind>(), Ok(PatternKind::Fft));
        assert!("ring".parse::<PatternKind>().is_err());
    }

    #[test]
    fn column_set_runs() {
        let mut s = ColumnSet::new();
        s.push(1);
        s.push(2);
        s.push(2);
        s.push(5);
        assert_eq!(s.runs(), &[1..3, 5..6]);
        assert_eq!(s.len(), 3);
        assert!(s.contains(2) && s.contains(5) && !s.contains(3) && !s.contains(0));
        let u: ColumnSet = [9, 3, 4, 3].into_iter().collect();
        assert_eq!(u.to_vec(), vec![3, 4, 9]);
    }
}
