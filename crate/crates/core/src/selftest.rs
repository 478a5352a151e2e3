//! Built-in correctness checks: dependence relations against predicate
//! oracles, and every executor against the validation layer.

use std::fmt;

use crate::executors::{self, ExecutorConfig, ExecutorKind, RunRequest};
use crate::graph::{DependencePattern, PatternKind, Point, TaskGraphSpec};
use crate::kernels::KernelSpec;
use crate::rng;

/// Membership test written directly from each relation's set-builder
/// definition, independent of the constructive code in `graph`.
pub fn dep_predicate(g: &TaskGraphSpec, p: Point, j: usize) -> bool {
    let (t, i, w) = (p.t as i64, p.i as i64, g.width as i64);
    if p.t == 0 || !g.contains_point(p) || j >= g.width {
        return false;
    }
    let j = j as i64;
    let lg = g.width.trailing_zeros() as i64;
    match g.pattern {
        DependencePattern::Trivial => false,
        DependencePattern::Stencil => (j - i).abs() <= 1,
        DependencePattern::Sweep => j == i || j == i - 1,
        DependencePattern::Fft => {
            if lg == 0 {
                return j == i;
            }
            let off = 1i64 << ((t - 1) % lg);
            j == i || j == i - off || j == i + off
        }
        DependencePattern::Tree => {
            if t <= lg {
                // the parent of i is i with its lowest bits (below W / 2^(t-1)) cleared
                let block = w >> (t - 1);
                j == (i / block) * block
            } else {
                let e = t - 1 - lg;
                j == i || (e < 62 && j == i + (1i64 << e))
            }
        }
        DependencePattern::Random { fraction, seed } => {
            rng::uniform(&[seed, g.graph_id as u64, t as u64, i as u64, j as u64]) < fraction
        }
        DependencePattern::Nearest { radix } => {
            let k = radix as i64;
            j >= i - k / 2 && j < i + (k + 1) / 2
        }
        DependencePattern::Spread { radix } => {
            let k = radix as i64;
            let stride = if k == 0 { 1 } else { (w + k - 1) / k };
            (0..k).any(|m| (i + m * stride) % w == j)
        }
    }
}

#[derive(Debug, Default, Clone, PartialEq)]
pub struct CheckSummary {
    pub cases: usize,
    pub failures: Vec<String>,
}

impl CheckSummary {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    fn fail(&mut self, msg: String) {
        if self.failures.len() < 20 {
            self.failures.push(msg);
        }
    }
}

impl fmt::Display for CheckSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} cases, {} failures", self.cases, self.failures.len())
    }
}

pub fn pattern_with_defaults(kind: PatternKind) -> DependencePattern {
    DependencePattern::from_parts(kind, 5, DependencePattern::DEFAULT_RANDOM_FRACTION, 0x5eed)
}

/// Checks `deps` against [`dep_predicate`], `reverse_deps` against the
/// converse of `deps`, and the in-range property, for every task of every
/// pattern at widths 1..=64 (powers of two) and height 16.
pub fn check_dependence_oracles() -> CheckSummary {
    let mut s = CheckSummary::default();
    for kind in PatternKind::ALL {
        for lg in 0..=6 {
            let g = TaskGraphSpec::new(1 << lg, 16, pattern_with_defaults(kind));
            check_graph(&g, &mut s);
        }
        if !pattern_with_defaults(kind).needs_power_of_two() {
            for w in [3, 5, 12, 20, 33] {
                check_graph(&TaskGraphSpec::new(w, 16, pattern_with_defaults(kind)), &mut s);
            }
        }
    }
    s
}

fn check_graph(g: &TaskGraphSpec, s: &mut CheckSummary) {
    let kind = g.pattern.kind();
    for t in 0..g.height {
        for i in 0..g.width {
            let p = Point::new(t, i);
            s.cases += 1;
            let deps = g.deps(p);
            let oracle: Vec<usize> = (0..g.width).filter(|&j| dep_predicate(g, p, j)).collect();
            if deps.to_vec() != oracle {
                s.fail(format!("{kind} W={} deps{p}: got {:?}, oracle {:?}", g.width, deps.to_vec(), oracle));
            }
            if t > 0 && deps.iter().any(|j| !g.contains_point(Point::new(t - 1, j))) {
                s.fail(format!("{kind} W={} deps{p} references a missing task", g.width));
            }
            let rev: Vec<usize> = if t + 1 < g.height && g.contains_point(p) {
                (0..g.width)
                    .filter(|&j| {
                        let q = Point::new(t + 1, j);
                        g.contains_point(q) && g.deps(q).contains(i)
                    })
                    .collect()
            } else {
                Vec::new()
            };
            let got = g.reverse_deps(p).to_vec();
            if got != rev {
                s.fail(format!("{kind} W={} reverse_deps{p}: got {got:?}, converse {rev:?}", g.width));
            }
            if got.iter().chain(deps.to_vec().iter()).any(|&j| j >= g.width) {
                s.fail(format!("{kind} W={} {p}: column out of range", g.width));
            }
        }
    }
}

/// Runs all executors × patterns × {1, 4} graphs with validation and
/// execution counting on small graphs.
pub fn check_executor_matrix(workers: usize) -> CheckSummary {
    let mut s = CheckSummary::default();
    let output_sizes = [16, 100, 4096];
    for exec in ExecutorKind::ALL {
        let cfg = ExecutorConfig::new(exec, workers.max(1));
        for (n, kind) in PatternKind::ALL.into_iter().enumerate() {
            for graphs in [1, 4] {
                let width = [16, 8, 4][n % 3];
                let bytes = output_sizes[(n + graphs) % output_sizes.len()];
                let specs: Vec<TaskGraphSpec> = (0..graphs)
                    .map(|g| {
                        TaskGraphSpec::new(width, 16, pattern_with_defaults(kind))
                            .with_graph_id(g)
                            .with_kernel(KernelSpec::compute(16).with_imbalance(0.5, 1))
                            .with_output_bytes(bytes)
                    })
                    .collect();
                let req = RunRequest::once(specs).recording();
                s.cases += 1;
                let label = format!("{exec} {kind} graphs={graphs} W={width} bytes={bytes}");
                match executors::execute(&cfg, &req) {
                    Ok(r) => {
                        let once = r
                            .executions
                            .as_ref()
                            .is_some_and(|all| {
                                req.graphs.iter().zip(all).all(|(g, counts)| {
                                    (0..g.height * g.width).all(|k| {
                                        let p = Point::new(k / g.width, k % g.width);
                                        counts[k] == g.contains_point(p) as u32
                                    })
                                })
                            });
                        if r.violations != 0 || !once || r.tasks_executed as usize != req.num_tasks() {
                            s.fail(format!("{label}: wrong execution counts"));
                        }
                    }
                    Err(e) => s.fail(format!("{label}: {e}")),
                }
            }
        }
    }
    s
}
