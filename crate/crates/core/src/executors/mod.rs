//! Runtime backends that execute task graphs.
//!
//! All executors share the same task body ([`TaskRunner`]) and differ only
//! in how they order tasks and move payloads between them:
//!
//! | executor   | scheduling                                            |
//! |------------|-------------------------------------------------------|
//! | `Serial`   | one thread, timestep-major                            |
//! | `ForkJoin` | static parallel loop per timestep, barrier in between |
//! | `Csp`      | one process per column, bounded per-edge channels     |
//! | `Dataflow` | dependency counters, per-worker queues, opt. stealing |

mod csp;
mod dataflow;
mod forkjoin;
mod serial;

use std::fmt;
use std::hint::black_box;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicU32, AtomicU64, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use crossbeam_utils::CachePadded;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{ColumnSet, Point, SpecError, TaskGraphSpec};
use crate::kernels::{self, KernelKind};
use crate::validation::{self, TaskOutput, Violation};

pub const DEFAULT_CHANNEL_CAPACITY: usize = 4;
pub const DEFAULT_WATCHDOG: Duration = Duration::from_secs(30);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecutorKind {
    Serial,
    ForkJoin,
    Csp,
    Dataflow,
}

impl ExecutorKind {
    pub const ALL: [ExecutorKind; 4] = [
        ExecutorKind::Serial,
        ExecutorKind::ForkJoin,
        ExecutorKind::Csp,
        ExecutorKind::Dataflow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExecutorKind::Serial => "serial",
            ExecutorKind::ForkJoin => "forkjoin",
            ExecutorKind::Csp => "csp",
            ExecutorKind::Dataflow => "dataflow",
        }
    }
}

impl fmt::Display for ExecutorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExecutorKind {
    type Err = ExecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "serial" => Ok(ExecutorKind::Serial),
            "forkjoin" => Ok(ExecutorKind::ForkJoin),
            "csp" => Ok(ExecutorKind::Csp),
            "dataflow" => Ok(ExecutorKind::Dataflow),
            _ => Err(ExecError::UnknownExecutor(s.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExecutorConfig {
    pub kind: ExecutorKind,
    pub workers: usize,
    /// Dataflow only: idle workers steal from other workers' queues.
    pub steal: bool,
    /// Csp only: messages buffered per edge; `None` means unbounded.
    pub channel_capacity: Option<usize>,
    /// Abort when no task completes for this long.
    pub watchdog: Duration,
}

impl ExecutorConfig {
    pub fn new(kind: ExecutorKind, workers: usize) -> Self {
        Self {
            kind,
            workers: if kind == ExecutorKind::Serial { 1 } else { workers },
            steal: true,
            channel_capacity: Some(DEFAULT_CHANNEL_CAPACITY),
            watchdog: DEFAULT_WATCHDOG,
        }
    }

    pub fn serial() -> Self {
        Self::new(ExecutorKind::Serial, 1)
    }

    pub fn with_steal(mut self, steal: bool) -> Self {
        self.steal = steal;
        self
    }

    pub fn with_channel_capacity(mut self, capacity: Option<usize>) -> Self {
        self.channel_capacity = capacity;
        self
    }

    pub fn with_watchdog(mut self, watchdog: Duration) -> Self {
        self.watchdog = watchdog;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRequest {
    /// Graphs executed concurrently; each needs a distinct `graph_id`.
    pub graphs: Vec<TaskGraphSpec>,
    pub validate: bool,
    pub warmup_runs: usize,
    pub timed_runs: usize,
    /// Count executions of every task (exactly-once checks).
    pub record_executions: bool,
}

impl RunRequest {
    pub fn new(graphs: Vec<TaskGraphSpec>) -> Self {
        Self {
            graphs,
            validate: true,
            warmup_runs: 1,
            timed_runs: 5,
            record_executions: false,
        }
    }

    /// A single untimed-warmup, single-run request; what tests mostly want.
    pub fn once(graphs: Vec<TaskGraphSpec>) -> Self {
        Self {
            warmup_runs: 0,
            timed_runs: 1,
            ..Self::new(graphs)
        }
    }

    pub fn with_validation(mut self, validate: bool) -> Self {
        self.validate = validate;
        self
    }

    pub fn with_runs(mut self, warmup_runs: usize, timed_runs: usize) -> Self {
        self.warmup_runs = warmup_runs;
        self.timed_runs = timed_runs;
        self
    }

    pub fn recording(mut self) -> Self {
        self.record_executions = true;
        self
    }

    pub fn num_tasks(&self) -> usize {
        self.graphs.iter().map(TaskGraphSpec::num_tasks).sum()
    }
}

/// Outcome of [`execute`]: timings of every timed run plus the counters of
/// the last one (counters are identical across runs).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExecutionReport {
    pub executor: ExecutorKind,
    pub workers: usize,
    pub wall_times_s: Vec<f64>,
    pub tasks_executed: u64,
    pub deps_delivered: u64,
    /// FLOPs (compute kernel) or bytes (memory kernel) of the last run.
    pub attributed_work: u64,
    pub violations: u64,
    /// More workers than available cores were requested.
    pub oversubscribed: bool,
    /// Per graph, per `t * width + i`: how often each task ran in the last
    /// run. Only present when the request asked for it.
    pub executions: Option<Vec<Vec<u32>>>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExecError {
    #[error("unknown executor `{0}`")]
    UnknownExecutor(String),
    #[error("invalid graph {graph}: {source}")]
    InvalidGraph { graph: usize, source: SpecError },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("validation failed: {0}")]
    Validation(#[from] Violation),
    #[error("deadlock: no task completed for {watchdog:?} ({completed} of {total} tasks done)")]
    Deadlock {
        watchdog: Duration,
        completed: u64,
        total: u64,
    },
    #[error("a worker thread panicked")]
    WorkerPanic,
}

/// Wall time from the first worker starting to the last one finishing.
/// Measured inside the workers, because on a busy machine the spawning
/// thread may only be rescheduled long after the workers began.
pub(crate) fn wall_span(
    spans: impl Iterator<Item = thread::Result<(Instant, Instant)>>,
) -> Result<Duration, ExecError> {
    let mut bounds: Option<(Instant, Instant)> = None;
    let mut panicked = false;
    for span in spans {
        match span {
            Ok((s, e)) => {
                bounds = Some(match bounds {
                    None => (s, e),
                    Some((s0, e0)) => (s0.min(s), e0.max(e)),
                })
            }
            Err(_) => panicked = true,
        }
    }
    if panicked {
        return Err(ExecError::WorkerPanic);
    }
    Ok(bounds.map_or(Duration::ZERO, |(s, e)| e - s))
}

pub fn available_cores() -> usize {
    thread::available_parallelism().map_or(1, |n| n.get())
}

/// Runs the request's warmups and timed runs on the configured backend.
pub fn execute(config: &ExecutorConfig, request: &RunRequest) -> Result<ExecutionReport, ExecError> {
    check_request(config, request)?;
    let mut wall_times = Vec::with_capacity(request.timed_runs);
    let mut last = RunStats::default();
    for run in 0..request.warmup_runs + request.timed_runs {
        let shared = Shared::new(config, request);
        let elapsed = match config.kind {
            ExecutorKind::Serial => serial::run(&shared)?,
            ExecutorKind::ForkJoin => forkjoin::run(&shared)?,
            ExecutorKind::Csp => csp::run(&shared)?,
            ExecutorKind::Dataflow => dataflow::run(&shared)?,
        };
        if let Some(err) = shared.take_error() {
            return Err(err);
        }
        let stats = shared.totals();
        debug_assert!(run == 0 || stats.work == last.work);
        if run >= request.warmup_runs {
            wall_times.push(elapsed.as_secs_f64());
        }
        last = stats;
        if run + 1 == request.warmup_runs + request.timed_runs {
            return Ok(ExecutionReport {
                executor: config.kind,
                workers: config.workers,
                wall_times_s: wall_times,
                tasks_executed: last.tasks,
                deps_delivered: last.deps,
                attributed_work: last.work,
                violations: 0,
                oversubscribed: config.workers > available_cores(),
                executions: shared.executions(),
            });
        }
    }
    unreachable!("timed_runs >= 1 is checked up front")
}

fn check_request(config: &ExecutorConfig, request: &RunRequest) -> Result<(), ExecError> {
    if config.workers == 0 {
        return Err(ExecError::InvalidRequest("workers must be at least 1".into()));
    }
    if config.kind == ExecutorKind::Serial && config.workers != 1 {
        return Err(ExecError::InvalidRequest("the serial executor has exactly one worker".into()));
    }
    if request.graphs.is_empty() {
        return Err(ExecError::InvalidRequest("at least one graph is required".into()));
    }
    if request.timed_runs == 0 {
        return Err(ExecError::InvalidRequest("timed_runs must be at least 1".into()));
    }
    for (n, g) in request.graphs.iter().enumerate() {
        g.validate()
            .map_err(|source| ExecError::InvalidGraph { graph: n, source })?;
        if request.graphs[..n].iter().any(|o| o.graph_id == g.graph_id) {
            return Err(ExecError::InvalidRequest(format!(
                "graph_id {} used more than once",
                g.graph_id
            )));
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub(crate) struct RunStats {
    pub tasks: u64,
    pub deps: u64,
    pub work: u64,
}

/// State shared by all workers of one run.
pub(crate) struct Shared<'a> {
    pub config: &'a ExecutorConfig,
    pub graphs: &'a [TaskGraphSpec],
    pub validate: bool,
    pub total_tasks: u64,
    abort: AtomicBool,
    error: Mutex<Option<ExecError>>,
    progress: Vec<CachePadded<AtomicU64>>,
    stats: Mutex<RunStats>,
    executions: Option<Vec<Vec<AtomicU32>>>,
}

impl<'a> Shared<'a> {
    fn new(config: &'a ExecutorConfig, request: &'a RunRequest) -> Self {
        let executions = request.record_executions.then(|| {
            request
                .graphs
                .iter()
                .map(|g| (0..g.width * g.height).map(|_| AtomicU32::new(0)).collect())
                .collect()
        });
        Self {
            config,
            graphs: &request.graphs,
            validate: request.validate,
            total_tasks: request.num_tasks() as u64,
            abort: AtomicBool::new(false),
            error: Mutex::new(None),
            progress: (0..config.workers)
                .map(|_| CachePadded::new(AtomicU64::new(0)))
                .collect(),
            stats: Mutex::new(RunStats::default()),
            executions,
        }
    }

    pub fn worker(&self, index: usize) -> TaskRunner<'_> {
        TaskRunner {
            shared: self,
            index,
            lanes: kernels::compute_buffer(),
            scratch: self.graphs.iter().map(|_| None).collect(),
            stats: RunStats::default(),
            inputs: Vec::new(),
        }
    }

    pub fn aborted(&self) -> bool {
        self.abort.load(Ordering::Relaxed)
    }

    /// Records the first error and tells every worker to stop.
    pub fn fail(&self, err: ExecError) {
        let mut slot = self.error.lock().unwrap();
        if slot.is_none() {
            *slot = Some(err);
        }
        self.abort.store(true, Ordering::Release);
    }

    fn take_error(&self) -> Option<ExecError> {
        self.error.lock().unwrap().take()
    }

    pub fn completed(&self) -> u64 {
        self.progress.iter().map(|p| p.load(Ordering::Relaxed)).sum()
    }

    fn totals(&self) -> RunStats {
        *self.stats.lock().unwrap()
    }

    fn executions(&self) -> Option<Vec<Vec<u32>>> {
        self.executions.as_ref().map(|all| {
            all.iter()
                .map(|g| g.iter().map(|c| c.load(Ordering::Relaxed)).collect())
                .collect()
        })
    }

    /// Polls task completions until `done` is set, failing the run when no
    /// progress is made for a full watchdog interval.
    pub fn watchdog(&self, done: &AtomicBool) {
        let tick = (self.config.watchdog / 20).clamp(Duration::from_millis(1), Duration::from_millis(50));
        let mut last = self.completed();
        let mut last_change = Instant::now();
        while !done.load(Ordering::Acquire) && !self.aborted() {
            thread::park_timeout(tick);
            let now = self.completed();
            if now != last {
                last = now;
                last_change = Instant::now();
            } else if last_change.elapsed() >= self.config.watchdog {
                self.fail(ExecError::Deadlock {
                    watchdog: self.config.watchdog,
                    completed: now,
                    total: self.total_tasks,
                });
                return;
            }
        }
    }
}

/// Per-worker task body: validates inputs, runs the kernel, and produces
/// the task's output. Owns the worker's private kernel buffers.
pub(crate) struct TaskRunner<'a> {
    shared: &'a Shared<'a>,
    index: usize,
    lanes: [f64; kernels::COMPUTE_LANES],
    scratch: Vec<Option<(Vec<u8>, usize)>>,
    stats: RunStats,
    /// Reusable input staging area for executors that gather inputs.
    pub inputs: Vec<TaskOutput>,
}

impl TaskRunner<'_> {
    /// Executes task `p` of graph number `g` on `inputs`, which must be the
    /// outputs of `deps` in ascending column order.
    pub fn run(
        &mut self,
        g: usize,
        p: Point,
        deps: &ColumnSet,
        inputs: &[TaskOutput],
    ) -> Result<TaskOutput, Violation> {
        let graph = &self.shared.graphs[g];
        if self.shared.validate {
            validation::verify_inputs(p, deps, inputs, graph.output_bytes)?;
        }
        let kernel = &graph.kernel;
        let iterations = kernel.effective_iterations(graph.graph_id, p.t, p.i);
        match kernel.kind {
            KernelKind::Compute => {
                self.lanes = kernels::compute_buffer();
                kernels::compute_kernel(iterations, &mut self.lanes);
                black_box(&self.lanes);
            }
            KernelKind::Memory => {
                let (scratch, cursor) = self.scratch[g]
                    .get_or_insert_with(|| (vec![0u8; kernel.scratch_bytes], 0));
                *cursor = kernels::memory_kernel(kernel, iterations, scratch, *cursor)
                    .expect("kernel spec validated before execution");
                black_box(&scratch);
            }
            KernelKind::Empty => {}
        }
        self.stats.tasks += 1;
        self.stats.deps += inputs.len() as u64;
        self.stats.work += kernel.work_for(iterations);
        if let Some(all) = &self.shared.executions {
            all[g][p.t * graph.width + p.i].fetch_add(1, Ordering::Relaxed);
        }
        self.shared.progress[self.index].fetch_add(1, Ordering::Relaxed);
        Ok(validation::make_output(p.t, p.i, graph.output_bytes)
            .expect("output size validated before execution"))
    }

    /// Like [`run`](Self::run) but reads inputs from `self.inputs` and
    /// clears them afterwards.
    pub fn run_staged(&mut self, g: usize, p: Point, deps: &ColumnSet) -> Result<TaskOutput, Violation> {
        let inputs = std::mem::take(&mut self.inputs);
        let out = self.run(g, p, deps, &inputs);
        self.inputs = inputs;
        self.inputs.clear();
        out
    }
}

impl Drop for TaskRunner<'_> {
    fn drop(&mut self) {
        let mut total = self.shared.stats.lock().unwrap();
        total.tasks += self.stats.tasks;
        total.deps += self.stats.deps;
        total.work += self.stats.work;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::DependencePattern;
    use crate::kernels::KernelSpec;

    #[test]
    fn parse_kinds() {
        assert_eq!("fork-join".parse::<ExecutorKind>().unwrap(), ExecutorKind::ForkJoin);
        assert_eq!("CSP".parse::<ExecutorKind>().unwrap(), ExecutorKind::Csp);
        assert!("mpi".parse::<ExecutorKind>().is_err());
    }

    #[test]
    fn rejects_bad_requests() {
        let g = TaskGraphSpec::new(4, 4, DependencePattern::Stencil);
        let cfg = ExecutorConfig::new(ExecutorKind::Dataflow, 2);
        assert!(matches!(
            execute(&cfg, &RunRequest::once(vec![])),
            Err(ExecError::InvalidRequest(_))
        ));
        assert!(matches!(
            execute(&cfg, &RunRequest::once(vec![g.clone(), g.clone()])),
            Err(ExecError::InvalidRequest(_))
        ));
        let bad = TaskGraphSpec::new(6, 4, DependencePattern::Tree);
        assert!(matches!(
            execute(&cfg, &RunRequest::once(vec![bad])),
            Err(ExecError::InvalidGraph { graph: 0, .. })
        ));
        let mut zero = cfg.clone();
        zero.workers = 0;
        assert!(execute(&zero, &RunRequest::once(vec![g])).is_err());
    }

    #[test]
    fn serial_trivial_counts() {
        let g = TaskGraphSpec::new(4, 4, DependencePattern::Trivial);
        let report = execute(&ExecutorConfig::serial(), &RunRequest::once(vec![g])).unwrap();
        assert_eq!(report.tasks_executed, 16);
        assert_eq!(report.deps_delivered, 0);
        assert_eq!(report.wall_times_s.len(), 1);
    }

    #[test]
    fn timed_runs_exclude_warmup() {
        let g = TaskGraphSpec::new(4, 4, DependencePattern::Stencil).with_kernel(KernelSpec::compute(4));
        let req = RunRequest::new(vec![g]);
        let report = execute(&ExecutorConfig::serial(), &req).unwrap();
        assert_eq!(report.wall_times_s.len(), 5);
        assert_eq!(report.attributed_work, 16 * 4 * 128);
        assert_eq!(report.deps_delivered, 30);
    }
}
