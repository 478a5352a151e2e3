//! Parameterized task-graph benchmark.
//!
//! A task graph is a `height × width` grid of tasks where each task depends
//! on a pattern-defined set of tasks in the previous timestep. The same
//! graph can be executed by several runtime backends; sweeping the task
//! size and measuring efficiency yields the minimum effective task
//! granularity (METG) of each backend.

pub mod executors;
pub mod graph;
pub mod kernels;
pub mod metg;
pub mod record;
pub mod rng;
pub mod selftest;
pub mod validation;

pub use executors::{execute, ExecError, ExecutionReport, ExecutorConfig, ExecutorKind, RunRequest};
pub use graph::{ColumnSet, DependencePattern, PatternKind, Point, SpecError, TaskGraphSpec};
pub use kernels::{KernelKind, KernelSpec};
pub use validation::{make_output, verify_inputs, TaskOutput, Violation};
