use std::time::Duration;

use taskbench::executors::ExecError;
use taskbench::{
    execute, DependencePattern, ExecutorConfig, ExecutorKind, KernelSpec, PatternKind, RunRequest,
    TaskGraphSpec,
};

fn configs() -> Vec<ExecutorConfig> {
    vec![
        ExecutorConfig::serial(),
        ExecutorConfig::new(ExecutorKind::ForkJoin, 3),
        ExecutorConfig::new(ExecutorKind::Csp, 3),
        ExecutorConfig::new(ExecutorKind::Csp, 2).with_channel_capacity(None),
        ExecutorConfig::new(ExecutorKind::Csp, 2).with_channel_capacity(Some(1)),
        ExecutorConfig::new(ExecutorKind::Dataflow, 3),
        ExecutorConfig::new(ExecutorKind::Dataflow, 2).with_steal(false),
    ]
}

fn graphs(kind: PatternKind, count: usize, width: usize, output_bytes: usize) -> Vec<TaskGraphSpec> {
    (0..count)
        .map(|g| {
            TaskGraphSpec::new(width, 12, DependencePattern::from_parts(kind, 3, 0.3, 99))
                .with_graph_id(g)
                .with_kernel(KernelSpec::compute(8).with_imbalance(0.5, 3))
                .with_output_bytes(output_bytes)
        })
        .collect()
}

#[test]
fn every_executor_runs_every_task_once() {
    for cfg in configs() {
        for kind in PatternKind::ALL {
            for count in [1, 3] {
                let req = RunRequest::once(graphs(kind, count, 8, 48)).recording();
                let report = execute(&cfg, &req).unwrap_or_else(|e| panic!("{cfg:?} {kind}: {e}"));
                assert_eq!(report.violations, 0);
                assert_eq!(report.tasks_executed as usize, req.num_tasks());
                let counts = report.executions.unwrap();
                for (g, graph) in req.graphs.iter().enumerate() {
                    for t in 0..graph.height {
                        for i in 0..graph.width {
                            let expected = graph.contains_point(taskbench::Point::new(t, i)) as u32;
                            assert_eq!(counts[g][t * graph.width + i], expected, "{cfg:?} {kind} g{g} ({t},{i})");
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn work_and_edges_identical_across_executors() {
    for kind in [PatternKind::Stencil, PatternKind::Random, PatternKind::Spread] {
        let req = RunRequest::once(graphs(kind, 2, 8, 16));
        let reference = execute(&ExecutorConfig::serial(), &req).unwrap();
        let expected_edges: usize = req.graphs.iter().map(TaskGraphSpec::num_deps).sum();
        assert_eq!(reference.deps_delivered as usize, expected_edges);
        for cfg in configs() {
            let report = execute(&cfg, &req).unwrap();
            assert_eq!(report.attributed_work, reference.attributed_work, "{cfg:?}");
            assert_eq!(report.deps_delivered, reference.deps_delivered, "{cfg:?}");
        }
    }
}

#[test]
fn heterogeneous_graphs_and_memory_kernel() {
    let a = TaskGraphSpec::new(8, 20, DependencePattern::Fft)
        .with_kernel(KernelSpec::memory(3, 256, 1024))
        .with_output_bytes(4096);
    let b = TaskGraphSpec::new(5, 7, DependencePattern::Sweep)
        .with_graph_id(1)
        .with_kernel(KernelSpec::compute(2))
        .with_output_bytes(5000);
    let req = RunRequest::once(vec![a, b]);
    for cfg in configs() {
        let r = execute(&cfg, &req).unwrap();
        assert_eq!(r.tasks_executed, 8 * 20 + 5 * 7);
        assert_eq!(r.attributed_work, 160 * 3 * 512 + 35 * 2 * 128);
    }
}

#[test]
fn more_workers_than_columns() {
    let req = RunRequest::once(graphs(PatternKind::Stencil, 1, 2, 16));
    for kind in [ExecutorKind::ForkJoin, ExecutorKind::Csp, ExecutorKind::Dataflow] {
        let r = execute(&ExecutorConfig::new(kind, 5), &req).unwrap();
        assert_eq!(r.tasks_executed, 24);
    }
}

#[test]
fn watchdog_reports_stalls() {
    // One task that runs far longer than the watchdog interval.
    let g = TaskGraphSpec::new(1, 2, DependencePattern::Stencil).with_kernel(KernelSpec::compute(3_000_000));
    let cfg = ExecutorConfig::new(ExecutorKind::Dataflow, 1).with_watchdog(Duration::from_millis(5));
    match execute(&cfg, &RunRequest::once(vec![g])) {
        Err(ExecError::Deadlock { total: 2, .. }) => {}
        other => panic!("expected a deadlock report, got {other:?}"),
    }
}
