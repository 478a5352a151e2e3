//! Bulk-synchronous executor: every timestep is a statically scheduled
//! parallel loop over the columns of all graphs, closed by a barrier.
//!
//! Outputs live in two shared rows per graph; row `t % 2` is written at
//! timestep `t` and read at `t + 1`, and the barrier orders the two.

use std::sync::{Barrier, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use super::{ExecError, Shared};
use crate::graph::{ColumnSet, Point};
use crate::validation::TaskOutput;

type Row = Vec<Mutex<Option<TaskOutput>>>;

pub(super) fn run(shared: &Shared<'_>) -> Result<Duration, ExecError> {
    let graphs = shared.graphs;
    let workers = shared.config.workers;
    let height = graphs.iter().map(|g| g.height).max().unwrap_or(0);
    let rows: [Vec<Row>; 2] = std::array::from_fn(|_| {
        graphs
            .iter()
            .map(|g| (0..g.width).map(|_| Mutex::new(None)).collect())
            .collect()
    });
    // Flat (graph, column) list walked by every worker with stride `workers`.
    let slots: Vec<(usize, usize)> = graphs
        .iter()
        .enumerate()
        .flat_map(|(g, graph)| (0..graph.width).map(move |i| (g, i)))
        .collect();
    let start_line = Barrier::new(workers + 1);
    let barrier = Barrier::new(workers);

    let elapsed = thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let (rows, slots, barrier, start_line) = (&rows, &slots, &barrier, &start_line);
                s.spawn(move || {
                    let mut runner = shared.worker(w);
                    let mut deps = ColumnSet::new();
                    start_line.wait();
                    let start = Instant::now();
                    for t in 0..height {
                        let (prev, cur) = (&rows[(t + 1) % 2], &rows[t % 2]);
                        for &(g, i) in slots.iter().skip(w).step_by(workers) {
                            let graph = &graphs[g];
                            let p = Point::new(t, i);
                            if shared.aborted() || !graph.contains_point(p) {
                                continue;
                            }
                            graph.deps_into(p, &mut deps);
                            for j in deps.iter() {
                                let input = prev[g][j].lock().unwrap().clone();
                                runner.inputs.push(input.expect("dependency ran last timestep"));
                            }
                            match runner.run_staged(g, p, &deps) {
                                Ok(out) => *cur[g][i].lock().unwrap() = Some(out),
                                Err(v) => shared.fail(v.into()),
                            }
                        }
                        barrier.wait();
                        if shared.aborted() {
                            break;
                        }
                    }
                    (start, Instant::now())
                })
            })
            .collect();
        start_line.wait();
        super::wall_span(handles.into_iter().map(|h| h.join()))
    });
    elapsed
}
