//! Single-threaded reference executor: timestep-major, column-minor.

use std::time::{Duration, Instant};

use super::Shared;
use crate::graph::{ColumnSet, Point};
use crate::validation::TaskOutput;

pub(super) fn run(shared: &Shared<'_>) -> Result<Duration, super::ExecError> {
    let graphs = shared.graphs;
    let height = graphs.iter().map(|g| g.height).max().unwrap_or(0);
    let mut prev: Vec<Vec<Option<TaskOutput>>> = graphs.iter().map(|g| vec![None; g.width]).collect();
    let mut cur = prev.clone();
    let mut deps = ColumnSet::new();
    let mut runner = shared.worker(0);

    let start = Instant::now();
    for t in 0..height {
        for (g, graph) in graphs.iter().enumerate() {
            if t >= graph.height {
                continue;
            }
            for i in 0..graph.width {
                let p = Point::new(t, i);
                if !graph.contains_point(p) {
                    continue;
                }
                graph.deps_into(p, &mut deps);
                runner
                    .inputs
                    .extend(deps.iter().map(|j| prev[g][j].clone().expect("dependency ran earlier")));
                cur[g][i] = Some(runner.run_staged(g, p, &deps)?);
            }
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(start.elapsed())
}
