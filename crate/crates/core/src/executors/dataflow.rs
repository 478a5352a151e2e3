//! Dependency-counting executor.
//!
//! Every task carries a counter of unfinished dependencies. Finishing a
//! task decrements the counters of its successors and enqueues those that
//! reach zero on their home worker (column affinity). With stealing on,
//! idle workers take work from other workers' queues. Tasks of all graphs
//! share one scheduler, so independent graphs overlap freely.

use std::sync::atomic::{AtomicBool, AtomicU32, AtomicU64, Ordering};
use std::sync::{Barrier, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use crossbeam_deque::{Injector, Steal};
use crossbeam_utils::sync::{Parker, Unparker};
use crossbeam_utils::Backoff;

use super::{ExecError, Shared};
use crate::graph::{ColumnSet, Point};
use crate::validation::TaskOutput;

const IDLE_PARK: Duration = Duration::from_millis(1);

#[derive(Clone, Copy, Debug)]
struct Task {
    graph: u32,
    t: u32,
    i: u32,
}

struct Scheduler<'a> {
    shared: &'a Shared<'a>,
    /// Start of each graph in the flat task arrays.
    task_base: Vec<usize>,
    /// Start of each graph in the global column numbering.
    column_base: Vec<usize>,
    pending: Vec<AtomicU32>,
    consumers: Vec<AtomicU32>,
    outputs: Vec<Mutex<Option<TaskOutput>>>,
    queues: Vec<Injector<Task>>,
    unparkers: Vec<Unparker>,
    parked: Vec<AtomicBool>,
    remaining: AtomicU64,
    done: AtomicBool,
}

impl<'a> Scheduler<'a> {
    fn new(shared: &'a Shared<'a>, unparkers: Vec<Unparker>) -> Self {
        let graphs = shared.graphs;
        let workers = shared.config.workers;
        let mut task_base = Vec::with_capacity(graphs.len());
        let mut column_base = Vec::with_capacity(graphs.len());
        let (mut tasks, mut columns) = (0, 0);
        for g in graphs {
            task_base.push(tasks);
            column_base.push(columns);
            tasks += g.width * g.height;
            columns += g.width;
        }
        let mut pending = Vec::with_capacity(tasks);
        let mut consumers = Vec::with_capacity(tasks);
        let mut set = ColumnSet::new();
        for g in graphs {
            for t in 0..g.height {
                for i in 0..g.width {
                    let p = Point::new(t, i);
                    g.deps_into(p, &mut set);
                    pending.push(AtomicU32::new(set.len() as u32));
                    g.reverse_deps_into(p, &mut set);
                    consumers.push(AtomicU32::new(set.len() as u32));
                }
            }
        }
        Self {
            shared,
            task_base,
            column_base,
            pending,
            consumers,
            outputs: (0..tasks).map(|_| Mutex::new(None)).collect(),
            queues: (0..workers).map(|_| Injector::new()).collect(),
            unparkers,
            parked: (0..workers).map(|_| AtomicBool::new(false)).collect(),
            remaining: AtomicU64::new(shared.total_tasks),
            done: AtomicBool::new(shared.total_tasks == 0),
        }
    }

    fn index(&self, g: usize, t: usize, i: usize) -> usize {
        self.task_base[g] + t * self.shared.graphs[g].width + i
    }

    fn home(&self, g: usize, i: usize) -> usize {
        (self.column_base[g] + i) % self.queues.len()
    }

    /// Enqueues every task with no dependencies.
    fn seed(&self) {
        for (g, graph) in self.shared.graphs.iter().enumerate() {
            for p in graph.points() {
                if self.pending[self.index(g, p.t, p.i)].load(Ordering::Relaxed) == 0 {
                    self.queues[self.home(g, p.i)].push(Task {
                        graph: g as u32,
                        t: p.t as u32,
                        i: p.i as u32,
                    });
                }
            }
        }
    }

    fn finished(&self) -> bool {
        self.done.load(Ordering::Acquire) || self.shared.aborted()
    }

    fn wake_all(&self) {
        for u in &self.unparkers {
            u.unpark();
        }
    }

    fn find_task(&self, me: usize) -> Option<Task> {
        loop {
            match self.queues[me].steal() {
                Steal::Success(task) => return Some(task),
                Steal::Retry => continue,
                Steal::Empty => break,
            }
        }
        if !self.shared.config.steal {
            return None;
        }
        let n = self.queues.len();
        for k in 1..n {
            let victim = (me + k) % n;
            loop {
                match self.queues[victim].steal() {
                    Steal::Success(task) => return Some(task),
                    Steal::Retry => continue,
                    Steal::Empty => break,
                }
            }
        }
        None
    }

    fn worker_loop(&self, me: usize, parker: &Parker) {
        let mut runner = self.shared.worker(me);
        let mut deps = ColumnSet::new();
        let mut succ = ColumnSet::new();
        let backoff = Backoff::new();
        while !self.finished() {
            let Some(task) = self.find_task(me) else {
                if backoff.is_completed() {
                    self.parked[me].store(true, Ordering::SeqCst);
                    if self.queues[me].is_empty() && !self.finished() {
                        parker.park_timeout(IDLE_PARK);
                    }
                    self.parked[me].store(false, Ordering::SeqCst);
                } else {
                    backoff.snooze();
                }
                continue;
            };
            backoff.reset();
            let (g, t, i) = (task.graph as usize, task.t as usize, task.i as usize);
            let graph = &self.shared.graphs[g];
            let p = Point::new(t, i);

            graph.deps_into(p, &mut deps);
            for j in deps.iter() {
                let idx = self.index(g, t - 1, j);
                let mut slot = self.outputs[idx].lock().unwrap();
                let input = if self.consumers[idx].fetch_sub(1, Ordering::AcqRel) == 1 {
                    slot.take()
                } else {
                    slot.clone()
                };
                drop(slot);
                runner.inputs.push(input.expect("dependency output published"));
            }
            let out = match runner.run_staged(g, p, &deps) {
                Ok(out) => out,
                Err(v) => {
                    self.shared.fail(v.into());
                    self.wake_all();
                    return;
                }
            };

            graph.reverse_deps_into(p, &mut succ);
            if !succ.is_empty() {
                *self.outputs[self.index(g, t, i)].lock().unwrap() = Some(out);
            }
            for j in succ.iter() {
                if self.pending[self.index(g, t + 1, j)].fetch_sub(1, Ordering::AcqRel) == 1 {
                    self.release(me, Task { graph: g as u32, t: (t + 1) as u32, i: j as u32 });
                }
            }
            if self.remaining.fetch_sub(1, Ordering::AcqRel) == 1 {
                self.done.store(true, Ordering::Release);
                self.wake_all();
            }
        }
    }

    fn release(&self, me: usize, task: Task) {
        let home = self.home(task.graph as usize, task.i as usize);
        self.queues[home].push(task);
        if home != me {
            self.unparkers[home].unpark();
        }
        if self.shared.config.steal {
            // Hand the new task to an idle worker if there is one.
            if let Some(w) = (0..self.parked.len()).find(|&w| w != me && w != home && self.parked[w].load(Ordering::SeqCst)) {
                self.unparkers[w].unpark();
            }
        }
    }
}

pub(super) fn run(shared: &Shared<'_>) -> Result<Duration, ExecError> {
    let workers = shared.config.workers;
    let parkers: Vec<Parker> = (0..workers).map(|_| Parker::new()).collect();
    let sched = Scheduler::new(shared, parkers.iter().map(|p| p.unparker().clone()).collect());
    sched.seed();
    let start_line = Barrier::new(workers + 1);
    let finished = AtomicBool::new(false);

    thread::scope(|s| {
        let watchdog = s.spawn(|| shared.watchdog(&finished));
        let handles: Vec<_> = parkers
            .into_iter()
            .enumerate()
            .map(|(w, parker)| {
                let (sched, start_line) = (&sched, &start_line);
                s.spawn(move || {
                    start_line.wait();
                    let start = Instant::now();
                    sched.worker_loop(w, &parker);
                    (start, Instant::now())
                })
            })
            .collect();
        start_line.wait();
        let elapsed = super::wall_span(handles.into_iter().map(|h| h.join()));
        finished.store(true, Ordering::Release);
        watchdog.thread().unpark();
        elapsed
    })
}
