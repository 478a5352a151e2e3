//! Communicating-sequential-processes executor, the message-passing
//! baseline.
//!
//! Each column of each graph is a logical process that walks its
//! timesteps in order: receive one message from every dependency, run the
//! task, send the output to every successor. Messages travel over one
//! channel per (producer column, consumer column) pair, bounded to
//! `channel_capacity` messages, so a fast producer stalls once it is that
//! many steps ahead of a consumer.
//!
//! Processes are mapped round-robin onto `workers` threads. A thread never
//! blocks inside one process: a process waiting on a receive or on a full
//! channel yields, and the thread moves on to its other processes.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Barrier;
use std::thread;
use std::time::{Duration, Instant};

use crossbeam_channel::{Receiver, Sender, TryRecvError, TrySendError};
use crossbeam_utils::sync::{Parker, Unparker};
use crossbeam_utils::Backoff;

use super::{ExecError, Shared, TaskRunner};
use crate::graph::{ColumnSet, Point, TaskGraphSpec};
use crate::validation::TaskOutput;

const IDLE_PARK: Duration = Duration::from_millis(1);

/// Outgoing edge: consumer column, its channel and the thread running it.
struct Outlet {
    to: usize,
    tx: Sender<TaskOutput>,
    owner: usize,
}

/// Incoming edge: producer column, its channel and the thread running it.
struct Inlet {
    from: usize,
    rx: Receiver<TaskOutput>,
    owner: usize,
}

enum Phase {
    /// Collecting inputs for timestep `t`.
    Receive,
    /// Output of timestep `t` still has to reach some successors.
    Send { out: TaskOutput, next: usize },
}

struct Process<'g> {
    graph_index: usize,
    graph: &'g TaskGraphSpec,
    column: usize,
    t: usize,
    phase: Phase,
    deps: ColumnSet,
    succ: ColumnSet,
    succ_list: Vec<usize>,
    received: Vec<Option<TaskOutput>>,
    deps_ready: bool,
    inlets: Vec<Inlet>,
    outlets: Vec<Outlet>,
}

enum Step {
    Progress,
    Blocked,
    Finished,
}

impl<'g> Process<'g> {
    fn inlet(&self, from: usize) -> &Inlet {
        let k = self.inlets.binary_search_by_key(&from, |l| l.from).expect("inlet for every dependency");
        &self.inlets[k]
    }

    fn outlet(&self, to: usize) -> &Outlet {
        let k = self.outlets.binary_search_by_key(&to, |l| l.to).expect("outlet for every successor");
        &self.outlets[k]
    }

    /// Advances as far as possible without blocking.
    fn step(&mut self, runner: &mut TaskRunner<'_>, unparkers: &[Unparker], me: usize) -> Result<Step, ExecError> {
        let mut progressed = false;
        let stalled = |progressed| Ok(if progressed { Step::Progress } else { Step::Blocked });
        loop {
            if self.t >= self.graph.height {
                return Ok(Step::Finished);
            }
            match std::mem::replace(&mut self.phase, Phase::Receive) {
                Phase::Receive => {
                    let p = Point::new(self.t, self.column);
                    if !self.graph.contains_point(p) {
                        self.t += 1;
                        continue;
                    }
                    if !self.deps_ready {
                        self.graph.deps_into(p, &mut self.deps);
                        self.received.clear();
                        self.received.resize(self.deps.len(), None);
                        self.deps_ready = true;
                    }
                    let mut missing = false;
                    for (k, j) in self.deps.iter().enumerate() {
                        if self.received[k].is_some() {
                            continue;
                        }
                        let inlet = self.inlet(j);
                        match inlet.rx.try_recv() {
                            Ok(msg) => {
                                let owner = inlet.owner;
                                self.received[k] = Some(msg);
                                progressed = true;
                                if owner != me {
                                    // a slot just freed up on a bounded edge
                                    unparkers[owner].unpark();
                                }
                            }
                            // Disconnected only happens while an aborted run unwinds.
                            Err(TryRecvError::Empty | TryRecvError::Disconnected) => missing = true,
                        }
                    }
                    if missing {
                        return stalled(progressed);
                    }
                    runner.inputs.extend(self.received.drain(..).map(|m| m.expect("all received")));
                    let out = runner.run_staged(self.graph_index, p, &self.deps)?;
                    progressed = true;
                    self.deps_ready = false;
                    self.graph.reverse_deps_into(p, &mut self.succ);
                    self.succ_list.clear();
                    self.succ_list.extend(self.succ.iter());
                    self.phase = Phase::Send { out, next: 0 };
                }
                Phase::Send { out, mut next } => {
                    while let Some(&j) = self.succ_list.get(next) {
                        let outlet = self.outlet(j);
                        match outlet.tx.try_send(out.clone()) {
                            Ok(()) => {
                                next += 1;
                                progressed = true;
                                if outlet.owner != me {
                                    unparkers[outlet.owner].unpark();
                                }
                            }
                            Err(TrySendError::Full(_) | TrySendError::Disconnected(_)) => {
                                self.phase = Phase::Send { out, next };
                                return stalled(progressed);
                            }
                        }
                    }
                    self.t += 1;
                }
            }
        }
    }
}

/// Creates every process with its channel endpoints, already grouped by
/// owning thread.
fn build_processes<'g>(shared: &Shared<'g>) -> Vec<Vec<Process<'g>>> {
    let workers = shared.config.workers;
    let mut owners = Vec::new();
    let mut next = 0;
    for g in shared.graphs {
        owners.push((0..g.width).map(|_| {
            let w = next % workers;
            next += 1;
            w
        }).collect::<Vec<_>>());
    }

    let mut per_graph: Vec<Vec<Process<'g>>> = Vec::new();
    let mut set = ColumnSet::new();
    for (gi, graph) in shared.graphs.iter().enumerate() {
        // Every (producer, consumer) pair used at any timestep.
        let mut edges = Vec::new();
        for t in 1..graph.height {
            for i in 0..graph.width {
                graph.deps_into(Point::new(t, i), &mut set);
                edges.extend(set.iter().map(|j| (j, i)));
            }
        }
        edges.sort_unstable();
        edges.dedup();

        let mut procs: Vec<Process<'g>> = (0..graph.width)
            .map(|column| Process {
                graph_index: gi,
                graph,
                column,
                t: 0,
                phase: Phase::Receive,
                deps: ColumnSet::new(),
                succ: ColumnSet::new(),
                succ_list: Vec::new(),
                received: Vec::new(),
                deps_ready: false,
                inlets: Vec::new(),
                outlets: Vec::new(),
            })
            .collect();
        for (from, to) in edges {
            let (tx, rx) = match shared.config.channel_capacity {
                Some(cap) => crossbeam_channel::bounded(cap.max(1)),
                None => crossbeam_channel::unbounded(),
            };
            procs[from].outlets.push(Outlet { to, tx, owner: owners[gi][to] });
            procs[to].inlets.push(Inlet { from, rx, owner: owners[gi][from] });
        }
        for p in &mut procs {
            p.inlets.sort_unstable_by_key(|l| l.from);
            // outlets were pushed in (from, to) order, already sorted by `to`
        }
        per_graph.push(procs);
    }

    let mut by_worker: Vec<Vec<Process<'g>>> = (0..workers).map(|_| Vec::new()).collect();
    for (gi, procs) in per_graph.into_iter().enumerate() {
        for p in procs {
            let w = owners[gi][p.column];
            by_worker[w].push(p);
        }
    }
    by_worker
}

fn worker_loop(shared: &Shared<'_>, me: usize, mut procs: Vec<Process<'_>>, parker: &Parker, unparkers: &[Unparker]) {
    let mut runner = shared.worker(me);
    let backoff = Backoff::new();
    while !procs.is_empty() && !shared.aborted() {
        let mut progressed = false;
        let mut k = 0;
        while k < procs.len() {
            match procs[k].step(&mut runner, unparkers, me) {
                Ok(Step::Finished) => {
                    procs.swap_remove(k);
                    progressed = true;
                    continue;
                }
                Ok(Step::Progress) => progressed = true,
                Ok(Step::Blocked) => {}
                Err(e) => {
                    shared.fail(e);
                    for u in unparkers {
                        u.unpark();
                    }
                    return;
                }
            }
            k += 1;
        }
        if progressed {
            backoff.reset();
        } else if backoff.is_completed() {
            parker.park_timeout(IDLE_PARK);
        } else {
            backoff.snooze();
        }
    }
}

pub(super) fn run(shared: &Shared<'_>) -> Result<Duration, ExecError> {
    let workers = shared.config.workers;
    let by_worker = build_processes(shared);
    let parkers: Vec<Parker> = (0..workers).map(|_| Parker::new()).collect();
    let unparkers: Vec<Unparker> = parkers.iter().map(|p| p.unparker().clone()).collect();
    let start_line = Barrier::new(workers + 1);
    let finished = AtomicBool::new(false);

    thread::scope(|s| {
        let watchdog = s.spawn(|| shared.watchdog(&finished));
        let handles: Vec<_> = by_worker
            .into_iter()
            .zip(parkers)
            .enumerate()
            .map(|(w, (procs, parker))| {
                let (start_line, unparkers) = (&start_line, &unparkers);
                s.spawn(move || {
                    start_line.wait();
                    let start = Instant::now();
                    worker_loop(shared, w, procs, &parker, unparkers);
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
