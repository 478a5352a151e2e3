//! Acceptance report: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so that criteria execute one at a time
//! and timing-sensitive ones are not disturbed by parallel tests. Exits
//! non-zero if any criterion whose preconditions hold fails.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use taskbench::executors::available_cores;
use taskbench::kernels::{compute_buffer, compute_kernel, COMPUTE_INIT};
use taskbench::metg::{
    self, compute_metg, CurvePoint, EfficiencyCurve, RunResult, SweepOptions,
};
use taskbench::selftest;
use taskbench::{
    execute, DependencePattern, ExecutorConfig, ExecutorKind, KernelSpec, RunRequest, TaskGraphSpec,
};

enum Outcome {
    Pass(String),
    Fail(String),
    /// Failed, but a precondition of the criterion does not hold here.
    Unmet(String),
}

struct Report {
    hard_failures: usize,
}

impl Report {
    fn check(&mut self, name: &str, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Outcome::Pass(d) => println!("PASS {name}: {d} [{secs:.1}s]"),
            Outcome::Fail(d) => {
                self.hard_failures += 1;
                println!("FAIL {name}: {d} [{secs:.1}s]");
            }
            Outcome::Unmet(d) => println!("FAIL {name}: {d} [{secs:.1}s] (precondition unmet, not counted)"),
        }
    }
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn dependence_oracle() -> Outcome {
    let start = Instant::now();
    let s = selftest::check_dependence_oracles();
    let secs = start.elapsed().as_secs_f64();
    verdict(
        s.passed() && secs < 10.0,
        format!("{} tasks checked, {} mismatches, {secs:.2}s (limit 10s)", s.cases, s.failures.len()),
    )
}

fn cross_executor() -> Outcome {
    let start = Instant::now();
    let s = selftest::check_executor_matrix(4);
    let secs = start.elapsed().as_secs_f64();
    let first = s.failures.first().cloned().unwrap_or_default();
    verdict(
        s.passed() && secs < 60.0,
        format!("{} runs, {} failed {first}, {secs:.2}s (limit 60s)", s.cases, s.failures.len()),
    )
}

fn compute_oracle() -> Outcome {
    let mut bad = Vec::new();
    for n in 0..=20u64 {
        let mut expected = COMPUTE_INIT;
        for _ in 0..n {
            expected = expected * expected + expected;
        }
        let mut lanes = compute_buffer();
        compute_kernel(n, &mut lanes);
        if lanes.iter().any(|x| x.to_bits() != expected.to_bits()) {
            bad.push(n);
        }
    }
    verdict(bad.is_empty(), format!("iterations 0..=20 bit-exact, mismatches at {bad:?}"))
}

fn metg_unit() -> Outcome {
    let pt = |g: f64, e: f64| CurvePoint { granularity_us: g, efficiency: e };
    let curve = EfficiencyCurve::from_points(vec![pt(100.0, 0.9), pt(10.0, 0.6), pt(1.0, 0.2)], 1.0);
    let m = compute_metg(&curve, 0.5).unwrap().metg_us.unwrap_or(f64::NAN);
    verdict((m - 5.62).abs() <= 0.01, format!("METG(50%) = {m:.4} us (want 5.62 +- 0.01)"))
}

/// Small stencil sweep used by the measured-curve criteria.
fn stencil_sweep(config: &ExecutorConfig, ladder: &[u64]) -> EfficiencyCurve {
    let template = TaskGraphSpec::new(4, 50, DependencePattern::Stencil).with_kernel(KernelSpec::compute(1));
    let options = SweepOptions {
        timed_runs: 3,
        ..SweepOptions::default()
    };
    metg::sweep(config, &[template], ladder, &options).expect("sweep").curve
}

fn measured_ladder() -> Vec<u64> {
    let template = TaskGraphSpec::new(4, 50, DependencePattern::Stencil).with_kernel(KernelSpec::compute(1));
    metg::default_ladder(&template)
}

fn threshold_monotonicity(curves: &[(ExecutorKind, EfficiencyCurve)]) -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for (kind, curve) in curves {
        let at = |th: f64| compute_metg(curve, th).unwrap().metg_us.unwrap_or(f64::INFINITY);
        let (a, b, c) = (at(0.25), at(0.5), at(0.75));
        ok &= a <= b && b <= c;
        details.push(format!("{kind} {a:.3}/{b:.3}/{c:.3}"));
    }
    verdict(ok, format!("METG(25/50/75%) us: {}", details.join(", ")))
}

fn overhead_ordering(curves: &[(ExecutorKind, EfficiencyCurve)], serial: &EfficiencyCurve) -> Outcome {
    let dataflow = &curves.iter().find(|(k, _)| *k == ExecutorKind::Dataflow).expect("dataflow curve").1;
    let s = compute_metg(serial, 0.5).unwrap().metg_us.unwrap_or(f64::INFINITY);
    let d = compute_metg(dataflow, 0.5).unwrap().metg_us.unwrap_or(f64::INFINITY);
    let detail = format!("serial {s:.3} us <= 2 x dataflow(1 worker) {d:.3} us");
    verdict(s <= 2.0 * d, detail)
}

fn efficiency_of(config: &ExecutorConfig, graphs: Vec<TaskGraphSpec>, balanced_perf: f64) -> (f64, RunResult) {
    let request = RunRequest::new(graphs).with_runs(1, 3);
    let report = execute(config, &request).expect("run");
    let run = RunResult::from_report(&request, &report);
    (run.perf / balanced_perf, run)
}

/// Graphs of `count` × `width` columns whose balanced tasks last at least
/// `2 × 5 ms`, so imbalanced ones average at least 5 ms.
fn imbalance_graphs(count: usize, width: usize, height: usize, imbalance: f64) -> Vec<TaskGraphSpec> {
    let probe = TaskGraphSpec::new(1, 1, DependencePattern::Stencil).with_kernel(KernelSpec::compute(1));
    let iterations = 2 * metg::calibrate_top(&probe, 5e-3);
    (0..count)
        .map(|g| {
            TaskGraphSpec::new(width, height, DependencePattern::Stencil)
                .with_graph_id(g)
                .with_kernel(KernelSpec::compute(iterations).with_imbalance(imbalance, 7))
        })
        .collect()
}

fn balanced_perf(config: &ExecutorConfig, count: usize, width: usize, height: usize) -> f64 {
    let request = RunRequest::new(imbalance_graphs(count, width, height, 0.0)).with_runs(1, 3);
    RunResult::from_report(&request, &execute(config, &request).expect("run")).perf
}

fn imbalance_bound(cores: usize) -> Outcome {
    let n = cores.min(8);
    let config = ExecutorConfig::new(ExecutorKind::ForkJoin, n);
    let height = 40;
    let peak = balanced_perf(&config, 1, n, height);
    let (eff, run) = efficiency_of(&config, imbalance_graphs(1, n, height, 1.0), peak);
    let bound = (n as f64 + 1.0) / (2.0 * n as f64);
    verdict(
        (eff - bound).abs() <= 0.05 && run.task_granularity_us >= 5000.0,
        format!(
            "N={n}: efficiency {eff:.3} vs (N+1)/(2N) = {bound:.3} +- 0.05, granularity {:.0} us",
            run.task_granularity_us
        ),
    )
}

fn multi_graph(cores: usize) -> Outcome {
    let n = cores.min(8);
    let height = 20;
    let mut effs = Vec::new();
    for kind in [ExecutorKind::ForkJoin, ExecutorKind::Dataflow] {
        let config = ExecutorConfig::new(kind, n);
        let peak = balanced_perf(&config, 4, n, height);
        effs.push(efficiency_of(&config, imbalance_graphs(4, n, height, 1.0), peak).0);
    }
    let (fj, df) = (effs[0], effs[1]);
    let detail = format!("N={n}, 4 graphs, imbalance 1: dataflow {df:.3} vs forkjoin {fj:.3}");
    if n < 2 {
        // One worker runs every task back to back under both executors;
        // any gap is noise, so the comparison says nothing either way.
        return Outcome::Unmet(format!("{detail}; needs >= 2 cores, have {cores}"));
    }
    verdict(df > fj, detail)
}

fn validation_overhead(ladder: &[u64]) -> Outcome {
    let smallest = *ladder.last().expect("ladder");
    let graphs = vec![TaskGraphSpec::new(4, 1000, DependencePattern::Stencil).with_kernel(KernelSpec::compute(smallest))];
    let config = ExecutorConfig::serial();
    let best = |validate: bool| {
        let request = RunRequest::new(graphs.clone()).with_validation(validate).with_runs(2, 15);
        let report = execute(&config, &request).expect("run");
        report.wall_times_s.iter().copied().fold(f64::INFINITY, f64::min)
    };
    let (mut on, mut off) = (f64::INFINITY, f64::INFINITY);
    for _ in 0..3 {
        on = on.min(best(true));
        off = off.min(best(false));
    }
    let overhead = on / off - 1.0;
    verdict(
        overhead <= 0.10,
        format!(
            "{smallest} iteration(s): {:.1} us validated vs {:.1} us unvalidated, overhead {:.1}% (limit 10%)",
            on * 1e6,
            off * 1e6,
            overhead * 100.0
        ),
    )
}

fn scaling_self_consistency() -> Outcome {
    let (m, k, t1) = (40.0, 1000.0, 2.0);
    let cores = [1usize, 2, 4, 8, 16, 32, 64, 128];
    let metg: BTreeMap<usize, f64> = cores.iter().map(|&n| (n, m)).collect();
    let tasks: BTreeMap<usize, f64> = cores.iter().map(|&n| (n, k)).collect();
    let p = metg::predict_strong_scaling(&metg, &tasks, t1, None);
    let limit = m * 1e-6 * k;
    let flat = p.points.iter().all(|pt| (pt.limit_s - limit).abs() <= 1e-12 * limit);
    let Some(x) = p.ideal_limit else {
        return Outcome::Fail("no ideal/limit intersection".into());
    };
    let n_star = t1 / limit;
    let exact = (x.cores - n_star).abs() <= 1e-9 * n_star
        && (x.time_s - limit).abs() <= 1e-9 * limit
        && (t1 / x.cores - limit).abs() <= 1e-9 * limit;
    verdict(
        flat && exact,
        format!("limit {limit} s flat: {flat}; intersection n = {:.6} (want {n_star}), t = {:.6e} s", x.cores, x.time_s),
    )
}

fn main() -> ExitCode {
    let cores = available_cores();
    println!("acceptance: {cores} core(s) available");
    let mut r = Report { hard_failures: 0 };
    r.check("dependence oracle equivalence", dependence_oracle);
    r.check("cross-executor correctness", cross_executor);
    r.check("compute kernel oracle", compute_oracle);
    r.check("METG extraction", metg_unit);

    let measured = Instant::now();
    let ladder = measured_ladder();
    let workers = cores.clamp(1, 4);
    let curves: Vec<(ExecutorKind, EfficiencyCurve)> = ExecutorKind::ALL
        .into_iter()
        .map(|kind| (kind, stencil_sweep(&ExecutorConfig::new(kind, workers), &ladder)))
        .collect();
    let serial = &curves[0].1;
    let dataflow_one = stencil_sweep(&ExecutorConfig::new(ExecutorKind::Dataflow, 1), &ladder);
    r.check("METG threshold monotonicity", || threshold_monotonicity(&curves));
    r.check("executor overhead ordering", || {
        let within = measured.elapsed() < Duration::from_secs(600);
        match overhead_ordering(&[(ExecutorKind::Dataflow, dataflow_one)], serial) {
            Outcome::Pass(d) if !within => Outcome::Fail(format!("{d}; over 10 min")),
            o => o,
        }
    });
    r.check("imbalance bound", || imbalance_bound(cores));
    r.check("multi-graph mitigation", || multi_graph(cores));
    r.check("validation overhead", || validation_overhead(&ladder));
    r.check("scaling predictor self-consistency", scaling_self_consistency);

    if r.hard_failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{} criterion/criteria failed", r.hard_failures);
        ExitCode::FAILURE
    }
}
