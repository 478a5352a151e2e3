//! Canned experiment drivers built from the same flags as `sweep`.

use std::collections::BTreeMap;
use std::process::ExitCode;

use serde_json::{json, Value};

use taskbench::metg::{self, DEFAULT_THRESHOLD};
use taskbench::record::SweepRecord;
use taskbench::{execute, DependencePattern, ExecutorKind, RunRequest, TaskGraphSpec};

use crate::output::Emitter;
use crate::{sweep_records, warn_oversubscribed, BenchArgs, Failure, StudyKind};

pub fn run(which: StudyKind, args: &BenchArgs) -> Result<ExitCode, Failure> {
    let threshold = args.threshold.unwrap_or(DEFAULT_THRESHOLD);
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Failure::Usage(format!("--threshold must lie strictly between 0 and 1, got {threshold}")));
    }
    let (records, study) = match which {
        StudyKind::Radix => radix(args, threshold)?,
        StudyKind::Imbalance => imbalance(args)?,
        StudyKind::Graphs => graphs(args, threshold)?,
        StudyKind::Scaling => scaling(args, threshold)?,
    };
    Emitter::new(args)?.emit(args, &records, None, Some(study))?;
    Ok(ExitCode::SUCCESS)
}

fn checked(args: &BenchArgs) -> Result<Vec<TaskGraphSpec>, Failure> {
    let graphs = args.graph_specs();
    graphs[0].validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(graphs)
}

/// METG of every executor for nearest-neighbour graphs with 0..=9
/// dependencies per task.
fn radix(args: &BenchArgs, threshold: f64) -> Result<(Vec<SweepRecord>, Value), Failure> {
    let mut records = Vec::new();
    let mut table = Vec::new();
    let mut ladder = None;
    for kind in ExecutorKind::ALL {
        let config = args.config_for(kind, args.workers());
        warn_oversubscribed(&config);
        for k in 0..=9 {
            let mut templates = checked(args)?;
            for g in &mut templates {
                g.pattern = DependencePattern::Nearest { radix: k };
            }
            let ladder = ladder.get_or_insert_with(|| args.ladder(&templates[0])).clone();
            let sweep = metg::sweep(&config, &templates, &ladder, &args.sweep_options())?;
            let m = metg::compute_metg(&sweep.curve, threshold)?;
            records.extend(sweep_records(&config, &templates[0], &sweep));
            table.push(json!({"executor": kind.name(), "radix": k, "metg": m}));
        }
    }
    Ok((records, json!({"kind": "radix", "threshold": threshold, "results": table})))
}

/// Efficiency of every executor at increasing imbalance, relative to the
/// same executor without imbalance.
fn imbalance(args: &BenchArgs) -> Result<(Vec<SweepRecord>, Value), Failure> {
    let levels = [0.0, 0.25, 0.5, 0.75, 1.0];
    let mut records = Vec::new();
    let mut table = Vec::new();
    for kind in ExecutorKind::ALL {
        let config = args.config_for(kind, args.workers());
        warn_oversubscribed(&config);
        let mut balanced_perf = None;
        for level in levels {
            let mut graphs = checked(args)?;
            for g in &mut graphs {
                g.kernel.imbalance = level;
            }
            let request = RunRequest { graphs, ..args.request() };
            let report = execute(&config, &request)?;
            let run = metg::RunResult::from_report(&request, &report);
            let base = *balanced_perf.get_or_insert(run.perf);
            let efficiency = run.perf / base;
            records.push(SweepRecord::new(&config, &request.graphs[0], &run, efficiency));
            table.push(json!({"executor": kind.name(), "workers": config.workers, "imbalance": level, "efficiency": efficiency}));
        }
    }
    let n = args.workers() as f64;
    Ok((
        records,
        json!({
            "kind": "imbalance",
            "forkjoin_full_imbalance_bound": (n + 1.0) / (2.0 * n),
            "results": table,
        }),
    ))
}

/// METG with 1, 2 and 4 concurrent graphs per executor.
fn graphs(args: &BenchArgs, threshold: f64) -> Result<(Vec<SweepRecord>, Value), Failure> {
    let mut records = Vec::new();
    let mut table = Vec::new();
    for kind in ExecutorKind::ALL {
        let config = args.config_for(kind, args.workers());
        warn_oversubscribed(&config);
        for count in [1, 2, 4] {
            let base = BenchArgs { graphs: count, ..args.clone() };
            let templates = checked(&base)?;
            let ladder = base.ladder(&templates[0]);
            let sweep = metg::sweep(&config, &templates, &ladder, &base.sweep_options())?;
            let m = metg::compute_metg(&sweep.curve, threshold)?;
            records.extend(sweep_records(&config, &templates[0], &sweep));
            table.push(json!({"executor": kind.name(), "graphs": count, "metg": m}));
        }
    }
    Ok((records, json!({"kind": "graphs", "threshold": threshold, "results": table})))
}

/// Strong scaling of a fixed problem (`--iter` iterations per task on one
/// core, split evenly as columns are added) against the METG limit.
fn scaling(args: &BenchArgs, threshold: f64) -> Result<(Vec<SweepRecord>, Value), Failure> {
    let max = args.workers();
    let counts: Vec<usize> = (0..).map(|e| 1usize << e).take_while(|&n| n <= max).collect();
    let steps_per_core = (args.steps * args.graphs.max(1)) as f64;
    let mut records = Vec::new();
    let mut metg_by_cores = BTreeMap::new();
    let mut tasks_per_core = BTreeMap::new();
    let mut actual = BTreeMap::new();
    let mut t1 = None;
    for &n in &counts {
        let config = args.config_for(args.executor, n);
        let point_args = BenchArgs {
            width: Some(n),
            iterations: (args.iterations / n as u64).max(1),
            ..args.clone()
        };
        let request = point_args.request();
        checked(&point_args)?;
        let report = execute(&config, &request)?;
        let run = metg::RunResult::from_report(&request, &report);
        t1.get_or_insert(run.mean_wall_time_s);
        actual.insert(n, run.mean_wall_time_s);
        records.push(SweepRecord::new(&config, &request.graphs[0], &run, 1.0));

        let templates = point_args.graph_specs();
        let ladder = point_args.ladder(&templates[0]);
        let sweep = metg::sweep(&config, &templates, &ladder, &point_args.sweep_options())?;
        let m = metg::compute_metg(&sweep.curve, threshold)?;
        records.extend(sweep_records(&config, &templates[0], &sweep));
        if let Some(v) = m.metg_us {
            metg_by_cores.insert(n, v);
            tasks_per_core.insert(n, steps_per_core);
        }
    }
    let prediction = metg::predict_strong_scaling(&metg_by_cores, &tasks_per_core, t1.unwrap_or(0.0), Some(&actual));
    Ok((
        records,
        json!({
            "kind": "scaling",
            "executor": args.executor.name(),
            "threshold": threshold,
            "t1_s": t1,
            "prediction": prediction,
        }),
    ))
}
