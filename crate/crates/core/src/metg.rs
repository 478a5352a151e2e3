//! Efficiency-vs-granularity measurement.
//!
//! A sweep runs the same graph shape with shrinking task sizes, keeping
//! width, height and workers fixed. Each run yields a performance figure
//! (work per second) and an average task granularity
//! (`wall time × cores / tasks`). Efficiency is performance relative to
//! the best run of the sweep, and METG(x) is the granularity at which the
//! efficiency curve crosses `x`.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::executors::{self, ExecError, ExecutionReport, ExecutorConfig, RunRequest};
use crate::graph::TaskGraphSpec;
use crate::kernels::{self, KernelKind};

pub const DEFAULT_THRESHOLD: f64 = 0.5;
/// The auto-calibrated ladder starts at the first power of two whose
/// serial task time reaches this many seconds.
pub const CALIBRATION_TARGET_S: f64 = 5e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetgError {
    #[error("efficiency undefined for empty tasks")]
    EmptyKernel,
    #[error("iteration ladder must be non-empty and strictly decreasing")]
    BadLadder,
    #[error("threshold must lie strictly between 0 and 1, got {0}")]
    BadThreshold(f64),
    #[error("curve has no points")]
    EmptyCurve,
    #[error("curve points disagree on shape: {0}")]
    MixedShape(String),
    #[error(transparent)]
    Exec(#[from] ExecError),
}

/// One configuration's timing and derived metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub iterations: u64,
    pub width: usize,
    pub height: usize,
    pub graphs: usize,
    pub wall_time_s: Vec<f64>,
    pub mean_wall_time_s: f64,
    pub stddev_wall_time_s: f64,
    pub num_tasks: u64,
    pub num_cores: usize,
    pub attributed_work: u64,
    /// Work per second.
    pub perf: f64,
    pub task_granularity_us: f64,
}

impl RunResult {
    pub fn from_report(request: &RunRequest, report: &ExecutionReport) -> Self {
        let times = &report.wall_times_s;
        let n = times.len() as f64;
        let mean = times.iter().sum::<f64>() / n;
        let var = if times.len() > 1 {
            times.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let first = &request.graphs[0];
        let num_tasks = report.tasks_executed;
        Self {
            iterations: first.kernel.iterations,
            width: first.width,
            height: first.height,
            graphs: request.graphs.len(),
            wall_time_s: times.clone(),
            mean_wall_time_s: mean,
            stddev_wall_time_s: var.sqrt(),
            num_tasks,
            num_cores: report.workers,
            attributed_work: report.attributed_work,
            perf: report.attributed_work as f64 / mean,
            task_granularity_us: granularity_us(mean, report.workers, num_tasks),
        }
    }
}

/// Average task granularity in microseconds: `wall × cores / tasks`.
pub fn granularity_us(wall_time_s: f64, cores: usize, tasks: u64) -> f64 {
    wall_time_s * cores as f64 / tasks as f64 * 1e6
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub granularity_us: f64,
    pub efficiency: f64,
}

/// Efficiency curve, sorted by granularity descending.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyCurve {
    pub points: Vec<CurvePoint>,
    pub peak_perf: f64,
}

impl EfficiencyCurve {
    /// Builds the curve from measured runs. `peak_override` replaces the
    /// sweep's own best performance (e.g. a hardware peak), in which case
    /// efficiencies may not reach 1.
    pub fn from_runs(runs: &[RunResult], peak_override: Option<f64>) -> Result<Self, MetgError> {
        let first = runs.first().ok_or(MetgError::EmptyCurve)?;
        for r in runs {
            if (r.width, r.height, r.num_cores, r.graphs) != (first.width, first.height, first.num_cores, first.graphs) {
                return Err(MetgError::MixedShape(format!(
                    "{}x{} on {} cores vs {}x{} on {} cores",
                    r.width, r.height, r.num_cores, first.width, first.height, first.num_cores
                )));
            }
        }
        let peak = peak_override.unwrap_or_else(|| runs.iter().map(|r| r.perf).fold(f64::MIN, f64::max));
        let points = runs
            .iter()
            .map(|r| CurvePoint {
                granularity_us: r.task_granularity_us,
                efficiency: r.perf / peak,
            })
            .collect();
        Ok(Self::from_points(points, peak))
    }

    pub fn from_points(mut points: Vec<CurvePoint>, peak_perf: f64) -> Self {
        points.sort_by(|a, b| b.granularity_us.total_cmp(&a.granularity_us));
        Self { points, peak_perf }
    }

    /// Removes noise-induced non-monotonicity: each point's efficiency
    /// becomes the best efficiency seen at that granularity or below.
    pub fn monotonized(&self) -> Self {
        let mut points = self.points.clone();
        let mut best = f64::NEG_INFINITY;
        for p in points.iter_mut().rev() {
            best = best.max(p.efficiency);
            p.efficiency = best;
        }
        Self {
            points,
            peak_perf: self.peak_perf,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetgStatus {
    Ok,
    ThresholdUnreachable,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub hi: CurvePoint,
    /// `None` when no measured point falls below the threshold.
    pub lo: Option<CurvePoint>,
    pub censored: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetgResult {
    pub threshold: f64,
    pub metg_us: Option<f64>,
    pub bracket: Option<Bracket>,
    pub status: MetgStatus,
}

/// Smallest granularity at which the (monotonized) curve still reaches
/// `threshold`, interpolating linearly in `(log g, efficiency)`.
pub fn compute_metg(curve: &EfficiencyCurve, threshold: f64) -> Result<MetgResult, MetgError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(MetgError::BadThreshold(threshold));
    }
    if curve.points.is_empty() {
        return Err(MetgError::EmptyCurve);
    }
    let mono = curve.monotonized();
    let pts = &mono.points;
    if pts[0].efficiency < threshold {
        return Ok(MetgResult {
            threshold,
            metg_us: None,
            bracket: None,
            status: MetgStatus::ThresholdUnreachable,
        });
    }
    for pair in pts.windows(2) {
        let (hi, lo) = (pair[0], pair[1]);
        if hi.efficiency >= threshold && lo.efficiency < threshold {
            let frac = (threshold - lo.efficiency) / (hi.efficiency - lo.efficiency);
            let log_g = lo.granularity_us.ln() + frac * (hi.granularity_us.ln() - lo.granularity_us.ln());
            return Ok(MetgResult {
                threshold,
                metg_us: Some(log_g.exp()),
                bracket: Some(Bracket {
                    hi,
                    lo: Some(lo),
                    censored: false,
                }),
                status: MetgStatus::Ok,
            });
        }
    }
    // Every point reaches the threshold; the true METG is at or below the
    // smallest measured granularity.
    let last = *pts.last().expect("non-empty");
    Ok(MetgResult {
        threshold,
        metg_us: Some(last.granularity_us),
        bracket: Some(Bracket {
            hi: last,
            lo: None,
            censored: true,
        }),
        status: MetgStatus::Ok,
    })
}

/// Options shared by every point of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepOptions {
    pub validate: bool,
    pub warmup_runs: usize,
    pub timed_runs: usize,
    pub peak_override: Option<f64>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            validate: true,
            warmup_runs: 1,
            timed_runs: 5,
            peak_override: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub runs: Vec<RunResult>,
    pub curve: EfficiencyCurve,
}

/// Runs `templates` (all graphs of one request) once per ladder entry,
/// replacing only the kernel iteration count.
pub fn sweep(
    config: &ExecutorConfig,
    templates: &[TaskGraphSpec],
    ladder: &[u64],
    options: &SweepOptions,
) -> Result<Sweep, MetgError> {
    if templates.iter().any(|g| g.kernel.kind == KernelKind::Empty) {
        return Err(MetgError::EmptyKernel);
    }
    if ladder.is_empty() || ladder.windows(2).any(|w| w[0] <= w[1]) {
        return Err(MetgError::BadLadder);
    }
    let mut runs = Vec::with_capacity(ladder.len());
    for &iterations in ladder {
        let graphs = templates
            .iter()
            .map(|g| {
                let mut g = g.clone();
                g.kernel.iterations = iterations;
                g
            })
            .collect();
        let request = RunRequest {
            graphs,
            validate: options.validate,
            warmup_runs: options.warmup_runs,
            timed_runs: options.timed_runs,
            record_executions: false,
        };
        let report = executors::execute(config, &request)?;
        runs.push(RunResult::from_report(&request, &report));
    }
    let curve = EfficiencyCurve::from_runs(&runs, options.peak_override)?;
    Ok(Sweep { runs, curve })
}

/// Powers of two from `top` down to 1.
pub fn power_ladder(top: u64) -> Vec<u64> {
    let top = top.max(1);
    let exp = 63 - top.leading_zeros();
    (0..=exp).rev().map(|e| 1u64 << e).collect()
}

/// Finds the first power-of-two iteration count whose single-task time
/// on this thread reaches `target_s`.
pub fn calibrate_top(template: &TaskGraphSpec, target_s: f64) -> u64 {
    let kernel = template.kernel;
    let mut lanes = kernels::compute_buffer();
    let mut scratch = vec![0u8; kernel.scratch_bytes];
    let mut iterations = 1u64;
    loop {
        let start = Instant::now();
        match kernel.kind {
            KernelKind::Memory => {
                kernels::memory_kernel(&kernel, iterations, &mut scratch, 0).expect("validated kernel");
            }
            _ => kernels::compute_kernel(iterations, &mut lanes),
        }
        std::hint::black_box(&lanes);
        if start.elapsed().as_secs_f64() >= target_s || iterations >= 1 << 40 {
            return iterations;
        }
        iterations *= 2;
    }
}

/// Default ladder: powers of two from the calibrated top down to 1.
pub fn default_ladder(template: &TaskGraphSpec) -> Vec<u64> {
    power_ladder(calibrate_top(template, CALIBRATION_TARGET_S))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub cores: usize,
    pub limit_s: f64,
    pub ideal_s: f64,
    pub actual_s: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intersection {
    pub cores: f64,
    pub time_s: f64,
    /// True when the crossing lies outside the measured core counts and was
    /// extrapolated from the nearest segment.
    pub extrapolated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingPrediction {
    pub points: Vec<ScalingPoint>,
    pub ideal_limit: Option<Intersection>,
    pub actual_limit: Option<Intersection>,
    /// `(cores, time)` ratios between the two intersections, each ≥ 1.
    pub separation: Option<(f64, f64)>,
}

/// Efficiency-limited strong-scaling prediction.
///
/// `limit(n) = metg(n) × tasks_per_core(n)` is the shortest time to
/// solution that keeps the target efficiency on `n` cores; `ideal(n) =
/// t1 / n` is perfect scaling from the one-core time.
pub fn predict_strong_scaling(
    metg_us_by_cores: &BTreeMap<usize, f64>,
    tasks_per_core: &BTreeMap<usize, f64>,
    t1_s: f64,
    actual_s_by_cores: Option<&BTreeMap<usize, f64>>,
) -> ScalingPrediction {
    let points: Vec<ScalingPoint> = metg_us_by_cores
        .iter()
        .filter_map(|(&n, &metg)| {
            let k = *tasks_per_core.get(&n)?;
            Some(ScalingPoint {
                cores: n,
                limit_s: metg * 1e-6 * k,
                ideal_s: t1_s / n as f64,
                actual_s: actual_s_by_cores.and_then(|a| a.get(&n).copied()),
            })
        })
        .collect();
    let ideal_limit = intersect(&points, |p| Some(p.ideal_s));
    let actual_limit = if actual_s_by_cores.is_some() {
        intersect(&points, |p| p.actual_s)
    } else {
        None
    };
    let separation = match (ideal_limit, actual_limit) {
        (Some(a), Some(b)) => Some((ratio(a.cores, b.cores), ratio(a.time_s, b.time_s))),
        _ => None,
    };
    ScalingPrediction {
        points,
        ideal_limit,
        actual_limit,
        separation,
    }
}

fn ratio(a: f64, b: f64) -> f64 {
    if a >= b {
        a / b
    } else {
        b / a
    }
}

/// Crossing of `curve` with the limit curve, linear in log-log space.
fn intersect(points: &[ScalingPoint], curve: impl Fn(&ScalingPoint) -> Option<f64>) -> Option<Intersection> {
    let samples: Vec<(f64, f64, f64)> = points
        .iter()
        .filter_map(|p| Some(((p.cores as f64).ln(), curve(p)?.ln(), p.limit_s.ln())))
        .collect();
    if samples.len() < 2 {
        return None;
    }
    let solve = |a: (f64, f64, f64), b: (f64, f64, f64), extrapolated: bool| {
        // difference d(x) = curve(x) - limit(x), linear between a and b
        let (da, db) = (a.1 - a.2, b.1 - b.2);
        if da == db {
            return None;
        }
        let s = da / (da - db);
        let x = a.0 + s * (b.0 - a.0);
        let y = a.2 + s * (b.2 - a.2);
        Some(Intersection {
            cores: x.exp(),
            time_s: y.exp(),
            extrapolated,
        })
    };
    for w in samples.windows(2) {
        let (da, db) = (w[0].1 - w[0].2, w[1].1 - w[1].2);
        if da == 0.0 {
            return solve(w[0], w[1], false).or(Some(Intersection {
                cores: w[0].0.exp(),
                time_s: w[0].2.exp(),
                extrapolated: false,
            }));
        }
        if (da > 0.0) != (db > 0.0) || db == 0.0 {
            return solve(w[0], w[1], false);
        }
    }
    let n = samples.len();
    solve(samples[n - 2], samples[n - 1], true).filter(|i| i.cores.is_finite() && i.cores > 0.0)
}
