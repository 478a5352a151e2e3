//! `taskbench` command-line driver.

mod output;
mod study;

use std::collections::BTreeMap;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use taskbench::executors::{available_cores, ExecError};
use taskbench::metg::{self, MetgError, MetgResult, SweepOptions};
use taskbench::record::SweepRecord;
use taskbench::{
    DependencePattern, ExecutorConfig, ExecutorKind, KernelKind, KernelSpec, PatternKind, RunRequest,
    TaskGraphSpec,
};

use crate::output::Emitter;

#[derive(Parser, Debug)]
#[command(name = "taskbench", version, about = "Task-graph runtime overhead benchmark (METG)")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Execute one configuration and print one record.
    Run(BenchArgs),
    /// Execute an iteration ladder and print the efficiency curve.
    Sweep(BenchArgs),
    /// Canned experiments.
    Study {
        #[arg(value_enum)]
        which: StudyKind,
        #[command(flatten)]
        args: BenchArgs,
    },
    /// Dependence oracles and the cross-executor validation matrix.
    Selftest {
        #[arg(long)]
        workers: Option<usize>,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum StudyKind {
    Radix,
    Imbalance,
    Graphs,
    Scaling,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct BenchArgs {
    #[arg(long, default_value = "serial", value_parser = parse_executor)]
    #[serde(serialize_with = "output::display")]
    pub executor: ExecutorKind,
    /// Worker threads (overridden by TASKBENCH_THREADS). Defaults to all cores.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long, default_value = "stencil", value_parser = parse_pattern)]
    #[serde(serialize_with = "output::display")]
    pub pattern: PatternKind,
    /// Dependencies per task for nearest/spread.
    #[arg(long, default_value_t = 3)]
    pub radix: usize,
    /// Edge probability for the random pattern.
    #[arg(long, default_value_t = DependencePattern::DEFAULT_RANDOM_FRACTION)]
    pub fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "compute", value_parser = parse_kernel)]
    #[serde(serialize_with = "output::display")]
    pub kernel: KernelKind,
    /// Kernel iterations per task.
    #[arg(long = "iter", default_value_t = 1 << 12)]
    pub iterations: u64,
    /// Bytes touched per iteration (memory kernel).
    #[arg(long, default_value_t = 4096)]
    pub span: usize,
    /// Working-set bytes (memory kernel).
    #[arg(long, default_value_t = 1 << 20)]
    pub scratch: usize,
    #[arg(long, default_value_t = 0.0)]
    pub imbalance: f64,
    /// Independent graphs executed concurrently.
    #[arg(long, default_value_t = 1)]
    pub graphs: usize,
    /// Tasks per timestep. Defaults to the worker count.
    #[arg(long)]
    pub width: Option<usize>,
    /// Timesteps.
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    #[arg(long, default_value_t = 16)]
    pub output_bytes: usize,
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub warmup: usize,
    /// Comma-separated, strictly decreasing iteration counts. Defaults to
    /// powers of two from an auto-calibrated top down to 1.
    #[arg(long, value_delimiter = ',')]
    pub ladder: Option<Vec<u64>>,
    /// Report METG at this efficiency (0 < x < 1).
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    #[arg(long = "out")]
    pub out: Option<std::path::PathBuf>,
    #[arg(long)]
    pub no_validate: bool,
    /// Dataflow: disable work stealing.
    #[arg(long)]
    pub no_steal: bool,
    /// Csp: messages buffered per edge, 0 for unbounded.
    #[arg(long, default_value_t = taskbench::executors::DEFAULT_CHANNEL_CAPACITY)]
    pub channel_capacity: usize,
}

fn parse_executor(s: &str) -> Result<ExecutorKind, String> {
    s.parse().map_err(|e: ExecError| e.to_string())
}

fn parse_pattern(s: &str) -> Result<PatternKind, String> {
    s.parse().map_err(|e: taskbench::SpecError| e.to_string())
}

fn parse_kernel(s: &str) -> Result<KernelKind, String> {
    s.parse().map_err(|e: taskbench::kernels::KernelError| e.to_string())
}

impl BenchArgs {
    pub fn workers(&self) -> usize {
        let env = std::env::var("TASKBENCH_THREADS").ok().and_then(|v| v.parse().ok());
        env.or(self.workers).unwrap_or_else(available_cores).max(1)
    }

    pub fn config(&self) -> ExecutorConfig {
        self.config_for(self.executor, self.workers())
    }

    pub fn config_for(&self, kind: ExecutorKind, workers: usize) -> ExecutorConfig {
        ExecutorConfig::new(kind, workers)
            .with_steal(!self.no_steal)
            .with_channel_capacity((self.channel_capacity > 0).then_some(self.channel_capacity))
    }

    pub fn width(&self) -> usize {
        self.width.unwrap_or_else(|| self.workers())
    }

    pub fn kernel_spec(&self) -> KernelSpec {
        let base = match self.kernel {
            KernelKind::Compute => KernelSpec::compute(self.iterations),
            KernelKind::Memory => KernelSpec::memory(self.iterations, self.span, self.scratch),
            KernelKind::Empty => KernelSpec::empty(),
        };
        base.with_imbalance(self.imbalance, self.seed)
    }

    pub fn pattern_spec(&self) -> DependencePattern {
        DependencePattern::from_parts(self.pattern, self.radix, self.fraction, self.seed)
    }

    /// All graphs of one request; graph `g` gets `graph_id = g`.
    pub fn graph_specs(&self) -> Vec<TaskGraphSpec> {
        (0..self.graphs.max(1))
            .map(|g| TaskGraphSpec {
                graph_id: g,
                width: self.width(),
                height: self.steps,
                pattern: self.pattern_spec(),
                kernel: self.kernel_spec(),
                output_bytes: self.output_bytes,
            })
            .collect()
    }

    pub fn request(&self) -> RunRequest {
        RunRequest {
            graphs: self.graph_specs(),
            validate: !self.no_validate,
            warmup_runs: self.warmup,
            timed_runs: self.reps.max(1),
            record_executions: false,
        }
    }

    pub fn sweep_options(&self) -> SweepOptions {
        SweepOptions {
            validate: !self.no_validate,
            warmup_runs: self.warmup,
            timed_runs: self.reps.max(1),
            peak_override: None,
        }
    }

    pub fn ladder(&self, template: &TaskGraphSpec) -> Vec<u64> {
        self.ladder.clone().unwrap_or_else(|| metg::default_ladder(template))
    }
}

/// Errors mapped onto the documented exit codes.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Validation(String),
    Other(anyhow::Error),
}

impl From<ExecError> for Failure {
    fn from(e: ExecError) -> Self {
        match e {
            ExecError::Validation(v) => Failure::Validation(v.to_string()),
            ExecError::InvalidGraph { .. } | ExecError::InvalidRequest(_) | ExecError::UnknownExecutor(_) => {
                Failure::Usage(e.to_string())
            }
            other => Failure::Other(other.into()),
        }
    }
}

impl From<MetgError> for Failure {
    fn from(e: MetgError) -> Self {
        match e {
            MetgError::Exec(inner) => inner.into(),
            MetgError::BadLadder | MetgError::BadThreshold(_) | MetgError::EmptyKernel => {
                Failure::Usage(e.to_string())
            }
            other => Failure::Other(other.into()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(e.into())
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(&args),
        Command::Sweep(args) => cmd_sweep(&args),
        Command::Study { which, args } => study::run(which, &args),
        Command::Selftest { workers } => cmd_selftest(workers),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Validation(msg)) => {
            eprintln!("validation failed: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn cmd_run(args: &BenchArgs) -> Result<ExitCode, Failure> {
    let config = args.config();
    let request = args.request();
    warn_oversubscribed(&config);
    let report = taskbench::execute(&config, &request)?;
    let run = metg::RunResult::from_report(&request, &report);
    let record = SweepRecord::new(&config, &request.graphs[0], &run, 1.0);
    Emitter::new(args)?.emit(args, &[record], None, None)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(args: &BenchArgs) -> Result<ExitCode, Failure> {
    let config = args.config();
    let templates = args.graph_specs();
    if let Some(th) = args.threshold {
        if !(th > 0.0 && th < 1.0) {
            return Err(Failure::Usage(format!("--threshold must lie strictly between 0 and 1, got {th}")));
        }
    }
    templates[0].validate().map_err(|e| Failure::Usage(e.to_string()))?;
    warn_oversubscribed(&config);
    let ladder = args.ladder(&templates[0]);
    let sweep = metg::sweep(&config, &templates, &ladder, &args.sweep_options())?;
    let records = sweep_records(&config, &templates[0], &sweep);
    let metg = args
        .threshold
        .map(|th| metg::compute_metg(&sweep.curve, th))
        .transpose()?;
    Emitter::new(args)?.emit(args, &records, metg.as_ref(), None)?;
    Ok(ExitCode::SUCCESS)
}

pub fn sweep_records(config: &ExecutorConfig, template: &TaskGraphSpec, sweep: &metg::Sweep) -> Vec<SweepRecord> {
    sweep
        .runs
        .iter()
        .map(|r| SweepRecord::new(config, template, r, r.perf / sweep.curve.peak_perf))
        .collect()
}

pub fn warn_oversubscribed(config: &ExecutorConfig) {
    let cores = available_cores();
    if config.workers > cores {
        eprintln!("warning: {} workers requested on {cores} available cores", config.workers);
    }
}

fn cmd_selftest(workers: Option<usize>) -> Result<ExitCode, Failure> {
    let workers = workers.unwrap_or_else(|| available_cores().clamp(2, 4));
    let oracles = taskbench::selftest::check_dependence_oracles();
    println!("{} dependence oracles: {oracles}", verdict(oracles.passed()));
    let matrix = taskbench::selftest::check_executor_matrix(workers);
    println!("{} executor validation matrix ({workers} workers): {matrix}", verdict(matrix.passed()));
    for f in oracles.failures.iter().chain(&matrix.failures) {
        println!("  {f}");
    }
    let ok = oracles.passed() && matrix.passed();
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

/// METG values keyed by a study parameter, for JSON output.
pub type MetgTable = BTreeMap<String, MetgResult>;
