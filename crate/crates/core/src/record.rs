//! Machine-readable result rows (one per measured configuration).

use std::io;

use serde::{Deserialize, Serialize};

use crate::executors::ExecutorConfig;
use crate::graph::TaskGraphSpec;
use crate::metg::RunResult;

/// Column order of the CSV output. Never reorder.
pub const CSV_HEADER: [&str; 21] = [
    "executor",
    "workers",
    "pattern",
    "radix",
    "kernel",
    "iterations",
    "span_bytes",
    "scratch_bytes",
    "imbalance",
    "graphs",
    "width",
    "height",
    "output_bytes",
    "rep_count",
    "mean_wall_s",
    "stddev_wall_s",
    "num_tasks",
    "attributed_work",
    "perf",
    "efficiency",
    "granularity_us",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub executor: String,
    pub workers: usize,
    pub pattern: String,
    /// Empty for patterns without a radix.
    pub radix: Option<usize>,
    pub kernel: String,
    pub iterations: u64,
    pub span_bytes: usize,
    pub scratch_bytes: usize,
    pub imbalance: f64,
    pub graphs: usize,
    pub width: usize,
    pub height: usize,
    pub output_bytes: usize,
    pub rep_count: usize,
    pub mean_wall_s: f64,
    pub stddev_wall_s: f64,
    pub num_tasks: u64,
    pub attributed_work: u64,
    pub perf: f64,
    pub efficiency: f64,
    pub granularity_us: f64,
}

impl SweepRecord {
    /// Describes one run of `template` (the first graph of the request).
    pub fn new(config: &ExecutorConfig, template: &TaskGraphSpec, run: &RunResult, efficiency: f64) -> Self {
        Self {
            executor: config.kind.name().to_string(),
            workers: run.num_cores,
            pattern: template.pattern.kind().name().to_string(),
            radix: template.pattern.radix(),
            kernel: template.kernel.kind.name().to_string(),
            iterations: run.iterations,
            span_bytes: template.kernel.span_bytes,
            scratch_bytes: template.kernel.scratch_bytes,
            imbalance: template.kernel.imbalance,
            graphs: run.graphs,
            width: run.width,
            height: run.height,
            output_bytes: template.output_bytes,
            rep_count: run.wall_time_s.len(),
            mean_wall_s: run.mean_wall_time_s,
            stddev_wall_s: run.stddev_wall_time_s,
            num_tasks: run.num_tasks,
            attributed_work: run.attributed_work,
            perf: run.perf,
            efficiency,
            granularity_us: run.task_granularity_us,
        }
    }
}

/// Writes the header row followed by `records`. The header is written even
/// when there are no records.
pub fn write_csv<W: io::Write>(out: W, records: &[SweepRecord]) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a CSV produced by [`write_csv`], checking the header first.
pub fn read_csv<R: io::Read>(input: R) -> Result<Vec<SweepRecord>, RecordError> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let header = r.headers()?.clone();
    if let Some((pos, name)) = CSV_HEADER
        .iter()
        .enumerate()
        .find(|&(k, name)| header.get(k) != Some(name))
    {
        return Err(RecordError::Schema {
            column: pos,
            expected: name.to_string(),
            got: header.get(pos).unwrap_or("").to_string(),
        });
    }
    if header.len() != CSV_HEADER.len() {
        return Err(RecordError::Schema {
            column: CSV_HEADER.len(),
            expected: "end of header".into(),
            got: header.get(CSV_HEADER.len()).unwrap_or("").to_string(),
        });
    }
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

#[derive(Debug, thiserror::Error)]
pub enum RecordError {
    #[error("column {column}: expected `{expected}`, got `{got}`")]
    Schema {
        column: usize,
        expected: String,
        got: String,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SweepRecord {
        SweepRecord {
            executor: "csp".into(),
            workers: 4,
            pattern: "nearest".into(),
            radix: Some(5),
            kernel: "compute".into(),
            iterations: 1 << 12,
            span_bytes: 0,
            scratch_bytes: 0,
            imbalance: 0.25,
            graphs: 4,
            width: 8,
            height: 1000,
            output_bytes: 16,
            rep_count: 5,
            mean_wall_s: 0.123_456_789_012_345_67,
            stddev_wall_s: 1.0e-7 / 3.0,
            num_tasks: 32_000,
            attributed_work: 16_777_216_000,
            perf: 1.359_e11 / 7.0,
            efficiency: 2.0 / 3.0,
            granularity_us: 15.432_098_765_432_1,
        }
    }

    #[test]
    fn header_always_written() {
        let mut buf = Vec::new();
        write_csv(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().trim_end(), CSV_HEADER.join(","));
    }

    #[test]
    fn round_trip_is_exact() {
        let mut no_radix = sample();
        no_radix.radix = None;
        no_radix.pattern = "stencil".into();
        let rows = vec![sample(), no_radix];
        let mut buf = Vec::new();
        write_csv(&mut buf, &rows).unwrap();
        let back = read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, rows);
        assert!(String::from_utf8(buf).unwrap().contains(",stencil,,compute,"));
    }

    #[test]
    fn schema_errors_name_the_column() {
        let bad = "executor,workers,pattern,radix,kernel,iters\n";
        match read_csv(bad.as_bytes()) {
            Err(RecordError::Schema { column: 5, expected, got }) => {
                assert_eq!(expected, "iterations");
                assert_eq!(got, "iters");
            }
            other => panic!("{other:?}"),
        }
    }
}
