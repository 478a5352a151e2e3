//! Result emission: CSV rows or one JSON document, to stdout or `--out`.
//!
//! JSON schema: `{"config": {...}, "records": [...], "metg": {...}?,
//! "study": {...}?}`. In CSV mode a METG result is appended as a
//! `# metg {json}` comment line, which CSV readers configured with `#`
//! comments skip.

use std::fmt::Display;
use std::fs::File;
use std::io::{self, BufWriter, Write};

use serde::{Serialize, Serializer};
use serde_json::{json, Value};

use taskbench::metg::MetgResult;
use taskbench::record::{write_csv, SweepRecord};

use crate::{BenchArgs, Failure, Format};

pub fn display<T: Display, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

pub struct Emitter {
    out: Box<dyn Write>,
}

impl Emitter {
    pub fn new(args: &BenchArgs) -> Result<Self, Failure> {
        let out: Box<dyn Write> = match &args.out {
            Some(path) => Box::new(BufWriter::new(File::create(path)?)),
            None => Box::new(BufWriter::new(io::stdout().lock())),
        };
        Ok(Self { out })
    }

    pub fn emit(
        mut self,
        args: &BenchArgs,
        records: &[SweepRecord],
        metg: Option<&MetgResult>,
        study: Option<Value>,
    ) -> Result<(), Failure> {
        match args.format {
            Format::Csv => {
                write_csv(&mut self.out, records).map_err(anyhow::Error::from)?;
                if let Some(m) = metg {
                    writeln!(self.out, "# metg {}", serde_json::to_string(m).map_err(anyhow::Error::from)?)?;
                }
                if let Some(s) = study {
                    writeln!(self.out, "# study {}", serde_json::to_string(&s).map_err(anyhow::Error::from)?)?;
                }
            }
            Format::Json => {
                let mut doc = json!({
                    "config": config_json(args),
                    "records": records,
                });
                if let Some(m) = metg {
                    doc["metg"] = serde_json::to_value(m).map_err(anyhow::Error::from)?;
                }
                if let Some(s) = study {
                    doc["study"] = s;
                }
                serde_json::to_writer_pretty(&mut self.out, &doc).map_err(anyhow::Error::from)?;
                writeln!(self.out)?;
            }
        }
        self.out.flush()?;
        Ok(())
    }
}

#[derive(Serialize)]
struct ConfigJson<'a> {
    #[serde(flatten)]
    args: &'a BenchArgs,
    effective_workers: usize,
    effective_width: usize,
}

fn config_json(args: &BenchArgs) -> Value {
    serde_json::to_value(ConfigJson {
        args,
        effective_workers: args.workers(),
        effective_width: args.width(),
    })
    .unwrap_or(Value::Null)
}
