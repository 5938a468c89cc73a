use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde_json::Value;

use super::{PipelineError, Result, TrainingSample};

/// Version written into every sample line; readers reject anything else.
pub const SCHEMA_VERSION: u32 = 1;

fn io_err(path: &str, source: std::io::Error) -> PipelineError {
    PipelineError::Io {
        path: path.to_owned(),
        source,
    }
}

/// One compact JSON object per line.
pub fn emit_jsonl<W: Write>(samples: &[TrainingSample], mut out: W) -> Result<()> {
    for sample in samples {
        let line = serde_json::to_string(sample).expect("samples serialize");
        writeln!(out, "{line}").map_err(|e| io_err("<output>", e))?;
    }
    out.flush().map_err(|e| io_err("<output>", e))
}

pub fn write_jsonl(path: impl AsRef<Path>, samples: &[TrainingSample]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(&path.display().to_string(), e))?;
    emit_jsonl(samples, BufWriter::new(file))
}

/// Parses sample lines, skipping blank ones. Errors carry 1-based line numbers.
pub fn read_jsonl<R: Read>(input: R) -> Result<Vec<TrainingSample>> {
    let mut samples = Vec::new();
    for (idx, line) in BufReader::new(input).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| io_err("<input>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line).map_err(|e| PipelineError::Schema {
            line: line_no,
            message: e.to_string(),
        })?;
        let version = value.get("schema_version").and_then(Value::as_u64);
        match version {
            Some(v) if v == SCHEMA_VERSION as u64 => {}
            Some(v) => {
                return Err(PipelineError::SchemaVersion {
                    line: line_no,
                    found: v.min(u32::MAX as u64) as u32,
                    expected: SCHEMA_VERSION,
                })
            }
            None => {
                return Err(PipelineError::Schema {
                    line: line_no,
                    message: "missing schema_version".into(),
                })
            }
        }
        samples.push(
            serde_json::from_value(value).map_err(|e| PipelineError::Schema {
                line: line_no,
                message: e.to_string(),
            })?,
        );
    }
    Ok(samples)
}

pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Vec<TrainingSample>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(&path.display().to_string(), e))?;
    read_jsonl(file)
}
