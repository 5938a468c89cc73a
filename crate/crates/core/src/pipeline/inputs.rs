//! Readers for the pipeline's raw input files.
//!
//! * git pairs: `{"id"?, "before", "after", "message"?, "language"?}`
//! * submissions: `{"problem_id", "user_id", "attempts": [{"code", "verdict"}], "language"?, "problem"?}`
//! * seeds: `{"id"?, "code", "language"?, "persona"?}`
//! * records: serialized [`ProcessRecord`]s
//!
//! Rows that parse but cannot form a record become [`Discard`]s.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::Deserialize;

use super::{
    ingest_git, ingest_submissions, Discard, Persona, PipelineError, PipelineInput, ProcessRecord,
    Result, Submission, SubmissionOutcome,
};
use crate::edit_codec::TextDocument;

const DEFAULT_LANGUAGE: &str = "python";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputKind {
    Git,
    Submissions,
    Seeds,
    Records,
}

impl FromStr for InputKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "git" => Ok(InputKind::Git),
            "submissions" | "submit" => Ok(InputKind::Submissions),
            "seeds" | "seed" => Ok(InputKind::Seeds),
            "records" | "record" => Ok(InputKind::Records),
            other => Err(format!(
                "unknown input kind `{other}` (git, submissions, seeds, records)"
            )),
        }
    }
}

impl fmt::Display for InputKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InputKind::Git => "git",
            InputKind::Submissions => "submissions",
            InputKind::Seeds => "seeds",
            InputKind::Records => "records",
        })
    }
}

fn default_language() -> String {
    DEFAULT_LANGUAGE.into()
}

#[derive(Deserialize)]
struct GitRow {
    id: Option<String>,
    before: String,
    after: String,
    #[serde(default)]
    message: String,
    #[serde(default = "default_language")]
    language: String,
}

#[derive(Deserialize)]
struct SubmissionRow {
    problem_id: String,
    user_id: String,
    attempts: Vec<Submission>,
    #[serde(default = "default_language")]
    language: String,
    problem: Option<String>,
}

#[derive(Deserialize)]
struct SeedRow {
    id: Option<String>,
    code: String,
    #[serde(default = "default_language")]
    language: String,
    persona: Option<Persona>,
}

/// Inputs ready for the pipeline plus rows that could not become records.
#[derive(Debug, Default)]
pub struct LoadedInputs {
    pub inputs: Vec<PipelineInput>,
    pub rejected: Vec<Discard>,
}

fn rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let file = File::open(path).map_err(|source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| PipelineError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str(&line).map_err(|e| PipelineError::Schema {
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push((idx + 1, row));
    }
    Ok(out)
}

pub fn read_inputs(path: impl AsRef<Path>, kind: InputKind) -> Result<LoadedInputs> {
    let path = path.as_ref();
    let mut loaded = LoadedInputs::default();
    match kind {
        InputKind::Git => {
            for (line, row) in rows::<GitRow>(path)? {
                let id = row.id.unwrap_or_else(|| format!("git-{line}"));
                match ingest_git(
                    &id,
                    &TextDocument::new(&row.before),
                    &TextDocument::new(&row.after),
                    &row.message,
                    &row.language,
                ) {
                    Ok(record) => loaded.inputs.push(PipelineInput::Record(record)),
                    Err(e) => loaded.rejected.push(Discard::new(id, &e)),
                }
            }
        }
        InputKind::Submissions => {
            for (_, row) in rows::<SubmissionRow>(path)? {
                let id = format!("{}/{}", row.problem_id, row.user_id);
                match ingest_submissions(&id, &row.attempts, &row.language, row.problem.as_deref())
                {
                    SubmissionOutcome::Record(record) => {
                        loaded.inputs.push(PipelineInput::Record(record))
                    }
                    SubmissionOutcome::Rejected { reason } => loaded.rejected.push(Discard {
                        record_id: id,
                        reason: "REJECTED_SUBMISSIONS".into(),
                        detail: reason,
                    }),
                }
            }
        }
        InputKind::Seeds => {
            for (line, row) in rows::<SeedRow>(path)? {
                loaded.inputs.push(PipelineInput::Seed {
                    id: row.id.unwrap_or_else(|| format!("seed-{line}")),
                    code: TextDocument::new(&row.code),
                    language: row.language,
                    persona: row.persona,
                });
            }
        }
        InputKind::Records => {
            for (line, record) in rows::<ProcessRecord>(path)? {
                // Re-run the constructor so the record invariants hold.
                match ProcessRecord::new(
                    record.id.clone(),
                    record.source,
                    record.snapshots,
                    record.language,
                    record.metadata,
                ) {
                    Ok(checked) => loaded.inputs.push(PipelineInput::Record(checked)),
                    Err(e) => {
                        let id = if record.id.is_empty() {
                            format!("record-{line}")
                        } else {
                            record.id
                        };
                        loaded.rejected.push(Discard::new(id, &e));
                    }
                }
            }
        }
    }
    Ok(loaded)
}
