use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ChatBackend, ChatRequest, LlmError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CassetteMode {
    Record,
    Replay,
}

impl std::str::FromStr for CassetteMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "record" => Ok(CassetteMode::Record),
            "replay" => Ok(CassetteMode::Replay),
            other => Err(format!(
                "unknown cassette mode `{other}` (expected record or replay)"
            )),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    digest: String,
    response: String,
}

/// JSONL store of `{digest, response}` pairs wrapped around a backend.
///
/// In record mode every request goes to the inner backend and the answer is
/// appended to the file. In replay mode answers come from the file only and
/// unseen requests fail with [`LlmError::CassetteMiss`].
pub struct Cassette {
    mode: CassetteMode,
    path: PathBuf,
    inner: Option<Box<dyn ChatBackend>>,
    entries: Mutex<HashMap<String, String>>,
}

impl Cassette {
    pub fn record(path: impl Into<PathBuf>, inner: Box<dyn ChatBackend>) -> Result<Self> {
        let path = path.into();
        let entries = if path.exists() {
            load(&path)?
        } else {
            HashMap::new()
        };
        Ok(Self {
            mode: CassetteMode::Record,
            path,
            inner: Some(inner),
            entries: Mutex::new(entries),
        })
    }

    pub fn replay(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let entries = load(&path)?;
        Ok(Self {
            mode: CassetteMode::Replay,
            path,
            inner: None,
            entries: Mutex::new(entries),
        })
    }

    pub fn mode(&self) -> CassetteMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn load(path: &Path) -> Result<HashMap<String, String>> {
    let file = File::open(path).map_err(|e| LlmError::Io(format!("{}: {e}", path.display())))?;
    let mut entries = HashMap::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| LlmError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: Entry = serde_json::from_str(&line)
            .map_err(|e| LlmError::Io(format!("{} line {}: {e}", path.display(), idx + 1)))?;
        entries.insert(entry.digest, entry.response);
    }
    Ok(entries)
}

impl ChatBackend for Cassette {
    fn complete(&self, req: &ChatRequest) -> Result<String> {
        let digest = req.digest();
        match self.mode {
            CassetteMode::Replay => self
                .entries
                .lock()
                .unwrap()
                .get(&digest)
                .cloned()
                .ok_or(LlmError::CassetteMiss { digest }),
            CassetteMode::Record => {
                let inner = self.inner.as_ref().expect("record mode has a backend");
                let response = inner.complete(req)?;
                // The lock also serializes appends to the file.
                let mut entries = self.entries.lock().unwrap();
                if entries.get(&digest) != Some(&response) {
                    let line = serde_json::to_string(&Entry {
                        digest: digest.clone(),
                        response: response.clone(),
                    })
                    .expect("entry serializes");
                    let mut file = OpenOptions::new()
                        .create(true)
                        .append(true)
                        .open(&self.path)
                        .map_err(|e| LlmError::Io(format!("{}: {e}", self.path.display())))?;
                    writeln!(file, "{line}").map_err(|e| LlmError::Io(e.to_string()))?;
                    entries.insert(digest, response.clone());
                }
                Ok(response)
            }
        }
    }
}
