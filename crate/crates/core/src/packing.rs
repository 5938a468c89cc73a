//! First-fit-decreasing packing of samples into fixed-capacity sequences.

use std::io::Write;
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conversation::{render_template, ConversationError};
use crate::pipeline::TrainingSample;

#[derive(Debug, Error)]
pub enum PackingError {
    #[error("items longer than the capacity {capacity}: {}", ids.join(", "))]
    OversizeItem { capacity: usize, ids: Vec<String> },
    #[error("capacity must be positive")]
    ZeroCapacity,
    #[error("length counter failed: {0}")]
    Counter(String),
    #[error(transparent)]
    Render(#[from] ConversationError),
}

pub type Result<T, E = PackingError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SizedItem {
    pub id: String,
    pub length: usize,
}

impl SizedItem {
    pub fn new(id: impl Into<String>, length: usize) -> Self {
        Self {
            id: id.into(),
            length,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bin {
    pub capacity: usize,
    pub items: Vec<SizedItem>,
}

impl Bin {
    pub fn used(&self) -> usize {
        self.items.iter().map(|i| i.length).sum()
    }

    pub fn free(&self) -> usize {
        self.capacity - self.used()
    }
}

/// Sorts by length descending (ties by id) and drops each item into the
/// first bin with room, opening a new bin when none fits.
pub fn pack_ffd(items: &[SizedItem], capacity: usize) -> Result<Vec<Bin>> {
    if capacity == 0 {
        return Err(PackingError::ZeroCapacity);
    }
    let oversize: Vec<String> = items
        .iter()
        .filter(|i| i.length > capacity)
        .map(|i| i.id.clone())
        .collect();
    if !oversize.is_empty() {
        return Err(PackingError::OversizeItem {
            capacity,
            ids: oversize,
        });
    }
    let mut sorted: Vec<&SizedItem> = items.iter().collect();
    sorted.sort_by(|a, b| b.length.cmp(&a.length).then_with(|| a.id.cmp(&b.id)));

    let mut bins: Vec<Bin> = Vec::new();
    let mut free: Vec<usize> = Vec::new();
    for item in sorted {
        match free.iter().position(|&f| f >= item.length) {
            Some(i) => {
                free[i] -= item.length;
                bins[i].items.push(item.clone());
            }
            None => {
                free.push(capacity - item.length);
                bins.push(Bin {
                    capacity,
                    items: vec![item.clone()],
                });
            }
        }
    }
    Ok(bins)
}

/// A text → length function used to size samples.
pub trait LengthCounter: Send + Sync {
    fn count(&self, text: &str) -> Result<usize>;
}

/// Whitespace-separated tokens.
#[derive(Debug, Default, Clone, Copy)]
pub struct WhitespaceCounter;

impl LengthCounter for WhitespaceCounter {
    fn count(&self, text: &str) -> Result<usize> {
        Ok(text.split_whitespace().count())
    }
}

/// UTF-8 bytes.
#[derive(Debug, Default, Clone, Copy)]
pub struct ByteCounter;

impl LengthCounter for ByteCounter {
    fn count(&self, text: &str) -> Result<usize> {
        Ok(text.len())
    }
}

/// Runs a program with the text on stdin and reads one integer from stdout,
/// for plugging in a real tokenizer.
#[derive(Debug, Clone)]
pub struct CommandCounter {
    program: String,
    args: Vec<String>,
}

impl CommandCounter {
    pub fn new(program: impl Into<String>, args: Vec<String>) -> Self {
        Self {
            program: program.into(),
            args,
        }
    }

    /// Splits a command line on whitespace.
    pub fn parse(command: &str) -> Result<Self> {
        let mut parts = command.split_whitespace().map(str::to_owned);
        let program = parts
            .next()
            .ok_or_else(|| PackingError::Counter("empty counter command".into()))?;
        Ok(Self::new(program, parts.collect()))
    }
}

impl LengthCounter for CommandCounter {
    fn count(&self, text: &str) -> Result<usize> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| PackingError::Counter(format!("{}: {e}", self.program)))?;
        // Write on a separate thread so a child that streams output early cannot deadlock us.
        let mut stdin = child.stdin.take().expect("stdin is piped");
        let input = text.to_owned();
        let writer = std::thread::spawn(move || stdin.write_all(input.as_bytes()));
        let output = child
            .wait_with_output()
            .map_err(|e| PackingError::Counter(format!("{}: {e}", self.program)))?;
        writer
            .join()
            .expect("writer thread does not panic")
            .map_err(|e| PackingError::Counter(format!("writing to {}: {e}", self.program)))?;
        if !output.status.success() {
            return Err(PackingError::Counter(format!(
                "{} exited with {}",
                self.program, output.status
            )));
        }
        let stdout = String::from_utf8_lossy(&output.stdout);
        stdout.trim().parse().map_err(|_| {
            PackingError::Counter(format!(
                "{} printed `{}`, not a count",
                self.program,
                stdout.trim()
            ))
        })
    }
}

/// Size of the fully rendered sample (request plus target).
pub fn measure(sample: &TrainingSample, counter: &dyn LengthCounter) -> Result<SizedItem> {
    let text = render_template(&sample.full_conversation(), sample.format)?;
    Ok(SizedItem {
        id: sample_id(sample),
        length: counter.count(&text)?,
    })
}

/// `record_id#time_index`, unique within one synthesis run.
pub fn sample_id(sample: &TrainingSample) -> String {
    format!(
        "{}#{}",
        sample.provenance.record_id, sample.provenance.time_index
    )
}
