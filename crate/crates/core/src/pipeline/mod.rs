//! Turns coding-process records into typed training conversations.
//!
//! A [`ProcessRecord`] is an ordered list of code snapshots ending in the
//! final snippet. For each record the pipeline optionally decomposes
//! multi-hunk steps, picks a current snapshot, picks one of the four
//! [`SampleType`]s, judges or instructs the remaining changes with an LLM, and
//! assembles a [`TrainingSample`].

mod assemble;
mod generate;
mod ingest;
pub mod inputs;
mod jsonl;
mod sampling;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conversation::{Conversation, ConversationError, Message};
use crate::edit_codec::{EditError, EditFormat, EditScript, TextDocument};
use crate::llm_client::LlmError;
use crate::prompts::PromptError;

pub use assemble::{
    assemble_sample, synthesize, Discard, MeanMax, PipelineConfig, PipelineInput, SynthOutput,
    SynthStats,
};
pub use generate::{parse_decisions, parse_marked_block, Generator};
pub use ingest::{ingest_git, ingest_submissions, Submission, SubmissionOutcome, Verdict};
pub use jsonl::{emit_jsonl, load_jsonl, read_jsonl, write_jsonl, SCHEMA_VERSION};
pub use sampling::{
    annotate_target_random, assign_type, decompose, derive_seed, pick_timepoint, rng_for,
    segment_changes, timepoint_weights, DEFAULT_TIMEPOINT_DECAY,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("snapshots are identical")]
    IdenticalSnapshots,
    #[error("a process record needs at least two distinct snapshots, got {0}")]
    TooFewSnapshots(usize),
    #[error("could not parse a coding history: {0}")]
    UnparseableHistory(String),
    #[error("judge returned {found} decisions for {expected} changes")]
    JudgeParse { expected: usize, found: usize },
    #[error("no `**instruction:**` block in the response")]
    InstructionParse,
    #[error("no `**chat:**` block in the response")]
    ChatParse,
    #[error("current code already equals the final snippet")]
    NoChanges,
    #[error("every change was judged unwanted")]
    AllSegmentsRejected,
    #[error("time index {index} is out of range for {len} snapshots")]
    BadTimeIndex { index: usize, len: usize },
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Edit(#[from] EditError),
    #[error(transparent)]
    Conversation(#[from] ConversationError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("line {line}: schema version {found} is not supported (expected {expected})")]
    SchemaVersion {
        line: usize,
        found: u32,
        expected: u32,
    },
}

impl PipelineError {
    /// Short machine-friendly tag for discard logs.
    pub fn kind(&self) -> &'static str {
        match self {
            PipelineError::IdenticalSnapshots => "IDENTICAL_SNAPSHOTS",
            PipelineError::TooFewSnapshots(_) => "TOO_FEW_SNAPSHOTS",
            PipelineError::UnparseableHistory(_) => "UNPARSEABLE_HISTORY",
            PipelineError::JudgeParse { .. } => "JUDGE_PARSE_ERROR",
            PipelineError::InstructionParse => "INSTRUCTION_PARSE_ERROR",
            PipelineError::ChatParse => "CHAT_PARSE_ERROR",
            PipelineError::NoChanges => "NO_CHANGES",
            PipelineError::AllSegmentsRejected => "ALL_SEGMENTS_REJECTED",
            PipelineError::BadTimeIndex { .. } => "BAD_TIME_INDEX",
            PipelineError::Llm(_) => "LLM_ERROR",
            PipelineError::Edit(_) => "EDIT_ERROR",
            PipelineError::Conversation(_) => "CONVERSATION_ERROR",
            PipelineError::Prompt(_) => "PROMPT_ERROR",
            PipelineError::Io { .. } => "IO_ERROR",
            PipelineError::Schema { .. } => "SCHEMA_ERROR",
            PipelineError::SchemaVersion { .. } => "SCHEMA_VERSION",
        }
    }
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    AiProgrammer,
    GitCommit,
    OnlineSubmit,
}

impl Source {
    /// Probability of splitting a multi-hunk step into single-hunk steps.
    pub fn decompose_probability(self) -> f64 {
        match self {
            Source::GitCommit => 0.9,
            Source::AiProgrammer | Source::OnlineSubmit => 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Persona {
    Novice,
    Ordinary,
    Expert,
}

impl Persona {
    pub const ALL: [Persona; 3] = [Persona::Novice, Persona::Ordinary, Persona::Expert];

    pub fn template(self) -> &'static str {
        match self {
            Persona::Novice => "persona_novice.system",
            Persona::Ordinary => "persona_ordinary.system",
            Persona::Expert => "persona_expert.system",
        }
    }
}

/// Ordered code snapshots; the last one is the final snippet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessRecord {
    pub id: String,
    pub source: Source,
    pub snapshots: Vec<TextDocument>,
    pub language: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<String>,
    /// Set when an LLM-generated history had to be forced onto the seed code.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub repaired: bool,
}

impl ProcessRecord {
    /// Builds a record, dropping consecutive duplicate snapshots.
    pub fn new(
        id: impl Into<String>,
        source: Source,
        snapshots: Vec<TextDocument>,
        language: impl Into<String>,
        metadata: Option<String>,
    ) -> Result<Self> {
        let mut deduped: Vec<TextDocument> = Vec::with_capacity(snapshots.len());
        for snap in snapshots {
            if deduped.last() != Some(&snap) {
                deduped.push(snap);
            }
        }
        if deduped.len() < 2 {
            return Err(PipelineError::TooFewSnapshots(deduped.len()));
        }
        Ok(Self {
            id: id.into(),
            source,
            snapshots: deduped,
            language: language.into(),
            metadata,
            repaired: false,
        })
    }

    pub fn final_snapshot(&self) -> &TextDocument {
        self.snapshots
            .last()
            .expect("records hold at least two snapshots")
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }
}

/// Which optional inputs accompany the current code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SampleType {
    C,
    HC,
    CU,
    HCU,
}

impl SampleType {
    pub const ALL: [SampleType; 4] = [
        SampleType::C,
        SampleType::HC,
        SampleType::CU,
        SampleType::HCU,
    ];

    pub fn has_history(self) -> bool {
        matches!(self, SampleType::HC | SampleType::HCU)
    }

    pub fn has_user(self) -> bool {
        matches!(self, SampleType::CU | SampleType::HCU)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SampleType::C => "C",
            SampleType::HC => "HC",
            SampleType::CU => "CU",
            SampleType::HCU => "HCU",
        }
    }
}

impl fmt::Display for SampleType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SampleType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_uppercase().replace([',', ' ', '_'], "").as_str() {
            "C" => Ok(SampleType::C),
            "HC" => Ok(SampleType::HC),
            "CU" => Ok(SampleType::CU),
            "HCU" => Ok(SampleType::HCU),
            other => Err(format!("unknown sample type `{other}`")),
        }
    }
}

/// A run of adjacent hunks of `diff(C, F)`, judged as a unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeSegment {
    pub hunks: EditScript,
    /// `None` until judged; unjudged segments count as kept.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kept: Option<bool>,
}

impl ChangeSegment {
    pub fn is_kept(&self) -> bool {
        self.kept.unwrap_or(true)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub record_id: String,
    /// Zero-based index of the current snapshot in the (decomposed) record.
    pub time_index: usize,
    pub global_seed: u64,
    /// Seed of the per-sample generator, derived from the three fields above.
    pub sample_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub schema_version: u32,
    pub sample_type: SampleType,
    pub format: EditFormat,
    /// The request: optional system, history, current and user messages.
    pub conversation: Conversation,
    /// The assistant message the model should learn to produce.
    pub target: Message,
    pub segments: Vec<ChangeSegment>,
    pub provenance: Provenance,
}

impl TrainingSample {
    /// The current code the target change applies to.
    pub fn current_code(&self) -> Option<TextDocument> {
        self.conversation
            .find(crate::conversation::Role::Current)
            .map(|m| TextDocument::new(&m.body))
    }

    /// Request plus target as one conversation.
    pub fn full_conversation(&self) -> Conversation {
        let mut conv = self.conversation.clone();
        conv.push(self.target.clone());
        conv
    }
}
