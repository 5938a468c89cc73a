//! Line-based code changes and their four serialized forms.
//!
//! * **WF**: the whole new file.
//! * **UD**: a unified diff with three lines of context.
//! * **LC**: `<a>,<b> c` entries against the line-numbered original.
//! * **SR**: `SEARCH`/`REPLACE` blocks whose search side is unique in the original.
//!
//! Every format parses back into an [`EditScript`] by reconstructing the new
//! document and diffing it against the old one, so
//! `parse_edit(render_edit(diff(o, n), o, n, f), o) == diff(o, n)`.

mod diff;
mod document;
mod location;
mod search_replace;
mod unified;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use diff::diff;
pub use document::{number_lines, strip_line_numbers, TextDocument};
pub use location::{LC_HEADER_PATTERN, LC_PREPEND};
pub use search_replace::{SR_DIVIDER, SR_REPLACE_FENCE, SR_SEARCH_FENCE};
pub use unified::{UD_CONTEXT_LINES, UD_NEW_HEADER, UD_OLD_HEADER};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EditError {
    #[error("hunk {hunk} does not match the document at line {line}")]
    ContextMismatch { hunk: usize, line: usize },
    #[error("{format} parse error at payload line {line}: {message}")]
    Parse {
        format: EditFormat,
        line: usize,
        message: String,
    },
    #[error("search block {block} not found in the document")]
    SearchNotFound { block: usize },
    #[error("search block {block} matches {matches} locations")]
    SearchAmbiguous { block: usize, matches: usize },
    #[error("{format} payload cannot carry line {line:?}: it collides with a format marker")]
    MarkerCollision { format: EditFormat, line: String },
    #[error("invalid edit script: {0}")]
    InvalidScript(String),
}

pub type Result<T, E = EditError> = std::result::Result<T, E>;

/// One contiguous replacement of `old_lines` (starting at `old_start`) by `new_lines`.
///
/// `old_start` is 1-based. For a pure insertion (`old_lines` empty) the new
/// lines go in front of line `old_start`; `old_start == line_count + 1`
/// appends.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChangeHunk {
    pub old_start: usize,
    pub old_lines: Vec<String>,
    pub new_lines: Vec<String>,
}

impl ChangeHunk {
    pub fn new(old_start: usize, old_lines: Vec<String>, new_lines: Vec<String>) -> Self {
        Self {
            old_start,
            old_lines,
            new_lines,
        }
    }

    pub fn old_len(&self) -> usize {
        self.old_lines.len()
    }

    pub fn new_len(&self) -> usize {
        self.new_lines.len()
    }

    /// One past the last replaced line, 1-based.
    pub fn old_end(&self) -> usize {
        self.old_start + self.old_lines.len()
    }

    /// Zero-based half-open range of replaced lines.
    pub(crate) fn old_range(&self) -> std::ops::Range<usize> {
        self.old_start - 1..self.old_start - 1 + self.old_lines.len()
    }
}

/// Ordered, non-overlapping hunks. An empty script is the identity edit.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EditScript {
    pub hunks: Vec<ChangeHunk>,
}

impl EditScript {
    pub fn new(hunks: Vec<ChangeHunk>) -> Self {
        Self { hunks }
    }

    pub fn is_empty(&self) -> bool {
        self.hunks.is_empty()
    }

    pub fn len(&self) -> usize {
        self.hunks.len()
    }

    /// Number of deleted plus inserted lines.
    pub fn cost(&self) -> usize {
        self.hunks.iter().map(|h| h.old_len() + h.new_len()).sum()
    }

    /// Checks the structural invariants: 1-based starts, no empty hunks,
    /// ascending order without overlap.
    pub fn validate(&self) -> Result<()> {
        let mut prev_end = 1;
        for (idx, hunk) in self.hunks.iter().enumerate() {
            if hunk.old_start == 0 {
                return Err(EditError::InvalidScript(format!(
                    "hunk {} has old_start 0",
                    idx + 1
                )));
            }
            if hunk.old_lines.is_empty() && hunk.new_lines.is_empty() {
                return Err(EditError::InvalidScript(format!(
                    "hunk {} is empty",
                    idx + 1
                )));
            }
            if hunk.old_start < prev_end {
                return Err(EditError::InvalidScript(format!(
                    "hunk {} starts at line {} inside the previous hunk",
                    idx + 1,
                    hunk.old_start
                )));
            }
            prev_end = hunk.old_end();
        }
        Ok(())
    }

    /// Sub-script with only the hunks at `indices` (in script order).
    pub fn select(&self, indices: &[usize]) -> EditScript {
        let mut picked: Vec<usize> = indices.to_vec();
        picked.sort_unstable();
        picked.dedup();
        EditScript::new(picked.into_iter().map(|i| self.hunks[i].clone()).collect())
    }
}

/// The four serializations of a change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditFormat {
    Wf,
    Ud,
    Lc,
    Sr,
}

impl EditFormat {
    pub const ALL: [EditFormat; 4] = [
        EditFormat::Wf,
        EditFormat::Ud,
        EditFormat::Lc,
        EditFormat::Sr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EditFormat::Wf => "wf",
            EditFormat::Ud => "ud",
            EditFormat::Lc => "lc",
            EditFormat::Sr => "sr",
        }
    }
}

impl fmt::Display for EditFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.as_str().to_ascii_uppercase())
    }
}

impl FromStr for EditFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "wf" => Ok(EditFormat::Wf),
            "ud" => Ok(EditFormat::Ud),
            "lc" => Ok(EditFormat::Lc),
            "sr" => Ok(EditFormat::Sr),
            other => Err(format!(
                "unknown edit format `{other}` (expected wf, ud, lc or sr)"
            )),
        }
    }
}

/// A change serialized in one of the [`EditFormat`]s.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RenderedEdit {
    pub format: EditFormat,
    pub payload: String,
}

/// Serializes `script` (which must equal `diff(old, new)`) in `format`.
pub fn render_edit(
    script: &EditScript,
    old: &TextDocument,
    new: &TextDocument,
    format: EditFormat,
) -> Result<RenderedEdit> {
    script.validate()?;
    let payload = match format {
        EditFormat::Wf => new.content().to_owned(),
        EditFormat::Ud => unified::render(script, old),
        EditFormat::Lc => location::render(script, old)?,
        EditFormat::Sr => search_replace::render(script, old)?,
    };
    Ok(RenderedEdit { format, payload })
}

/// Convenience wrapper: diff and render in one go.
pub fn render_change(
    old: &TextDocument,
    new: &TextDocument,
    format: EditFormat,
) -> Result<RenderedEdit> {
    render_edit(&diff(old, new), old, new, format)
}

/// Applies a rendered edit to `old`, producing the edited document.
pub fn apply_rendered(rendered: &RenderedEdit, old: &TextDocument) -> Result<TextDocument> {
    match rendered.format {
        EditFormat::Wf => Ok(TextDocument::new(&rendered.payload)),
        EditFormat::Ud => unified::apply(&rendered.payload, old),
        EditFormat::Lc => location::apply(&rendered.payload, old),
        EditFormat::Sr => search_replace::apply(&rendered.payload, old),
    }
}

/// Recovers the canonical edit script a rendered edit describes against `old`.
pub fn parse_edit(rendered: &RenderedEdit, old: &TextDocument) -> Result<EditScript> {
    let new = apply_rendered(rendered, old)?;
    Ok(diff(old, &new))
}

/// Applies `script` to `old`. Every hunk's `old_lines` must match `old`.
pub fn apply_edit(script: &EditScript, old: &TextDocument) -> Result<TextDocument> {
    script.validate()?;
    let lines = old.lines();
    for (idx, hunk) in script.hunks.iter().enumerate() {
        let range = hunk.old_range();
        if range.end > lines.len() || (hunk.old_lines.is_empty() && range.start > lines.len()) {
            return Err(EditError::ContextMismatch {
                hunk: idx + 1,
                line: hunk.old_start,
            });
        }
        if let Some(offset) = hunk
            .old_lines
            .iter()
            .zip(&lines[range.clone()])
            .position(|(expected, actual)| expected != actual)
        {
            return Err(EditError::ContextMismatch {
                hunk: idx + 1,
                line: hunk.old_start + offset,
            });
        }
    }

    // Right-to-left so earlier coordinates stay valid.
    let mut out: Vec<&str> = lines.clone();
    for hunk in script.hunks.iter().rev() {
        out.splice(hunk.old_range(), hunk.new_lines.iter().map(String::as_str));
    }
    Ok(TextDocument::from_lines(out))
}
