use serde::{Deserialize, Serialize};

use super::{PipelineError, ProcessRecord, Result, Source};
use crate::edit_codec::TextDocument;

/// A commit turned into a two-snapshot record. Empty `before` models file creation.
pub fn ingest_git(
    id: impl Into<String>,
    before: &TextDocument,
    after: &TextDocument,
    message: &str,
    language: &str,
) -> Result<ProcessRecord> {
    if before == after {
        return Err(PipelineError::IdenticalSnapshots);
    }
    let metadata = (!message.trim().is_empty()).then(|| message.to_owned());
    ProcessRecord::new(
        id,
        Source::GitCommit,
        vec![before.clone(), after.clone()],
        language,
        metadata,
    )
}

/// Judge verdict of an online submission. Anything other than an accept is
/// kept verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum Verdict {
    Accepted,
    Other(String),
}

impl Verdict {
    pub fn is_accepted(&self) -> bool {
        matches!(self, Verdict::Accepted)
    }
}

impl From<String> for Verdict {
    fn from(s: String) -> Self {
        match s.trim().to_ascii_lowercase().as_str() {
            "ac" | "accepted" | "pass" | "ok" => Verdict::Accepted,
            _ => Verdict::Other(s),
        }
    }
}

impl From<&str> for Verdict {
    fn from(s: &str) -> Self {
        Verdict::from(s.to_owned())
    }
}

impl From<Verdict> for String {
    fn from(v: Verdict) -> Self {
        match v {
            Verdict::Accepted => "AC".into(),
            Verdict::Other(s) => s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Submission {
    pub code: String,
    pub verdict: Verdict,
}

impl Submission {
    pub fn new(code: impl Into<String>, verdict: impl Into<Verdict>) -> Self {
        Self {
            code: code.into(),
            verdict: verdict.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SubmissionOutcome {
    Record(ProcessRecord),
    Rejected { reason: String },
}

impl SubmissionOutcome {
    pub fn record(self) -> Option<ProcessRecord> {
        match self {
            SubmissionOutcome::Record(r) => Some(r),
            SubmissionOutcome::Rejected { .. } => None,
        }
    }
}

/// Chronological attempts up to and including the first accepted one.
pub fn ingest_submissions(
    id: impl Into<String>,
    attempts: &[Submission],
    language: &str,
    problem: Option<&str>,
) -> SubmissionOutcome {
    let Some(accepted) = attempts.iter().position(|a| a.verdict.is_accepted()) else {
        return SubmissionOutcome::Rejected {
            reason: "no accepted submission".into(),
        };
    };
    let snapshots = attempts[..=accepted]
        .iter()
        .map(|a| TextDocument::new(&a.code))
        .collect();
    match ProcessRecord::new(
        id,
        Source::OnlineSubmit,
        snapshots,
        language,
        problem.map(str::to_owned),
    ) {
        Ok(record) => SubmissionOutcome::Record(record),
        Err(e) => SubmissionOutcome::Rejected {
            reason: e.to_string(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(s: &str) -> TextDocument {
        TextDocument::new(s)
    }

    #[test]
    fn git_pairs() {
        let r = ingest_git("c1", &doc("a\n"), &doc("b\n"), "fix bug", "python").unwrap();
        assert_eq!(r.snapshots, vec![doc("a\n"), doc("b\n")]);
        assert_eq!(r.metadata.as_deref(), Some("fix bug"));
        assert_eq!(r.source, Source::GitCommit);
        assert!(matches!(
            ingest_git("c2", &doc("a\n"), &doc("a\n"), "noop", "python"),
            Err(PipelineError::IdenticalSnapshots)
        ));
        let created = ingest_git(
            "c3",
            &TextDocument::empty(),
            &doc("x = 1\n"),
            "add",
            "python",
        )
        .unwrap();
        assert!(created.snapshots[0].is_empty());
    }

    #[test]
    fn submissions_end_at_first_accept() {
        let out = ingest_submissions(
            "p",
            &[
                Submission::new("a\n", "WA"),
                Submission::new("b\n", "AC"),
                Submission::new("c\n", "WA"),
            ],
            "python",
            None,
        );
        assert_eq!(
            out.record().unwrap().snapshots,
            vec![doc("a\n"), doc("b\n")]
        );
    }

    #[test]
    fn submissions_without_accept_or_history_are_rejected() {
        let none = ingest_submissions(
            "p",
            &[Submission::new("a", "WA"), Submission::new("b", "WA")],
            "py",
            None,
        );
        assert!(matches!(none, SubmissionOutcome::Rejected { .. }));
        let single = ingest_submissions("p", &[Submission::new("a", "AC")], "py", None);
        assert!(matches!(single, SubmissionOutcome::Rejected { .. }));
        let dup = ingest_submissions(
            "p",
            &[Submission::new("a", "WA"), Submission::new("a", "AC")],
            "py",
            None,
        );
        assert!(matches!(dup, SubmissionOutcome::Rejected { .. }));
    }

    #[test]
    fn verdict_serializes_as_string() {
        let s: Submission = serde_json::from_str(r#"{"code":"x","verdict":"Accepted"}"#).unwrap();
        assert!(s.verdict.is_accepted());
        let w: Submission = serde_json::from_str(r#"{"code":"x","verdict":"TLE"}"#).unwrap();
        assert_eq!(
            serde_json::to_string(&w).unwrap(),
            r#"{"code":"x","verdict":"TLE"}"#
        );
    }
}
