//! In-process backends.

use std::collections::HashMap;
use std::sync::Mutex;

use super::{ChatBackend, ChatRequest, LlmError, Result};

/// Answers with a closure.
pub struct FnBackend<F> {
    respond: F,
}

impl<F> FnBackend<F>
where
    F: Fn(&ChatRequest) -> Result<String> + Send + Sync,
{
    pub fn new(respond: F) -> Self {
        Self { respond }
    }
}

impl<F> ChatBackend for FnBackend<F>
where
    F: Fn(&ChatRequest) -> Result<String> + Send + Sync,
{
    fn complete(&self, req: &ChatRequest) -> Result<String> {
        req.validate()?;
        (self.respond)(req)
    }
}

/// Answers from a fixed digest → text table and counts calls.
#[derive(Default)]
pub struct ScriptedBackend {
    script: HashMap<String, String>,
    calls: Mutex<usize>,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, req: &ChatRequest, response: impl Into<String>) -> Self {
        self.script.insert(req.digest(), response.into());
        self
    }

    pub fn calls(&self) -> usize {
        *self.calls.lock().unwrap()
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, req: &ChatRequest) -> Result<String> {
        *self.calls.lock().unwrap() += 1;
        let digest = req.digest();
        self.script
            .get(&digest)
            .cloned()
            .ok_or(LlmError::CassetteMiss { digest })
    }
}

/// Deterministic stand-in for a generation model, good enough to drive the
/// synthesis pipeline end to end without network access.
///
/// It recognises the pipeline's prompts by their output markers and answers
/// in the expected shape: a two-step coding history, one `**Decision:**` per
/// listed change, an `**instruction:**` block or a `**chat:**` block. Any
/// other prompt gets an empty answer.
#[derive(Debug, Default, Clone, Copy)]
pub struct OfflineBackend;

fn fenced_code(text: &str) -> Option<&str> {
    let start = text.find("```")?;
    let body_start = start + text[start..].find('\n')? + 1;
    let end = body_start + text[body_start..].find("```")?;
    Some(&text[body_start..end])
}

impl ChatBackend for OfflineBackend {
    fn complete(&self, req: &ChatRequest) -> Result<String> {
        req.validate()?;
        let system = req
            .messages
            .iter()
            .filter(|m| m.role == "system")
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n");
        let user = req
            .messages
            .iter()
            .rev()
            .find(|m| m.role == "user")
            .map(|m| m.content.as_str())
            .unwrap_or("");
        let digest = req.digest();
        let bytes = hex::decode(&digest).expect("digest is hex");

        if system.contains("**Decision:**") {
            let changes = user.matches("**Change ").count().max(1);
            let mut out = String::from("```\n");
            for i in 0..changes {
                let keep = i == 0 || !bytes[i % bytes.len()].is_multiple_of(4);
                out.push_str(&format!(
                    "**Analysis of change {}:**\n\nThe change continues the edits made so far.\n\n**Decision:** `{}`\n\n",
                    i + 1,
                    if keep { "True" } else { "False" }
                ));
            }
            out.push_str("```");
            return Ok(out);
        }
        if system.contains("**instruction:**") {
            const PHRASES: [&str; 4] = [
                "Please finish the pending edits to this code.",
                "Update the function as discussed.",
                "Apply the next change to the current code.",
                "Continue implementing this snippet.",
            ];
            let phrase = PHRASES[bytes[0] as usize % PHRASES.len()];
            return Ok(format!("```\n**instruction:**\n{phrase}\n```"));
        }
        if system.contains("**chat:**") {
            return Ok(
                "```\n**chat:**\nI looked at the recent edits and updated the code to match where it is heading.\n```"
                    .into(),
            );
        }
        if system.contains("programmer") {
            if let Some(code) = fenced_code(user) {
                let lines: Vec<&str> = code.lines().collect();
                let half = (lines.len() / 2).max(1).min(lines.len());
                let draft = lines[..half].join("\n");
                return Ok(format!(
                    "Step 1:\n```\n{draft}\n```\n\nStep 2:\n```\n{}```\n",
                    code
                ));
            }
        }
        Ok(String::new())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm_client::ChatMessage;

    #[test]
    fn scripted_backend_returns_text_verbatim() {
        let req = ChatRequest::new("m", vec![ChatMessage::user("q")]);
        let backend = ScriptedBackend::new().with(&req, "scripted  answer\n");
        assert_eq!(backend.complete(&req).unwrap(), "scripted  answer\n");
        let other = ChatRequest::new("m", vec![ChatMessage::user("r")]);
        assert!(backend.complete(&other).is_err());
        assert_eq!(backend.calls(), 2);
    }

    #[test]
    fn offline_backend_answers_judge_prompts_per_change() {
        let req = ChatRequest::new(
            "m",
            vec![
                ChatMessage::system("... **Decision:** `True` or `False`"),
                ChatMessage::user("**Change 1:**\nx\n**Change 2:**\ny\n**Change 3:**\nz"),
            ],
        );
        let out = OfflineBackend.complete(&req).unwrap();
        assert_eq!(out.matches("**Decision:**").count(), 3);
        assert!(out.contains("**Decision:** `True`"));
    }
}
