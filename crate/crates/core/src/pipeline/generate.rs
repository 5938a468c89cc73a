//! LLM-backed steps: simulated coding histories, change judging, and
//! instruction and chat generation.

use std::sync::OnceLock;

use log::debug;
use regex::Regex;

use super::{ChangeSegment, Persona, PipelineError, ProcessRecord, Result, Source};
use crate::edit_codec::{render_change, render_edit, EditFormat, TextDocument};
use crate::llm_client::{ChatBackend, ChatMessage, ChatRequest};
use crate::prompts::PromptTemplates;

const INSTRUCTION_MARKER: &str = "**instruction:**";
const CHAT_MARKER: &str = "**chat:**";

/// Bundles a backend with the prompt templates and sampling parameters.
///
/// Each call makes up to `retries + 1` requests; attempt `k` uses seed
/// `seed + k` so a replayed cassette sees the same sequence of requests.
pub struct Generator<'a> {
    pub backend: &'a dyn ChatBackend,
    pub templates: &'a PromptTemplates,
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub retries: u32,
}

impl<'a> Generator<'a> {
    pub fn new(backend: &'a dyn ChatBackend, templates: &'a PromptTemplates) -> Self {
        Self {
            backend,
            templates,
            model_id: "default".into(),
            temperature: 0.0,
            max_tokens: 2048,
            retries: 2,
        }
    }

    fn ask(&self, system: String, user: String, seed: u64) -> Result<String> {
        let req = ChatRequest::new(
            &self.model_id,
            vec![ChatMessage::system(system), ChatMessage::user(user)],
        )
        .temperature(self.temperature)
        .max_tokens(self.max_tokens)
        .seed(Some(seed));
        Ok(self.backend.complete(&req)?)
    }

    /// Retries `parse` on fresh responses; returns the last parse error.
    fn ask_until<T>(
        &self,
        system: &str,
        user: &str,
        seed: u64,
        mut parse: impl FnMut(&str) -> Result<T>,
    ) -> Result<T> {
        let mut last = None;
        for attempt in 0..=self.retries {
            let response = self.ask(
                system.to_owned(),
                user.to_owned(),
                seed.wrapping_add(attempt as u64),
            )?;
            match parse(&response) {
                Ok(value) => return Ok(value),
                Err(e) => {
                    debug!("attempt {} rejected: {e}", attempt + 1);
                    last = Some(e);
                }
            }
        }
        Err(last.expect("at least one attempt"))
    }

    /// Asks a persona to write `seed_code` step by step. The last snapshot is
    /// forced to the seed and `repaired` is set when the model drifts.
    pub fn gen_history_ai(
        &self,
        id: &str,
        seed_code: &TextDocument,
        persona: Persona,
        language: &str,
        seed: u64,
    ) -> Result<ProcessRecord> {
        let system = self.templates.render(persona.template(), &[])?;
        let user = self.templates.render(
            "persona.user",
            &[("language", language), ("code", seed_code.content())],
        )?;
        self.ask_until(&system, &user, seed, |response| {
            let mut snapshots: Vec<TextDocument> = fenced_blocks(response)
                .into_iter()
                .map(TextDocument::new)
                .collect();
            let Some(last) = snapshots.last_mut() else {
                return Err(PipelineError::UnparseableHistory(
                    "no fenced code blocks".into(),
                ));
            };
            let repaired = last != seed_code;
            if repaired {
                *last = seed_code.clone();
            }
            let mut record = ProcessRecord::new(
                id,
                Source::AiProgrammer,
                snapshots,
                language,
                Some(persona_tag(persona)),
            )
            .map_err(|e| PipelineError::UnparseableHistory(e.to_string()))?;
            record.repaired = repaired;
            Ok(record)
        })
    }

    /// One keep/drop decision per segment, in order.
    pub fn judge_segments(
        &self,
        context: &str,
        current: &TextDocument,
        segments: &[ChangeSegment],
        seed: u64,
    ) -> Result<Vec<bool>> {
        let mut changes = String::new();
        for (k, segment) in segments.iter().enumerate() {
            let after = crate::edit_codec::apply_edit(&segment.hunks, current)?;
            let ud = render_edit(&segment.hunks, current, &after, EditFormat::Ud)?;
            if k > 0 {
                changes.push_str("\n\n");
            }
            changes.push_str(&format!(
                "**Change {}:**\n```diff\n{}```",
                k + 1,
                ud.payload
            ));
        }
        let system = self.templates.render("judge.system", &[])?;
        let user = self
            .templates
            .render("judge.user", &[("context", context), ("changes", &changes)])?;
        self.ask_until(&system, &user, seed, |response| {
            let decisions = parse_decisions(response);
            if decisions.len() == segments.len() {
                Ok(decisions)
            } else {
                Err(PipelineError::JudgeParse {
                    expected: segments.len(),
                    found: decisions.len(),
                })
            }
        })
    }

    /// A human-style instruction that asks for `current → target`.
    pub fn gen_instruction(
        &self,
        context: &str,
        metadata: Option<&str>,
        current: &TextDocument,
        target: &TextDocument,
        seed: u64,
    ) -> Result<String> {
        let user =
            self.modification_prompt("instruction.user", context, metadata, current, target)?;
        let system = self.templates.render("instruction.system", &[])?;
        self.ask_until(&system, &user, seed, |response| {
            parse_marked_block(response, INSTRUCTION_MARKER).ok_or(PipelineError::InstructionParse)
        })
    }

    /// The assistant's chat accompanying `current → target`.
    pub fn gen_chat(
        &self,
        context: &str,
        metadata: Option<&str>,
        current: &TextDocument,
        target: &TextDocument,
        seed: u64,
    ) -> Result<String> {
        let user = self.modification_prompt("chat.user", context, metadata, current, target)?;
        let system = self.templates.render("chat.system", &[])?;
        self.ask_until(&system, &user, seed, |response| {
            parse_marked_block(response, CHAT_MARKER).ok_or(PipelineError::ChatParse)
        })
    }

    fn modification_prompt(
        &self,
        template: &str,
        context: &str,
        metadata: Option<&str>,
        current: &TextDocument,
        target: &TextDocument,
    ) -> Result<String> {
        let modifications = render_change(current, target, EditFormat::Ud)?.payload;
        let metadata = metadata
            .filter(|m| !m.trim().is_empty())
            .map(|m| format!("{}\n\n", m.trim_end()))
            .unwrap_or_default();
        Ok(self.templates.render(
            template,
            &[
                ("context", context),
                ("metadata", &metadata),
                ("modifications", &modifications),
            ],
        )?)
    }
}

fn persona_tag(persona: Persona) -> String {
    match persona {
        Persona::Novice => "persona: novice",
        Persona::Ordinary => "persona: ordinary",
        Persona::Expert => "persona: expert",
    }
    .into()
}

/// Bodies of all markdown code fences, in order. An unclosed trailing fence
/// is ignored.
pub(crate) fn fenced_blocks(text: &str) -> Vec<String> {
    let mut blocks = Vec::new();
    let mut current: Option<String> = None;
    for line in text.lines() {
        let is_fence = line.trim_start().starts_with("```");
        match (&mut current, is_fence) {
            (None, true) => current = Some(String::new()),
            (Some(_), true) => blocks.push(current.take().expect("inside a block")),
            (Some(body), false) => {
                body.push_str(line);
                body.push('\n');
            }
            (None, false) => {}
        }
    }
    blocks
}

/// `True`/`False` values of every `**Decision:**` line, in order.
pub fn parse_decisions(text: &str) -> Vec<bool> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| {
        Regex::new(r"\*\*Decision:\*\*\s*`?\s*(True|False)\s*`?").expect("valid regex")
    });
    re.captures_iter(text).map(|c| &c[1] == "True").collect()
}

/// Text after `marker` up to the closing fence (or the end), trimmed.
/// `None` when the marker is missing or the body is empty.
pub fn parse_marked_block(text: &str, marker: &str) -> Option<String> {
    let start = text.find(marker)? + marker.len();
    let rest = &text[start..];
    let end = rest
        .match_indices("```")
        .map(|(i, _)| i)
        .find(|&i| i == 0 || rest[..i].ends_with('\n'))
        .unwrap_or(rest.len());
    let body = rest[..end].trim();
    (!body.is_empty()).then(|| body.to_owned())
}
