//! Prompt resources with `{{name}}` placeholders.
//!
//! Defaults are compiled in from `templates/`. A directory passed to
//! [`PromptTemplates::load_dir`] overrides any template whose `<name>.txt`
//! it contains. One trailing newline is dropped from every template.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("unknown prompt template `{0}`")]
    UnknownTemplate(String),
    #[error("template `{template}` uses `{{{{{placeholder}}}}}` but no value was given")]
    MissingValue {
        template: String,
        placeholder: String,
    },
    #[error("template `{template}` has an unterminated placeholder")]
    Unterminated { template: String },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

const DEFAULTS: &[(&str, &str)] = &[
    ("system", include_str!("../templates/system.txt")),
    (
        "persona_novice.system",
        include_str!("../templates/persona_novice.system.txt"),
    ),
    (
        "persona_ordinary.system",
        include_str!("../templates/persona_ordinary.system.txt"),
    ),
    (
        "persona_expert.system",
        include_str!("../templates/persona_expert.system.txt"),
    ),
    (
        "persona.user",
        include_str!("../templates/persona.user.txt"),
    ),
    (
        "judge.system",
        include_str!("../templates/judge.system.txt"),
    ),
    ("judge.user", include_str!("../templates/judge.user.txt")),
    (
        "instruction.system",
        include_str!("../templates/instruction.system.txt"),
    ),
    (
        "instruction.user",
        include_str!("../templates/instruction.user.txt"),
    ),
    ("chat.system", include_str!("../templates/chat.system.txt")),
    ("chat.user", include_str!("../templates/chat.user.txt")),
    (
        "eval_preamble",
        include_str!("../templates/eval_preamble.txt"),
    ),
    (
        "eval_example_messages",
        include_str!("../templates/eval_example_messages.txt"),
    ),
    (
        "eval_example_answer",
        include_str!("../templates/eval_example_answer.txt"),
    ),
];

fn strip_one_newline(text: &str) -> &str {
    text.strip_suffix('\n').unwrap_or(text)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    templates: BTreeMap<String, String>,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            templates: DEFAULTS
                .iter()
                .map(|(name, text)| ((*name).to_owned(), strip_one_newline(text).to_owned()))
                .collect(),
        }
    }
}

impl PromptTemplates {
    /// Defaults overridden by the `<name>.txt` files present in `dir`.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, PromptError> {
        let mut templates = Self::default();
        for name in templates.names() {
            let path = dir.as_ref().join(format!("{name}.txt"));
            if path.is_file() {
                let text = std::fs::read_to_string(&path).map_err(|source| PromptError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
                templates.set(&name, strip_one_newline(&text));
            }
        }
        Ok(templates)
    }

    pub fn names(&self) -> Vec<String> {
        self.templates.keys().cloned().collect()
    }

    pub fn set(&mut self, name: &str, text: impl Into<String>) {
        self.templates.insert(name.to_owned(), text.into());
    }

    pub fn raw(&self, name: &str) -> Result<&str, PromptError> {
        self.templates
            .get(name)
            .map(String::as_str)
            .ok_or_else(|| PromptError::UnknownTemplate(name.to_owned()))
    }

    /// Substitutes `{{key}}` placeholders in one pass; values are inserted
    /// verbatim and never re-scanned.
    pub fn render(&self, name: &str, values: &[(&str, &str)]) -> Result<String, PromptError> {
        let template = self.raw(name)?;
        let mut out = String::with_capacity(template.len());
        let mut rest = template;
        while let Some(open) = rest.find("{{") {
            out.push_str(&rest[..open]);
            let after = &rest[open + 2..];
            let close = after.find("}}").ok_or_else(|| PromptError::Unterminated {
                template: name.to_owned(),
            })?;
            let key = &after[..close];
            let value = values
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| *v)
                .ok_or_else(|| PromptError::MissingValue {
                    template: name.to_owned(),
                    placeholder: key.to_owned(),
                })?;
            out.push_str(value);
            rest = &after[close + 2..];
        }
        out.push_str(rest);
        Ok(out)
    }
}

/// Wraps code in a markdown fence. `code` is expected to end with a newline.
pub fn fence(language: &str, code: &str) -> String {
    let mut out = format!("```{language}\n{code}");
    if !code.is_empty() && !code.ends_with('\n') {
        out.push('\n');
    }
    out.push_str("```");
    out
}

/// The "Programming process k / Current code / User instruction" block
/// shared by generation and evaluation prompts.
pub fn format_context(
    history: &[&str],
    current: &str,
    instruction: Option<&str>,
    language: &str,
) -> String {
    let mut sections: Vec<String> = history
        .iter()
        .enumerate()
        .map(|(i, code)| format!("Programming process {}:\n{}", i + 1, fence(language, code)))
        .collect();
    sections.push(format!("Current code:\n{}", fence(language, current)));
    if let Some(instruction) = instruction {
        sections.push(format!("User instruction:\n{instruction}"));
    }
    sections.join("\n\n")
}
