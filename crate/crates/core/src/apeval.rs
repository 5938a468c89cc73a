//! Pass@1 evaluation over four-type benchmark suites.
//!
//! A task gives the current code plus, depending on its type, earlier
//! snapshots and a user instruction. The model's greedy answer is turned into
//! a candidate program and run against the task's base and extra tests.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conversation::{
    annotate_target, generation_prompt, tokens, Conversation, Message, TargetAnnotation,
};
use crate::edit_codec::{apply_rendered, render_change, EditFormat, RenderedEdit, TextDocument};
use crate::llm_client::{ChatBackend, ChatMessage, ChatRequest, LlmError};
use crate::pipeline::SampleType;
use crate::prompts::{format_context, PromptTemplates};
use crate::runner::{ExecJob, ExecResult, ExecStatus, Runner};

/// Tasks per type in the canonical suite.
pub const CANONICAL_PER_TYPE: usize = 41;

const TOY_SUITE: &str = include_str!("../data/toy_suite.json");

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("suite schema error: {0}")]
    Schema(String),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("model returned no code")]
    EmptyCandidate,
    #[error("cannot apply the predicted edit: {0}")]
    BadEdit(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Prompt(#[from] crate::prompts::PromptError),
    #[error(transparent)]
    Conversation(#[from] crate::conversation::ConversationError),
}

impl EvalError {
    pub fn kind(&self) -> &'static str {
        match self {
            EvalError::Schema(_) => "SCHEMA_ERROR",
            EvalError::Io { .. } => "IO_ERROR",
            EvalError::EmptyCandidate => "EMPTY_CANDIDATE",
            EvalError::BadEdit(_) => "BAD_EDIT",
            EvalError::Llm(_) => "LLM_ERROR",
            EvalError::Prompt(_) => "PROMPT_ERROR",
            EvalError::Conversation(_) => "CONVERSATION_ERROR",
        }
    }
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

fn default_language() -> String {
    "python".into()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchTask {
    pub id: String,
    pub sample_type: SampleType,
    #[serde(default = "default_language")]
    pub language: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub history: Vec<TextDocument>,
    pub current: TextDocument,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation: Option<TargetAnnotation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user: Option<String>,
    pub entry_point: String,
    pub base_tests: String,
    pub extra_tests: String,
    /// Known-good solution; lets the oracle model and reference runner work offline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_solution: Option<String>,
}

impl BenchTask {
    fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(EvalError::Schema(format!("task {}: {msg}", self.id)));
        if self.id.trim().is_empty() {
            return Err(EvalError::Schema("task with empty id".into()));
        }
        if self.sample_type.has_history() && self.history.is_empty() {
            return fail(format!("type {} needs history", self.sample_type));
        }
        if !self.sample_type.has_history() && !self.history.is_empty() {
            return fail(format!("type {} must not have history", self.sample_type));
        }
        let has_user = self.user.as_deref().is_some_and(|u| !u.trim().is_empty());
        if self.sample_type.has_user() != has_user {
            return fail(format!(
                "type {} {} a user instruction",
                self.sample_type,
                if has_user { "must not have" } else { "needs" }
            ));
        }
        if self.entry_point.trim().is_empty() {
            return fail("empty entry_point".into());
        }
        for (name, tests) in [
            ("base_tests", &self.base_tests),
            ("extra_tests", &self.extra_tests),
        ] {
            if !tests.contains(&self.entry_point) {
                return fail(format!("{name} never mention `{}`", self.entry_point));
            }
        }
        if let Some(annotation) = self.annotation {
            annotate_target(self.current.content(), annotation)
                .map_err(|e| EvalError::Schema(format!("task {}: {e}", self.id)))?;
        }
        Ok(())
    }

    /// The task as an assistant conversation without the answer.
    pub fn conversation(&self, system: Option<&str>) -> Conversation {
        let mut messages = Vec::new();
        if let Some(system) = system {
            messages.push(Message::system(system));
        }
        messages.extend(self.history.iter().map(Message::history));
        messages.push(Message::current_with_target(
            &self.current,
            self.annotation.unwrap_or_default(),
        ));
        if let Some(user) = &self.user {
            messages.push(Message::user(user.clone()));
        }
        Conversation::new(messages)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchSuite {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub tasks: Vec<BenchTask>,
}

impl BenchSuite {
    /// Eight tasks, two per type, each with a reference solution.
    pub fn toy() -> Self {
        parse_suite(TOY_SUITE)
            .expect("bundled toy suite is valid")
            .suite
    }

    pub fn counts(&self) -> BTreeMap<SampleType, usize> {
        let mut counts: BTreeMap<SampleType, usize> =
            SampleType::ALL.iter().map(|&t| (t, 0)).collect();
        for task in &self.tasks {
            *counts.entry(task.sample_type).or_default() += 1;
        }
        counts
    }
}

#[derive(Debug, Clone)]
pub struct LoadedSuite {
    pub suite: BenchSuite,
    /// Non-fatal findings such as COUNT_MISMATCH.
    pub warnings: Vec<String>,
}

pub fn parse_suite(json: &str) -> Result<LoadedSuite> {
    let suite: BenchSuite =
        serde_json::from_str(json).map_err(|e| EvalError::Schema(e.to_string()))?;
    let mut seen = HashSet::new();
    for task in &suite.tasks {
        task.validate()?;
        if !seen.insert(task.id.as_str()) {
            return Err(EvalError::Schema(format!("duplicate task id {}", task.id)));
        }
    }
    let counts = suite.counts();
    let mut warnings = Vec::new();
    if counts.values().any(|&c| c != CANONICAL_PER_TYPE) {
        let listed: Vec<String> = counts.iter().map(|(t, c)| format!("{t}={c}")).collect();
        warnings.push(format!(
            "COUNT_MISMATCH: {} per type (canonical suite has {CANONICAL_PER_TYPE} each)",
            listed.join(" ")
        ));
    }
    Ok(LoadedSuite { suite, warnings })
}

pub fn load_suite(path: impl AsRef<Path>) -> Result<LoadedSuite> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let loaded = parse_suite(&text)?;
    for w in &loaded.warnings {
        warn!("{}: {w}", path.display());
    }
    Ok(loaded)
}

/// How a task is presented to the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adapter {
    /// The assistant-conversation template itself.
    Native,
    /// One-shot plain-text prompt for base models.
    BaseFewshot,
    /// One-shot two-turn chat for instruction-tuned models.
    InstructFewshot,
}

impl std::str::FromStr for Adapter {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "native" => Ok(Adapter::Native),
            "base" | "base_fewshot" => Ok(Adapter::BaseFewshot),
            "instruct" | "instruct_fewshot" => Ok(Adapter::InstructFewshot),
            other => Err(format!(
                "unknown adapter `{other}` (native, base, instruct)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "content", rename_all = "snake_case")]
pub enum Prompt {
    Text(String),
    Chat(Vec<ChatMessage>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestPayload {
    pub adapter: Adapter,
    pub format: EditFormat,
    pub prompt: Prompt,
}

fn fewshot_context(task: &BenchTask) -> Result<String> {
    let history: Vec<&str> = task.history.iter().map(|d| d.content()).collect();
    let current = annotate_target(task.current.content(), task.annotation.unwrap_or_default())?;
    Ok(format_context(
        &history,
        &current,
        task.user.as_deref(),
        &task.language,
    ))
}

/// Builds the request for one task. Few-shot adapters always ask for the
/// whole modified file, so `format` only matters for the native adapter.
pub fn render_prompt(
    task: &BenchTask,
    adapter: Adapter,
    format: EditFormat,
    templates: &PromptTemplates,
) -> Result<RequestPayload> {
    let preamble = templates.raw("eval_preamble")?;
    let example = templates.raw("eval_example_messages")?;
    let answer = templates.raw("eval_example_answer")?;
    let (format, prompt) = match adapter {
        Adapter::Native => (
            format,
            Prompt::Text(generation_prompt(&task.conversation(None), format)?),
        ),
        Adapter::BaseFewshot => {
            let wrap = |messages: &str| {
                format!(
                    "{preamble}\n\n{}{messages}{}",
                    tokens::MESSAGES_START,
                    tokens::MESSAGES_END
                )
            };
            let text = format!(
                "{}\n\n{answer}\n\n{}\n\n",
                wrap(example),
                wrap(&fewshot_context(task)?)
            );
            (EditFormat::Wf, Prompt::Text(text))
        }
        Adapter::InstructFewshot => (
            EditFormat::Wf,
            Prompt::Chat(vec![
                ChatMessage::user(format!("{preamble}\n\n{example}")),
                ChatMessage::assistant(answer),
                ChatMessage::user(format!("{preamble}\n\n{}", fewshot_context(task)?)),
            ]),
        ),
    };
    Ok(RequestPayload {
        adapter,
        format,
        prompt,
    })
}

/// Strips one surrounding markdown fence, if the text is a single fenced block.
fn strip_fence(text: &str) -> &str {
    let trimmed = text.trim();
    let Some(rest) = trimmed.strip_prefix("```") else {
        return text;
    };
    let Some(body_start) = rest.find('\n') else {
        return text;
    };
    let body = &rest[body_start + 1..];
    match body.trim_end().strip_suffix("```") {
        Some(inner) => inner,
        None => text,
    }
}

/// The code in a model answer: the `<|next_start|>…<|next_end|>` payload if
/// present, else the whole text, minus a surrounding code fence.
pub fn extract_code(output: &str) -> Result<String> {
    let inner = match (
        output.find(tokens::NEXT_START),
        output.find(tokens::NEXT_END),
    ) {
        (Some(s), Some(e)) if e > s => &output[s + tokens::NEXT_START.len()..e],
        (Some(s), None) => &output[s + tokens::NEXT_START.len()..],
        _ => output,
    };
    let code = strip_fence(inner);
    if code.trim().is_empty() {
        return Err(EvalError::EmptyCandidate);
    }
    Ok(code.to_owned())
}

/// The program to test: the extracted code itself, or for native edits in a
/// diff format, the edit applied to the current code.
pub fn candidate_program(
    task: &BenchTask,
    output: &str,
    payload: &RequestPayload,
) -> Result<String> {
    let code = extract_code(output)?;
    if payload.format == EditFormat::Wf {
        return Ok(code);
    }
    let edit = RenderedEdit {
        format: payload.format,
        payload: code,
    };
    let program =
        apply_rendered(&edit, &task.current).map_err(|e| EvalError::BadEdit(e.to_string()))?;
    Ok(program.content().to_owned())
}

/// Produces one greedy answer per task.
pub trait Completer: Send + Sync {
    fn complete(&self, task: &BenchTask, payload: &RequestPayload) -> Result<String>;
}

/// Sends prompts to a chat backend at temperature 0. Text prompts go out as
/// a single user message.
pub struct BackendCompleter<B> {
    pub backend: B,
    pub model_id: String,
    pub max_tokens: u32,
}

impl<B: ChatBackend> Completer for BackendCompleter<B> {
    fn complete(&self, _task: &BenchTask, payload: &RequestPayload) -> Result<String> {
        let messages = match &payload.prompt {
            Prompt::Text(text) => vec![ChatMessage::user(text.clone())],
            Prompt::Chat(messages) => messages.clone(),
        };
        let req = ChatRequest::new(&self.model_id, messages)
            .temperature(0.0)
            .max_tokens(self.max_tokens);
        Ok(self.backend.complete(&req)?)
    }
}

/// Answers every task with its reference solution in the requested shape.
#[derive(Debug, Default, Clone, Copy)]
pub struct OracleCompleter;

impl Completer for OracleCompleter {
    fn complete(&self, task: &BenchTask, payload: &RequestPayload) -> Result<String> {
        let reference = task.reference_solution.as_deref().ok_or_else(|| {
            EvalError::Schema(format!("task {} has no reference solution", task.id))
        })?;
        let reference = TextDocument::new(reference);
        let body = match payload.format {
            EditFormat::Wf => format!("```{}\n{}```", task.language, reference.content()),
            format => {
                render_change(&task.current, &reference, format)
                    .map_err(|e| EvalError::BadEdit(e.to_string()))?
                    .payload
            }
        };
        Ok([tokens::NEXT_START, &body, tokens::NEXT_END].concat())
    }
}

/// Always answers with nothing.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullCompleter;

impl Completer for NullCompleter {
    fn complete(&self, _task: &BenchTask, _payload: &RequestPayload) -> Result<String> {
        Ok(String::new())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub adapter: Adapter,
    pub format: EditFormat,
    pub base_timeout_s: f64,
    pub extra_timeout_s: f64,
    pub workers: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            adapter: Adapter::Native,
            format: EditFormat::Wf,
            base_timeout_s: 10.0,
            extra_timeout_s: 30.0,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub id: String,
    pub sample_type: SampleType,
    pub base: ExecStatus,
    pub extra: ExecStatus,
    /// Why the task failed before or during execution.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeScore {
    pub total: usize,
    pub base_pass: usize,
    pub extra_pass: usize,
}

/// Percentage with one decimal, e.g. 28 of 41 → "68.3".
pub fn format_pct(pass: usize, total: usize) -> String {
    if total == 0 {
        return "-".into();
    }
    format!("{:.1}", 100.0 * pass as f64 / total as f64)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_type: BTreeMap<SampleType, TypeScore>,
    pub tasks: Vec<TaskOutcome>,
}

impl EvalReport {
    pub fn from_outcomes(mut tasks: Vec<TaskOutcome>) -> Self {
        tasks.sort_by(|a, b| a.id.cmp(&b.id));
        let mut per_type: BTreeMap<SampleType, TypeScore> = SampleType::ALL
            .iter()
            .map(|&t| (t, TypeScore::default()))
            .collect();
        for t in &tasks {
            let score = per_type.entry(t.sample_type).or_default();
            score.total += 1;
            score.base_pass += usize::from(t.base == ExecStatus::Pass);
            score.extra_pass += usize::from(t.extra == ExecStatus::Pass);
        }
        Self { per_type, tasks }
    }

    /// Micro average over all tasks.
    pub fn overall(&self) -> TypeScore {
        self.per_type
            .values()
            .fold(TypeScore::default(), |acc, s| TypeScore {
                total: acc.total + s.total,
                base_pass: acc.base_pass + s.base_pass,
                extra_pass: acc.extra_pass + s.extra_pass,
            })
    }

    /// `"base (extra)"` for one type.
    pub fn cell(score: &TypeScore) -> String {
        format!(
            "{} ({})",
            format_pct(score.base_pass, score.total),
            format_pct(score.extra_pass, score.total)
        )
    }

    pub fn to_table(&self) -> String {
        let mut rows: Vec<(String, String)> = self
            .per_type
            .iter()
            .map(|(t, s)| (t.to_string(), Self::cell(s)))
            .collect();
        rows.push(("Avg.".into(), Self::cell(&self.overall())));
        let width = rows
            .iter()
            .map(|r| r.1.len())
            .max()
            .unwrap_or(0)
            .max("Pass@1 base (extra)".len());
        let mut out = String::new();
        let _ = writeln!(out, "{:<6}{:>width$}", "Type", "Pass@1 base (extra)");
        for (name, cell) in rows {
            let _ = writeln!(out, "{name:<6}{cell:>width$}");
        }
        out
    }
}

fn run_tests(
    runner: &dyn Runner,
    task: &BenchTask,
    program: &str,
    tests: &str,
    timeout_s: f64,
) -> (ExecStatus, Option<String>) {
    let job = ExecJob::new(program, tests, &task.entry_point).timeout(timeout_s);
    match runner.run(&job) {
        Ok(ExecResult {
            status,
            stderr_tail,
            ..
        }) => {
            let reason =
                (status != ExecStatus::Pass && !stderr_tail.is_empty()).then_some(stderr_tail);
            (status, reason)
        }
        Err(e) => (ExecStatus::Error, Some(e.to_string())),
    }
}

fn evaluate_task(
    task: &BenchTask,
    completer: &dyn Completer,
    runner: &dyn Runner,
    templates: &PromptTemplates,
    config: &EvalConfig,
) -> TaskOutcome {
    let failed = |reason: String| TaskOutcome {
        id: task.id.clone(),
        sample_type: task.sample_type,
        base: ExecStatus::Fail,
        extra: ExecStatus::Fail,
        reason: Some(reason),
    };
    let program =
        render_prompt(task, config.adapter, config.format, templates).and_then(|payload| {
            let output = completer.complete(task, &payload)?;
            candidate_program(task, &output, &payload)
        });
    let program = match program {
        Ok(p) => p,
        Err(e) => return failed(format!("{}: {e}", e.kind())),
    };
    // Base and extra run independently; neither result is inferred from the other.
    let (base, base_reason) = run_tests(
        runner,
        task,
        &program,
        &task.base_tests,
        config.base_timeout_s,
    );
    let (extra, extra_reason) = run_tests(
        runner,
        task,
        &program,
        &task.extra_tests,
        config.extra_timeout_s,
    );
    TaskOutcome {
        id: task.id.clone(),
        sample_type: task.sample_type,
        base,
        extra,
        reason: base_reason.or(extra_reason),
    }
}

/// One completion per task, executed against base and extra tests. Failures
/// of single tasks are recorded in the report and never abort the run.
pub fn evaluate(
    suite: &BenchSuite,
    completer: &dyn Completer,
    runner: &dyn Runner,
    templates: &PromptTemplates,
    config: &EvalConfig,
) -> EvalReport {
    let work = || -> Vec<TaskOutcome> {
        suite
            .tasks
            .par_iter()
            .map(|task| evaluate_task(task, completer, runner, templates, config))
            .collect()
    };
    let outcomes = match rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.max(1))
        .build()
    {
        Ok(pool) => pool.install(work),
        Err(e) => {
            warn!("falling back to the global thread pool: {e}");
            work()
        }
    };
    EvalReport::from_outcomes(outcomes)
}

/// A runner that checks candidates against the suite's reference solutions.
pub fn reference_runner(suite: &BenchSuite) -> crate::runner::ReferenceRunner {
    let mut runner = crate::runner::ReferenceRunner::new();
    for task in &suite.tasks {
        if let Some(reference) = &task.reference_solution {
            runner.insert(&task.base_tests, reference);
            runner.insert(&task.extra_tests, reference);
        }
    }
    runner
}
