use std::collections::BTreeMap;

use log::{debug, info};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generate::Generator;
use super::sampling::{
    annotate_target_random, assign_type, decompose, derive_seed, pick_from, rng_for,
    segment_changes, DEFAULT_TIMEPOINT_DECAY,
};
use super::{
    ChangeSegment, Persona, PipelineError, ProcessRecord, Provenance, Result, SampleType,
    TrainingSample, SCHEMA_VERSION,
};
use crate::conversation::{render_template, validate_order, Conversation, Message, Role};
use crate::edit_codec::{apply_edit, render_change, EditFormat, EditScript, TextDocument};
use crate::prompts::format_context;

/// Knobs of a synthesis run. Everything random is derived from `global_seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub global_seed: u64,
    pub format: EditFormat,
    /// Keep at most this many history messages.
    pub window: Option<usize>,
    pub timepoint_decay: f64,
    /// Overrides the per-source decomposition probability.
    pub decompose_probability: Option<f64>,
    /// Put the chat before the code change (reasoning first).
    pub with_reasoning: bool,
    /// Prepend the `system` template as a system message.
    pub system_message: bool,
    pub workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            global_seed: 0,
            format: EditFormat::Wf,
            window: None,
            timepoint_decay: DEFAULT_TIMEPOINT_DECAY,
            decompose_probability: None,
            with_reasoning: false,
            system_message: true,
            workers: 1,
        }
    }
}

/// What the driver consumes: a finished process record, or a seed snippet
/// whose history an LLM persona has to invent first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PipelineInput {
    Record(ProcessRecord),
    Seed {
        id: String,
        code: TextDocument,
        language: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        persona: Option<Persona>,
    },
}

impl PipelineInput {
    pub fn id(&self) -> &str {
        match self {
            PipelineInput::Record(r) => &r.id,
            PipelineInput::Seed { id, .. } => id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Discard {
    pub record_id: String,
    pub reason: String,
    pub detail: String,
}

impl Discard {
    pub fn new(record_id: impl Into<String>, err: &PipelineError) -> Self {
        Self {
            record_id: record_id.into(),
            reason: err.kind().to_owned(),
            detail: err.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanMax {
    pub mean: f64,
    pub max: usize,
}

impl MeanMax {
    fn of(values: impl IntoIterator<Item = usize>) -> Self {
        let (mut sum, mut count, mut max) = (0usize, 0usize, 0usize);
        for v in values {
            sum += v;
            count += 1;
            max = max.max(v);
        }
        Self {
            mean: if count == 0 {
                0.0
            } else {
                sum as f64 / count as f64
            },
            max,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SynthStats {
    pub attempted: usize,
    pub emitted: usize,
    pub discarded: usize,
    pub type_counts: BTreeMap<String, usize>,
    pub discard_reasons: BTreeMap<String, usize>,
    /// History messages per sample.
    pub history_snippets: MeanMax,
    /// Characters of the rendered request.
    pub input_chars: MeanMax,
    /// Characters of the rendered target.
    pub output_chars: MeanMax,
}

impl SynthStats {
    pub fn compute(samples: &[TrainingSample], discards: &[Discard]) -> Self {
        let mut type_counts: BTreeMap<String, usize> =
            SampleType::ALL.iter().map(|t| (t.to_string(), 0)).collect();
        for s in samples {
            *type_counts.entry(s.sample_type.to_string()).or_default() += 1;
        }
        let mut discard_reasons = BTreeMap::new();
        for d in discards {
            *discard_reasons.entry(d.reason.clone()).or_default() += 1;
        }
        let rendered = |s: &TrainingSample| {
            let request = render_template(&s.conversation, s.format)
                .map(|r| r.chars().count())
                .unwrap_or(0);
            let full = render_template(&s.full_conversation(), s.format)
                .map(|r| r.chars().count())
                .unwrap_or(0);
            (request, full.saturating_sub(request))
        };
        let lengths: Vec<(usize, usize)> = samples.iter().map(rendered).collect();
        Self {
            attempted: samples.len() + discards.len(),
            emitted: samples.len(),
            discarded: discards.len(),
            type_counts,
            discard_reasons,
            history_snippets: MeanMax::of(
                samples.iter().map(|s| s.conversation.count(Role::History)),
            ),
            input_chars: MeanMax::of(lengths.iter().map(|l| l.0)),
            output_chars: MeanMax::of(lengths.iter().map(|l| l.1)),
        }
    }

    /// Share of emitted samples per type, in percent.
    pub fn type_mix(&self) -> BTreeMap<String, f64> {
        self.type_counts
            .iter()
            .map(|(k, v)| {
                let pct = if self.emitted == 0 {
                    0.0
                } else {
                    100.0 * *v as f64 / self.emitted as f64
                };
                (k.clone(), pct)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct SynthOutput {
    pub samples: Vec<TrainingSample>,
    pub discards: Vec<Discard>,
    pub stats: SynthStats,
}

/// Builds one training sample with current code `record.snapshots[index]`.
///
/// Types without a user instruction have their changes judged and keep only
/// the accepted segments; a sample where every segment is rejected is
/// discarded. Types with an instruction keep every segment unjudged.
pub fn assemble_sample<R: Rng + ?Sized>(
    gen: &Generator<'_>,
    record: &ProcessRecord,
    index: usize,
    sample_type: SampleType,
    config: &PipelineConfig,
    rng: &mut R,
) -> Result<TrainingSample> {
    if index + 1 >= record.len() {
        return Err(PipelineError::BadTimeIndex {
            index,
            len: record.len(),
        });
    }
    let sample_seed = derive_seed(config.global_seed, &[&record.id, &index.to_string()]);
    let current = &record.snapshots[index];
    let mut segments = segment_changes(current, record.final_snapshot())?;

    let mut history: Vec<&TextDocument> = if sample_type.has_history() {
        record.snapshots[..index].iter().collect()
    } else {
        Vec::new()
    };
    if let Some(k) = config.window {
        history.drain(..history.len().saturating_sub(k));
    }
    let history_text: Vec<&str> = history.iter().map(|d| d.content()).collect();
    let context = format_context(&history_text, current.content(), None, &record.language);

    if !sample_type.has_user() {
        let decisions = gen.judge_segments(&context, current, &segments, sample_seed)?;
        for (segment, keep) in segments.iter_mut().zip(decisions) {
            segment.kept = Some(keep);
        }
        if !segments.iter().any(ChangeSegment::is_kept) {
            return Err(PipelineError::AllSegmentsRejected);
        }
    }

    let kept = EditScript::new(
        segments
            .iter()
            .filter(|s| s.is_kept())
            .flat_map(|s| s.hunks.hunks.iter().cloned())
            .collect(),
    );
    let target_doc = apply_edit(&kept, current)?;
    let annotation = annotate_target_random(current, &segments, rng);

    let instruction = if sample_type.has_user() {
        Some(gen.gen_instruction(
            &context,
            record.metadata.as_deref(),
            current,
            &target_doc,
            sample_seed.wrapping_add(1 << 16),
        )?)
    } else {
        None
    };
    let chat_context = format_context(
        &history_text,
        current.content(),
        instruction.as_deref(),
        &record.language,
    );
    let chat = gen.gen_chat(
        &chat_context,
        record.metadata.as_deref(),
        current,
        &target_doc,
        sample_seed.wrapping_add(2 << 16),
    )?;

    let mut messages = Vec::new();
    if config.system_message {
        messages.push(Message::system(gen.templates.render("system", &[])?));
    }
    messages.extend(history.iter().map(|d| Message::history(d)));
    messages.push(Message::current_with_target(current, annotation));
    if let Some(instruction) = instruction {
        messages.push(Message::user(instruction));
    }
    let conversation = Conversation::new(messages);

    let code_change = (target_doc != *current)
        .then(|| render_change(current, &target_doc, config.format))
        .transpose()?;
    let target = Message::assistant(code_change, Some(chat)).with_chat_first(config.with_reasoning);

    let sample = TrainingSample {
        schema_version: SCHEMA_VERSION,
        sample_type,
        format: config.format,
        conversation,
        target,
        segments,
        provenance: Provenance {
            record_id: record.id.clone(),
            time_index: index,
            global_seed: config.global_seed,
            sample_seed,
        },
    };
    let full = sample.full_conversation();
    validate_order(&full).map_err(crate::conversation::ConversationError::from)?;
    render_template(&full, config.format)?;
    Ok(sample)
}

/// Picks a type and a time point for one record and assembles the sample.
///
/// History types need at least one snapshot before the current one, so they
/// draw the time point from index 1 on. A two-snapshot record has no such
/// point and falls back to the matching type without history.
fn sample_record(
    gen: &Generator<'_>,
    input: &PipelineInput,
    config: &PipelineConfig,
) -> Result<TrainingSample> {
    let mut rng = rng_for(derive_seed(config.global_seed, &[input.id()]));
    let record = match input {
        PipelineInput::Record(r) => r.clone(),
        PipelineInput::Seed {
            id,
            code,
            language,
            persona,
        } => {
            let persona =
                persona.unwrap_or_else(|| Persona::ALL[rng.gen_range(0..Persona::ALL.len())]);
            let seed = derive_seed(config.global_seed, &[id, "history"]);
            gen.gen_history_ai(id, code, persona, language, seed)?
        }
    };
    let p = config
        .decompose_probability
        .unwrap_or_else(|| record.source.decompose_probability());
    let record = decompose(&record, p, &mut rng);
    let mut sample_type = assign_type(&mut rng);
    let first = if sample_type.has_history() { 1 } else { 0 };
    let index = if first + 1 < record.len() {
        pick_from(first, record.len(), config.timepoint_decay, &mut rng)
    } else {
        sample_type = if sample_type.has_user() {
            SampleType::CU
        } else {
            SampleType::C
        };
        0
    };
    let mut sample_rng = rng_for(derive_seed(
        config.global_seed,
        &[&record.id, &index.to_string(), "sample"],
    ));
    assemble_sample(gen, &record, index, sample_type, config, &mut sample_rng)
}

/// Runs every input through the pipeline on `config.workers` threads.
///
/// Output is sorted by provenance, so it does not depend on scheduling.
pub fn synthesize(
    gen: &Generator<'_>,
    inputs: &[PipelineInput],
    config: &PipelineConfig,
) -> Result<SynthOutput> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.max(1))
        .build()
        .map_err(|e| PipelineError::Io {
            path: "<thread pool>".into(),
            source: std::io::Error::other(e),
        })?;
    let results: Vec<(String, Result<TrainingSample>)> = pool.install(|| {
        inputs
            .par_iter()
            .map(|input| (input.id().to_owned(), sample_record(gen, input, config)))
            .collect()
    });
    let mut samples = Vec::new();
    let mut discards = Vec::new();
    for (id, result) in results {
        match result {
            Ok(sample) => samples.push(sample),
            Err(err) => {
                debug!("discarding {id}: {err}");
                discards.push(Discard::new(id, &err));
            }
        }
    }
    samples.sort_by(|a, b| {
        (&a.provenance.record_id, a.provenance.time_index)
            .cmp(&(&b.provenance.record_id, b.provenance.time_index))
    });
    discards.sort_by(|a, b| a.record_id.cmp(&b.record_id));
    let stats = SynthStats::compute(&samples, &discards);
    info!(
        "synthesized {} samples, discarded {} of {} inputs",
        stats.emitted, stats.discarded, stats.attempted
    );
    Ok(SynthOutput {
        samples,
        discards,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conversation::TargetAnnotation;
    use crate::edit_codec::{apply_rendered, parse_edit};
    use crate::llm_client::mock::{FnBackend, OfflineBackend};
    use crate::llm_client::{ChatRequest, LlmError};
    use crate::pipeline::Source;
    use crate::prompts::PromptTemplates;

    fn lines(n: usize, tag: &str) -> TextDocument {
        TextDocument::from_lines((1..=n).map(|i| format!("{tag}{i}")))
    }

    fn three_step() -> ProcessRecord {
        let a = TextDocument::new("def f(a):\n    return a\n");
        let b = TextDocument::new("def f(a, b):\n    return a\n");
        let c = TextDocument::new("def f(a, b):\n    return a + b\n");
        ProcessRecord::new(
            "r3",
            Source::GitCommit,
            vec![a, b, c],
            "python",
            Some("add b".into()),
        )
        .unwrap()
    }

    /// Judges everything `True` and answers instruction/chat prompts.
    fn agreeable(
    ) -> FnBackend<impl Fn(&ChatRequest) -> crate::llm_client::Result<String> + Send + Sync> {
        FnBackend::new(|req: &ChatRequest| {
            let user = &req.messages[1].content;
            let system = &req.messages[0].content;
            Ok::<_, LlmError>(if system.contains("**Decision:**") {
                "**Decision:** `True`\n".repeat(user.matches("**Change ").count())
            } else if system.contains("**instruction:**") {
                "```\n**instruction:**\nFinish it.\n```".into()
            } else {
                "```\n**chat:**\nDone.\n```".into()
            })
        })
    }

    #[test]
    fn type_c_with_everything_kept_targets_the_final_code() {
        let t = PromptTemplates::default();
        let backend = agreeable();
        let gen = Generator::new(&backend, &t);
        let rec = three_step();
        for format in EditFormat::ALL {
            let cfg = PipelineConfig {
                format,
                ..Default::default()
            };
            let s = assemble_sample(&gen, &rec, 0, SampleType::C, &cfg, &mut rng_for(1)).unwrap();
            let change = s.target.code_change.as_ref().unwrap();
            assert_eq!(change.format, format);
            assert_eq!(
                &apply_rendered(change, &rec.snapshots[0]).unwrap(),
                rec.final_snapshot()
            );
            assert_eq!(s.conversation.count(Role::History), 0);
            assert_eq!(s.conversation.count(Role::User), 0);
            assert!(s.segments.iter().all(|seg| seg.kept == Some(true)));
        }
    }

    #[test]
    fn history_and_user_presence_follow_the_type() {
        let t = PromptTemplates::default();
        let backend = agreeable();
        let gen = Generator::new(&backend, &t);
        let rec = three_step();
        let cfg = PipelineConfig::default();
        let hc = assemble_sample(&gen, &rec, 1, SampleType::HC, &cfg, &mut rng_for(1)).unwrap();
        assert_eq!(hc.conversation.count(Role::History), 1);
        assert_eq!(hc.conversation.count(Role::User), 0);
        let cu = assemble_sample(&gen, &rec, 1, SampleType::CU, &cfg, &mut rng_for(1)).unwrap();
        assert_eq!(cu.conversation.count(Role::History), 0);
        assert_eq!(cu.conversation.find(Role::User).unwrap().body, "Finish it.");
        assert!(cu.segments.iter().all(|seg| seg.kept.is_none()));
        let hcu = assemble_sample(&gen, &rec, 1, SampleType::HCU, &cfg, &mut rng_for(1)).unwrap();
        assert_eq!(
            hcu.conversation.roles(),
            vec![Role::System, Role::History, Role::Current, Role::User]
        );
    }

    #[test]
    fn final_snapshot_is_not_a_time_point() {
        let t = PromptTemplates::default();
        let backend = agreeable();
        let gen = Generator::new(&backend, &t);
        let rec = three_step();
        let err = assemble_sample(
            &gen,
            &rec,
            2,
            SampleType::C,
            &PipelineConfig::default(),
            &mut rng_for(0),
        );
        assert_eq!(err.unwrap_err().kind(), "BAD_TIME_INDEX");
    }

    #[test]
    fn rejected_segments_are_dropped_from_the_target() {
        let t = PromptTemplates::default();
        let backend = FnBackend::new(|req: &ChatRequest| {
            Ok::<_, LlmError>(if req.messages[0].content.contains("**Decision:**") {
                "**Decision:** `True`\n**Decision:** `False`".into()
            } else {
                "**chat:** ok".into()
            })
        });
        let gen = Generator::new(&backend, &t);
        let mut f = lines(12, "l");
        let c = f.clone();
        let mut v: Vec<String> = f.lines().iter().map(|s| s.to_string()).collect();
        v[1] = "two".into();
        v[9] = "ten".into();
        f = TextDocument::from_lines(&v);
        let rec =
            ProcessRecord::new("r", Source::GitCommit, vec![c.clone(), f], "python", None).unwrap();
        let s = assemble_sample(
            &gen,
            &rec,
            0,
            SampleType::C,
            &PipelineConfig::default(),
            &mut rng_for(2),
        )
        .unwrap();
        let change = s.target.code_change.as_ref().unwrap();
        let script = parse_edit(change, &c).unwrap();
        assert_eq!(script.len(), 1);
        assert_eq!(script.hunks[0].new_lines, vec!["two"]);
        if let Some(TargetAnnotation::Selection { start, end }) =
            s.conversation.find(Role::Current).unwrap().annotation
        {
            assert_eq!((start, end), (3, 6));
        }
    }

    #[test]
    fn all_rejected_is_discarded_without_user() {
        let t = PromptTemplates::default();
        let backend = FnBackend::new(|req: &ChatRequest| {
            Ok::<_, LlmError>(if req.messages[0].content.contains("**Decision:**") {
                "**Decision:** `False`\n"
                    .repeat(req.messages[1].content.matches("**Change ").count())
            } else {
                "**chat:** ok".into()
            })
        });
        let gen = Generator::new(&backend, &t);
        let err = assemble_sample(
            &gen,
            &three_step(),
            0,
            SampleType::HC,
            &PipelineConfig::default(),
            &mut rng_for(0),
        );
        assert_eq!(err.unwrap_err().kind(), "ALL_SEGMENTS_REJECTED");
    }

    #[test]
    fn window_limits_history() {
        let t = PromptTemplates::default();
        let backend = agreeable();
        let gen = Generator::new(&backend, &t);
        let snaps: Vec<TextDocument> = (0..7).map(|i| lines(i + 1, "x")).collect();
        let rec = ProcessRecord::new("w", Source::OnlineSubmit, snaps, "python", None).unwrap();
        let cfg = PipelineConfig {
            window: Some(3),
            ..Default::default()
        };
        let s = assemble_sample(&gen, &rec, 5, SampleType::HC, &cfg, &mut rng_for(0)).unwrap();
        let bodies: Vec<&str> = s.conversation.history().map(|m| m.body.as_str()).collect();
        assert_eq!(
            bodies,
            vec![
                rec.snapshots[2].content(),
                rec.snapshots[3].content(),
                rec.snapshots[4].content()
            ]
        );
    }

    #[test]
    fn reasoning_puts_chat_first() {
        let t = PromptTemplates::default();
        let backend = agreeable();
        let gen = Generator::new(&backend, &t);
        let cfg = PipelineConfig {
            with_reasoning: true,
            ..Default::default()
        };
        let s = assemble_sample(
            &gen,
            &three_step(),
            0,
            SampleType::CU,
            &cfg,
            &mut rng_for(0),
        )
        .unwrap();
        let rendered = render_template(&s.full_conversation(), cfg.format).unwrap();
        let tail = rendered.rsplit("<|im_start|>assistant\n").next().unwrap();
        assert!(tail.starts_with("Done.\n<|next_start|>"));
    }

    #[test]
    fn synthesize_is_deterministic_across_worker_counts() {
        let t = PromptTemplates::default();
        let gen = Generator::new(&OfflineBackend, &t);
        let mut inputs: Vec<PipelineInput> = (0..12)
            .map(|i| {
                let snaps = vec![lines(3, "a"), lines(4, "b"), lines(5, "c")];
                let mut r = ProcessRecord::new(
                    format!("rec{i:02}"),
                    Source::GitCommit,
                    snaps,
                    "python",
                    None,
                )
                .unwrap();
                r.id = format!("rec{i:02}");
                PipelineInput::Record(r)
            })
            .collect();
        inputs.push(PipelineInput::Seed {
            id: "seed".into(),
            code: TextDocument::new("def g():\n    x = 1\n    y = 2\n    return x + y\n"),
            language: "python".into(),
            persona: None,
        });
        let one = synthesize(&gen, &inputs, &PipelineConfig::default()).unwrap();
        let four = synthesize(
            &gen,
            &inputs,
            &PipelineConfig {
                workers: 4,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(one.samples, four.samples);
        assert_eq!(one.stats.attempted, inputs.len());
        assert_eq!(one.stats.emitted + one.stats.discarded, inputs.len());
        assert!(one.stats.emitted > 0);
    }
}
