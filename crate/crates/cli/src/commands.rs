//! One function per subcommand.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use serde_json::{json, Value};

use assistkit::apeval::{
    evaluate, load_suite, reference_runner, BackendCompleter, BenchSuite, Completer, EvalConfig,
    EvalReport, NullCompleter, OracleCompleter,
};
use assistkit::conversation::{generation_prompt, render_template, Conversation, Message, Role};
use assistkit::edit_codec::{diff as line_diff, render_edit, TextDocument};
use assistkit::packing::{
    measure, pack_ffd, ByteCounter, CommandCounter, LengthCounter, SizedItem, WhitespaceCounter,
};
use assistkit::pipeline::inputs::read_inputs;
use assistkit::pipeline::{
    read_jsonl, synthesize, write_jsonl, Discard, Generator, PipelineConfig, SynthStats,
    TrainingSample, DEFAULT_TIMEPOINT_DECAY,
};
use assistkit::prompts::PromptTemplates;
use assistkit::runner::{ProcessRunner, Runner};

use crate::config::RunConfig;
use crate::{backend, DiffArgs, EvalArgs, PackArgs, RenderArgs, SynthArgs};

fn templates(cfg: &RunConfig) -> Result<PromptTemplates> {
    match &cfg.templates {
        Some(dir) => PromptTemplates::load_dir(dir)
            .with_context(|| format!("loading templates from {}", dir.display())),
        None => Ok(PromptTemplates::default()),
    }
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    match stdout
        .write_all(text.as_bytes())
        .and_then(|()| stdout.flush())
    {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    emit(&(serde_json::to_string_pretty(value)? + "\n"))
}

fn write_lines<T: serde::Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut out =
        BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for row in rows {
        serde_json::to_writer(&mut out, row)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn stats_summary(stats: &SynthStats) -> String {
    let mix: Vec<String> = stats
        .type_mix()
        .iter()
        .map(|(t, pct)| format!("{t} {pct:.1}%"))
        .collect();
    let mut text = format!(
        "attempted {}, emitted {}, discarded {}\ntype mix: {}\nhistory snippets mean/max: {:.2} / {}\ninput chars mean/max: {:.1} / {}\noutput chars mean/max: {:.1} / {}\n",
        stats.attempted,
        stats.emitted,
        stats.discarded,
        mix.join(", "),
        stats.history_snippets.mean,
        stats.history_snippets.max,
        stats.input_chars.mean,
        stats.input_chars.max,
        stats.output_chars.mean,
        stats.output_chars.max,
    );
    for (reason, n) in &stats.discard_reasons {
        text.push_str(&format!("discarded {reason}: {n}\n"));
    }
    text
}

pub fn synth(cfg: &RunConfig, args: &SynthArgs, json_out: bool) -> Result<ExitCode> {
    let templates = templates(cfg)?;
    let loaded = read_inputs(&args.input, args.kind)
        .with_context(|| format!("reading {}", args.input.display()))?;
    let chat = backend::build(&cfg.backend)?;
    let mut gen = Generator::new(chat.as_ref(), &templates);
    if let Some(model) = &cfg.backend.model {
        gen.model_id = model.clone();
    }
    if let Some(t) = cfg.backend.temperature {
        gen.temperature = t;
    }
    if let Some(n) = cfg.backend.max_tokens {
        gen.max_tokens = n;
    }
    let config = PipelineConfig {
        global_seed: cfg.seed(),
        format: cfg.format(),
        window: cfg.window,
        timepoint_decay: args.decay.unwrap_or(DEFAULT_TIMEPOINT_DECAY),
        decompose_probability: args.decompose_probability,
        with_reasoning: args.reasoning,
        system_message: !args.no_system,
        workers: cfg.workers(),
    };
    let output = synthesize(&gen, &loaded.inputs, &config)?;

    let mut discards: Vec<Discard> = loaded.rejected;
    discards.extend(output.discards);
    discards.sort_by(|a, b| a.record_id.cmp(&b.record_id));
    let stats = SynthStats::compute(&output.samples, &discards);

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    write_jsonl(args.out.join("samples.jsonl"), &output.samples)?;
    write_lines(&args.out.join("discards.jsonl"), &discards)?;
    std::fs::write(
        args.out.join("stats.json"),
        serde_json::to_string_pretty(&stats)? + "\n",
    )?;

    if json_out {
        print_json(&json!({ "stats": stats, "type_mix": stats.type_mix() }))?;
    } else {
        emit(&stats_summary(&stats))?;
    }
    if stats.emitted == 0 {
        eprintln!("error: no samples were emitted");
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

pub fn eval(cfg: &RunConfig, args: &EvalArgs, json_out: bool) -> Result<ExitCode> {
    let suite = if args.suite == "toy" {
        BenchSuite::toy()
    } else {
        load_suite(&args.suite)?.suite
    };
    let completer: Box<dyn Completer> = match cfg.backend.endpoint.as_deref() {
        Some("oracle") => Box::new(OracleCompleter),
        Some("null") => Box::new(NullCompleter),
        _ => Box::new(BackendCompleter {
            backend: backend::build(&cfg.backend)?,
            model_id: cfg
                .backend
                .model
                .clone()
                .unwrap_or_else(|| "default".into()),
            max_tokens: cfg.backend.max_tokens.unwrap_or(2048),
        }),
    };
    let runner: Box<dyn Runner> = if args.runner == "reference" {
        Box::new(reference_runner(&suite))
    } else {
        Box::new(ProcessRunner::parse(&args.runner)?)
    };
    let defaults = EvalConfig::default();
    let config = EvalConfig {
        adapter: args.adapter,
        format: cfg.format(),
        base_timeout_s: args.base_timeout.unwrap_or(defaults.base_timeout_s),
        extra_timeout_s: args.extra_timeout.unwrap_or(defaults.extra_timeout_s),
        workers: cfg.workers(),
    };
    let report = evaluate(
        &suite,
        completer.as_ref(),
        runner.as_ref(),
        &templates(cfg)?,
        &config,
    );
    let overall = report.overall();
    let document = json!({
        "suite": suite.name,
        "adapter": config.adapter,
        "format": config.format,
        "overall": overall,
        "average": EvalReport::cell(&overall),
        "per_type": report.per_type,
        "tasks": report.tasks,
    });
    if let Some(path) = &args.out {
        std::fs::write(path, serde_json::to_string_pretty(&document)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    if json_out {
        print_json(&document)?;
    } else {
        emit(&report.to_table())?;
    }
    Ok(ExitCode::SUCCESS)
}

fn counter(spec: &str) -> Result<Box<dyn LengthCounter>> {
    Ok(match spec {
        "whitespace" => Box::new(WhitespaceCounter),
        "bytes" => Box::new(ByteCounter),
        other => match other.strip_prefix("cmd:") {
            Some(command) => Box::new(CommandCounter::parse(command)?),
            None => bail!("unknown counter `{other}` (whitespace, bytes or cmd:<program>)"),
        },
    })
}

fn first_row(path: &Path) -> Result<Option<Value>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    for line in BufReader::new(file).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            return Ok(Some(
                serde_json::from_str(&line).context("first row is not JSON")?,
            ));
        }
    }
    Ok(None)
}

fn pack_items(path: &Path, counter_spec: &str) -> Result<Vec<SizedItem>> {
    let is_manifest =
        matches!(first_row(path)?, Some(Value::Object(o)) if o.contains_key("length"));
    if is_manifest {
        let file = File::open(path)?;
        let mut items = Vec::new();
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            items.push(serde_json::from_str(&line).with_context(|| format!("line {}", idx + 1))?);
        }
        return Ok(items);
    }
    let samples = read_jsonl(File::open(path)?)?;
    let counter = counter(counter_spec)?;
    samples
        .iter()
        .map(|s| measure(s, counter.as_ref()).map_err(Into::into))
        .collect()
}

pub fn pack(_cfg: &RunConfig, args: &PackArgs, json_out: bool) -> Result<ExitCode> {
    let items = pack_items(&args.input, &args.counter)?;
    let bins = pack_ffd(&items, args.capacity)?;
    let rows: Vec<Value> = bins
        .iter()
        .enumerate()
        .map(|(i, b)| json!({ "bin": i, "capacity": b.capacity, "used": b.used(), "items": b.items }))
        .collect();
    let used: usize = bins.iter().map(|b| b.used()).sum();
    let summary = json!({
        "items": items.len(),
        "bins": bins.len(),
        "capacity": args.capacity,
        "fill": if bins.is_empty() { 0.0 } else { used as f64 / (bins.len() * args.capacity) as f64 },
    });
    match &args.out {
        Some(path) => {
            write_lines(path, &rows)?;
            if json_out {
                print_json(&summary)?;
            }
        }
        None => {
            let text: String = rows.iter().map(|r| format!("{r}\n")).collect();
            emit(&text)?;
        }
    }
    eprintln!(
        "packed {} items into {} bins of {}",
        items.len(),
        bins.len(),
        args.capacity
    );
    Ok(ExitCode::SUCCESS)
}

/// A conversation file, a bare message array, or a training sample. Samples
/// come back as (request, target) and fix the format unless one is given.
fn read_conversation(
    path: &Path,
) -> Result<(
    Conversation,
    Option<Message>,
    Option<assistkit::edit_codec::EditFormat>,
)> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if value.get("target").is_some() && value.get("conversation").is_some() {
        let sample: TrainingSample =
            serde_json::from_value(value).context("not a training sample")?;
        return Ok((
            sample.conversation,
            Some(sample.target),
            Some(sample.format),
        ));
    }
    let conv = if value.is_array() {
        Conversation::new(serde_json::from_value(value).context("not a message list")?)
    } else {
        serde_json::from_value(value).context("not a conversation")?
    };
    Ok((conv, None, None))
}

pub fn render(cfg: &RunConfig, args: &RenderArgs, json_out: bool) -> Result<ExitCode> {
    let (mut conv, target, sample_format) = read_conversation(&args.input)?;
    let format = cfg.format.or(sample_format).unwrap_or_else(|| cfg.format());
    if args.prompt {
        if conv
            .messages
            .last()
            .is_some_and(|m| m.role == Role::Assistant)
        {
            conv.messages.pop();
        }
    } else if let Some(target) = target {
        conv.push(target);
    }
    if let Some(k) = cfg.window {
        conv = conv.with_history_window(k);
    }
    let text = if args.prompt {
        generation_prompt(&conv, format)?
    } else {
        render_template(&conv, format)?
    };
    if json_out {
        print_json(&json!({ "format": format, "text": text }))?;
    } else {
        emit(&text)?;
    }
    Ok(ExitCode::SUCCESS)
}

pub fn diff(cfg: &RunConfig, args: &DiffArgs, json_out: bool) -> Result<ExitCode> {
    let read = |p: &Path| {
        std::fs::read_to_string(p)
            .map(TextDocument::new)
            .with_context(|| format!("reading {}", p.display()))
    };
    let (old, new) = (read(&args.old)?, read(&args.new)?);
    let script = line_diff(&old, &new);
    let rendered = render_edit(&script, &old, &new, cfg.format())?;
    if json_out {
        print_json(
            &json!({ "format": rendered.format, "payload": rendered.payload, "hunks": script.hunks }),
        )?;
    } else {
        emit(&rendered.payload)?;
    }
    Ok(ExitCode::SUCCESS)
}
