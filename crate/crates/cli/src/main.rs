//! Command-line entry point for the assistkit toolkit.

mod backend;
mod commands;
mod config;

use std::fmt::Display;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use assistkit::apeval::Adapter;
use assistkit::edit_codec::EditFormat;
use assistkit::llm_client::CassetteMode;
use assistkit::pipeline::inputs::InputKind;

use config::{overlay, RunConfig};

fn parse_with<T>(s: &str) -> Result<T, String>
where
    T: FromStr,
    T::Err: Display,
{
    s.parse::<T>().map_err(|e| e.to_string())
}

#[derive(Debug, Parser)]
#[command(
    name = "assistkit",
    version,
    about = "Build, render and evaluate programming-assistant conversations"
)]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Global seed every random choice is derived from.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Edit format: wf, ud, lc or sr.
    #[arg(long, global = true, value_parser = parse_with::<EditFormat>)]
    format: Option<EditFormat>,
    /// Keep at most this many history messages.
    #[arg(long, global = true)]
    window: Option<usize>,
    /// Directory with prompt template overrides (`<name>.txt`).
    #[arg(long, global = true, value_name = "DIR")]
    templates: Option<PathBuf>,
    /// Machine-readable JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
    /// More log output (-v info, -vv debug). RUST_LOG takes precedence.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct BackendArgs {
    /// Chat-completions base URL, or `mock` for the offline stand-in.
    #[arg(long)]
    endpoint: Option<String>,
    /// Model name sent with every request.
    #[arg(long)]
    model: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long, value_name = "VAR")]
    api_key_env: Option<String>,
    /// Record/replay file for backend calls.
    #[arg(long, value_name = "FILE")]
    cassette: Option<PathBuf>,
    /// record (default) or replay.
    #[arg(long, value_parser = parse_with::<CassetteMode>)]
    cassette_mode: Option<CassetteMode>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Turn coding-process inputs into training samples.
    Synth(SynthArgs),
    /// Score a model on a benchmark suite.
    Eval(EvalArgs),
    /// Pack samples or sized items into fixed-capacity bins.
    Pack(PackArgs),
    /// Render a conversation with the chat template.
    Render(RenderArgs),
    /// Print the change between two files in an edit format.
    Diff(DiffArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSONL input file.
    input: PathBuf,
    /// What the input rows are: git, submissions, seeds or records.
    #[arg(long, default_value = "records", value_parser = parse_with::<InputKind>)]
    kind: InputKind,
    /// Output directory for samples.jsonl, discards.jsonl and stats.json.
    #[arg(long, short, value_name = "DIR")]
    out: PathBuf,
    /// Time-point decay factor.
    #[arg(long)]
    decay: Option<f64>,
    /// Override the per-source probability of splitting multi-hunk steps.
    #[arg(long)]
    decompose_probability: Option<f64>,
    /// Put the assistant's chat before its code change.
    #[arg(long)]
    reasoning: bool,
    /// Leave out the system message.
    #[arg(long)]
    no_system: bool,
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Suite JSON file, or `toy` for the bundled 8-task suite.
    #[arg(long, default_value = "toy")]
    suite: String,
    /// Prompt adapter: native, base or instruct.
    #[arg(long, default_value = "native", value_parser = parse_with::<Adapter>)]
    adapter: Adapter,
    /// Test executor command, or `reference` for the in-process stub.
    #[arg(long, default_value = "reference")]
    runner: String,
    /// Write the full report as JSON here.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Per-run timeout for base tests, seconds.
    #[arg(long)]
    base_timeout: Option<f64>,
    /// Per-run timeout for extra tests, seconds.
    #[arg(long)]
    extra_timeout: Option<f64>,
    /// Besides the backend endpoints, `oracle` and `null` select model stubs.
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(Debug, Args)]
pub struct PackArgs {
    /// JSONL of `{"id", "length"}` items or of training samples.
    input: PathBuf,
    /// Bin capacity.
    #[arg(long)]
    capacity: usize,
    /// Length of a sample: whitespace, bytes, or `cmd:<program args>`.
    #[arg(long, default_value = "whitespace")]
    counter: String,
    /// Write the bin manifest here instead of stdout.
    #[arg(long, short, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// A conversation JSON file (`{"messages": [...]}` or a bare message
    /// array) or a training sample.
    input: PathBuf,
    /// Stop at the assistant header, as a generation prompt.
    #[arg(long)]
    prompt: bool,
}

#[derive(Debug, Args)]
pub struct DiffArgs {
    old: PathBuf,
    new: PathBuf,
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    overlay(&mut cfg.seed, cli.seed);
    overlay(&mut cfg.workers, cli.workers);
    overlay(&mut cfg.format, cli.format);
    overlay(&mut cfg.window, cli.window);
    overlay(&mut cfg.templates, cli.templates);
    if let Some(backend) = match &cli.command {
        Command::Synth(a) => Some(&a.backend),
        Command::Eval(a) => Some(&a.backend),
        _ => None,
    } {
        let b = &mut cfg.backend;
        overlay(&mut b.endpoint, backend.endpoint.clone());
        overlay(&mut b.model, backend.model.clone());
        overlay(&mut b.api_key_env, backend.api_key_env.clone());
        overlay(&mut b.cassette, backend.cassette.clone());
        overlay(&mut b.cassette_mode, backend.cassette_mode);
    }
    match &cli.command {
        Command::Synth(args) => commands::synth(&cfg, args, cli.json),
        Command::Eval(args) => commands::eval(&cfg, args, cli.json),
        Command::Pack(args) => commands::pack(&cfg, args, cli.json),
        Command::Render(args) => commands::render(&cfg, args, cli.json),
        Command::Diff(args) => commands::diff(&cfg, args, cli.json),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
