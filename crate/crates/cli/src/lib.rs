//! `smforge` command line: generate, evaluate and bench.

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use smforge_core::bench::{
    run_bench, summary_markdown, write_model, write_reports, BenchConfig, FailureKind,
    OutputFormat,
};
use smforge_core::corpus::{example_pool, load_corpus, load_scenario, Scenario};
use smforge_core::eval::{evaluate, format_report, Averaging};
use smforge_core::gateway::{
    record_wrap, Backend, GatewayError, HttpBackend, LiveConfig, Profiles, Provider,
    ReplayBackend, Transcript,
};
use smforge_core::ir::StateMachine;
use smforge_core::postprocess::finalize;
use smforge_core::strategies::{run_strategy, GenerationConfig, Strategy, StrategyError, Templates};
use smforge_core::tables::parse_response;
use smforge_core::umple::{parse_umple, ParseMode};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PIPELINE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_GATEWAY: i32 = 3;

const DEFAULT_MODEL: &str = "gpt-4o";

#[derive(Parser, Debug)]
#[command(name = "smforge", version, about = "Generate state machines from text with LLM prompting strategies and score them")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate one state machine for one scenario.
    Generate(GenerateArgs),
    /// Score a generated model against a scenario's ground truth.
    Evaluate(EvaluateArgs),
    /// Run a strategy × scenario grid and write summary tables.
    Bench(BenchArgs),
}

#[derive(Args, Debug, Clone)]
struct SamplingArgs {
    /// LLM model name; with --replay it defaults to the recorded model.
    #[arg(long)]
    model: Option<String>,
    /// Number of few-shot examples (strategy default when omitted).
    #[arg(long)]
    shots: Option<usize>,
    /// TOML file with `deterministic`, `creative` and `max_tokens` keys.
    #[arg(long, value_name = "PATH")]
    profiles: Option<PathBuf>,
    #[arg(long, value_name = "X")]
    temp_deterministic: Option<f64>,
    #[arg(long, value_name = "Y")]
    temp_creative: Option<f64>,
    #[arg(long, value_name = "N")]
    max_tokens: Option<u32>,
    /// openai or anthropic (guessed from the model name when omitted).
    #[arg(long)]
    provider: Option<String>,
    /// Directory of prompt templates overriding the built-in ones.
    #[arg(long, value_name = "DIR")]
    templates: Option<PathBuf>,
    /// Scenario corpus root.
    #[arg(long, value_name = "DIR", default_value = "corpus")]
    corpus: PathBuf,
    /// umple, tables or both.
    #[arg(long, default_value = "both")]
    format: String,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long)]
    strategy: String,
    /// Scenario id in the corpus, or a scenario directory.
    #[arg(long)]
    scenario: String,
    #[command(flatten)]
    sampling: SamplingArgs,
    /// Write the transcript of this run to PATH.
    #[arg(long, value_name = "PATH")]
    record: Option<PathBuf>,
    /// Answer from a transcript file, or from `<strategy>__<scenario>.jsonl`
    /// inside a directory.
    #[arg(long, value_name = "PATH")]
    replay: Option<PathBuf>,
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Generated model (`.ump`, or `.html` tables).
    generated: PathBuf,
    /// Scenario id in the corpus, or a scenario directory.
    #[arg(long)]
    scenario: String,
    #[arg(long, value_name = "DIR", default_value = "corpus")]
    corpus: PathBuf,
    /// Directory for the JSON report.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Strategies to run (repeatable or comma separated; all when omitted).
    #[arg(long, value_delimiter = ',')]
    strategy: Vec<String>,
    /// Scenario ids (repeatable or comma separated; all when omitted).
    #[arg(long, value_delimiter = ',')]
    scenario: Vec<String>,
    #[command(flatten)]
    sampling: SamplingArgs,
    /// Directory to write one transcript per run into.
    #[arg(long, value_name = "DIR")]
    record: Option<PathBuf>,
    /// Directory of `<strategy>__<scenario>.jsonl` transcripts.
    #[arg(long, value_name = "DIR")]
    replay: Option<PathBuf>,
    #[arg(long, value_name = "DIR", default_value = "out/bench")]
    out: PathBuf,
    /// macro or pooled.
    #[arg(long, default_value = "macro")]
    avg: String,
    /// Runs in flight at once.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

/// A failure carrying the exit code it maps to.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(m: impl fmt::Display) -> Self {
        Failure { code: EXIT_USAGE, message: m.to_string() }
    }
    fn pipeline(m: impl fmt::Display) -> Self {
        Failure { code: EXIT_PIPELINE, message: m.to_string() }
    }
    fn gateway(m: impl fmt::Display) -> Self {
        Failure { code: EXIT_GATEWAY, message: m.to_string() }
    }
}

impl From<StrategyError> for Failure {
    fn from(e: StrategyError) -> Self {
        match e {
            StrategyError::Gateway { .. } => Failure::gateway(e),
            StrategyError::InsufficientExamples { .. } | StrategyError::Config(_) => Failure::usage(e),
            other => Failure::pipeline(other),
        }
    }
}

type Outcome = Result<(), Failure>;

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a, out, err),
        Command::Evaluate(a) => cmd_evaluate(a, out, err),
        Command::Bench(a) => cmd_bench(a, out, err),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn parse_strategy(s: &str) -> Result<Strategy, Failure> {
    Strategy::parse(s).ok_or_else(|| {
        let known: Vec<&str> = Strategy::ALL.iter().map(|s| s.key()).collect();
        Failure::usage(format!("unknown strategy {s:?}; expected one of {}", known.join(", ")))
    })
}

fn parse_format(s: &str) -> Result<OutputFormat, Failure> {
    OutputFormat::parse(s).ok_or_else(|| Failure::usage(format!("unknown format {s:?}; expected umple, tables or both")))
}

fn load_all(root: &Path) -> Result<Vec<Scenario>, Failure> {
    load_corpus(root).map_err(Failure::usage)
}

/// A corpus id, or a directory holding one scenario.
fn resolve_scenario(spec: &str, corpus: &[Scenario]) -> Result<Scenario, Failure> {
    if let Some(s) = corpus.iter().find(|s| s.id == spec) {
        return Ok(s.clone());
    }
    let dir = Path::new(spec);
    if dir.is_dir() {
        return load_scenario(dir).map_err(Failure::usage);
    }
    Err(Failure::usage(format!("unknown scenario {spec:?}")))
}

fn profiles(a: &SamplingArgs) -> Result<Profiles, Failure> {
    let mut p = match &a.profiles {
        Some(path) => Profiles::load(path).map_err(Failure::usage)?,
        None => Profiles::default(),
    };
    if let Some(t) = a.temp_deterministic {
        p.deterministic = t;
    }
    if let Some(t) = a.temp_creative {
        p.creative = t;
    }
    if let Some(n) = a.max_tokens {
        p.max_tokens = n;
    }
    for t in [p.deterministic, p.creative] {
        if !(0.0..=2.0).contains(&t) {
            return Err(Failure::usage(format!("temperature {t} outside [0, 2]")));
        }
    }
    if p.max_tokens == 0 {
        return Err(Failure::usage("--max-tokens must be at least 1"));
    }
    Ok(p)
}

fn templates(a: &SamplingArgs) -> Result<Templates, Failure> {
    match &a.templates {
        Some(dir) => Templates::with_overrides(dir).map_err(Failure::usage),
        None => Ok(Templates::default()),
    }
}

fn live_backend(a: &SamplingArgs, model: &str) -> Result<HttpBackend, Failure> {
    let provider = match &a.provider {
        Some(p) => Provider::parse(p).ok_or_else(|| Failure::usage(format!("unknown provider {p:?}")))?,
        None => Provider::for_model(model),
    };
    let cfg = LiveConfig::from_env(provider).map_err(Failure::gateway)?;
    HttpBackend::new(cfg).map_err(Failure::gateway)
}

/// Model recorded in the first entry of a transcript file.
fn recorded_model(path: &Path) -> Option<String> {
    Transcript::load(path).ok()?.entries.first().map(|e| e.request.model.clone())
}

fn first_transcript(dir: &Path) -> Option<PathBuf> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .ok()?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    files.into_iter().next()
}

fn cmd_generate(a: GenerateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    let strategy = parse_strategy(&a.strategy)?;
    let format = parse_format(&a.sampling.format)?;
    let corpus = load_all(&a.sampling.corpus)?;
    let scenario = resolve_scenario(&a.scenario, &corpus)?;
    let profiles = profiles(&a.sampling)?;
    let templates = templates(&a.sampling)?;
    let replay_file = a.replay.as_ref().map(|p| {
        if p.is_dir() {
            p.join(Transcript::file_name(strategy.key(), &scenario.id))
        } else {
            p.clone()
        }
    });
    let model = a
        .sampling
        .model
        .clone()
        .or_else(|| replay_file.as_deref().and_then(recorded_model))
        .unwrap_or_else(|| DEFAULT_MODEL.to_string());

    let inner: Box<dyn Backend> = match &replay_file {
        Some(p) => Box::new(ReplayBackend::from_file(p).map_err(Failure::gateway)?),
        None => Box::new(live_backend(&a.sampling, &model)?),
    };
    let backend: Box<dyn Backend> = match &a.record {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(Failure::pipeline)?;
            }
            Box::new(record_wrap(inner, p).map_err(Failure::pipeline)?)
        }
        None => inner,
    };

    let mut config = GenerationConfig::new(strategy, &model, example_pool(&corpus));
    if let Some(n) = a.sampling.shots {
        config.shots = n;
    }
    config.profiles = profiles;
    let result = run_strategy(&scenario, &corpus, &config, &templates, backend.as_ref())?;

    let stem = format!("{}__{}", strategy.key(), scenario.id);
    let written = write_model(&a.out, &stem, &result.machine, format).map_err(Failure::pipeline)?;
    let warnings: String = result.warnings.iter().map(|w| format!("{w}\n")).collect();
    let warn_path = a.out.join(format!("{stem}.warnings.txt"));
    fs::write(&warn_path, &warnings).map_err(Failure::pipeline)?;
    let _ = write!(err, "{warnings}");
    for p in written.iter().chain([&warn_path]) {
        let _ = writeln!(out, "wrote {}", p.display());
    }
    if let Some(p) = &a.record {
        let _ = writeln!(out, "wrote {}", p.display());
    }
    Ok(())
}

fn load_generated(path: &Path) -> Result<StateMachine, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let is_tables = path
        .extension()
        .is_some_and(|x| x.eq_ignore_ascii_case("html") || x.eq_ignore_ascii_case("htm"));
    if is_tables {
        let parsed = parse_response(&text);
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("Generated");
        let (machine, _) = finalize(&parsed.model, name).map_err(Failure::pipeline)?;
        return Ok(machine);
    }
    parse_umple(&text, ParseMode::Strict)
        .map(|doc| doc.machine)
        .map_err(|e| Failure::pipeline(format!("{}: {e}", path.display())))
}

fn cmd_evaluate(a: EvaluateArgs, out: &mut dyn Write, _err: &mut dyn Write) -> Outcome {
    let corpus = load_all(&a.corpus)?;
    let scenario = resolve_scenario(&a.scenario, &corpus)?;
    let gen = load_generated(&a.generated)?;
    let report = evaluate(&gen, &scenario.truth, &scenario.aliases).map_err(Failure::pipeline)?;
    let _ = write!(out, "{}", format_report(&report));
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir).map_err(Failure::pipeline)?;
        let stem = a.generated.file_stem().and_then(|s| s.to_str()).unwrap_or("generated");
        let path = dir.join(format!("{stem}.report.json"));
        let mut json = serde_json::to_string_pretty(&report).map_err(Failure::pipeline)?;
        json.push('\n');
        fs::write(&path, json).map_err(Failure::pipeline)?;
        let _ = writeln!(out, "wrote {}", path.display());
    }
    Ok(())
}

fn cmd_bench(a: BenchArgs, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    let strategies = if a.strategy.is_empty() {
        Strategy::ALL.to_vec()
    } else {
        a.strategy.iter().map(|s| parse_strategy(s)).collect::<Result<_, _>>()?
    };
    let format = parse_format(&a.sampling.format)?;
    let averaging = Averaging::parse(&a.avg)
        .ok_or_else(|| Failure::usage(format!("unknown averaging {:?}; expected macro or pooled", a.avg)))?;
    if a.jobs == 0 {
        return Err(Failure::usage("--jobs must be at least 1"));
    }
    let corpus = load_all(&a.sampling.corpus)?;
    let templates = templates(&a.sampling)?;
    let model = a
        .sampling
        .model
        .clone()
        .or_else(|| a.replay.as_deref().and_then(first_transcript).and_then(|p| recorded_model(&p)))
        .unwrap_or_else(|| DEFAULT_MODEL.to_string());

    let mut config = BenchConfig::new(&model);
    config.strategies = strategies;
    config.scenarios = a.scenario.clone();
    config.shots = a.sampling.shots;
    config.profiles = profiles(&a.sampling)?;
    config.averaging = averaging;
    config.jobs = a.jobs;

    let live = match &a.replay {
        Some(_) => None,
        None => Some(live_backend(&a.sampling, &model)?),
    };
    if let Some(dir) = &a.record {
        fs::create_dir_all(dir).map_err(Failure::pipeline)?;
    }
    let factory = |st: Strategy, s: &Scenario| -> Result<Box<dyn Backend + '_>, GatewayError> {
        let name = Transcript::file_name(st.key(), &s.id);
        let inner: Box<dyn Backend + '_> = match (&a.replay, &live) {
            (Some(dir), _) => Box::new(ReplayBackend::from_file(&dir.join(&name))?),
            (None, Some(http)) => Box::new(http),
            (None, None) => unreachable!("a live backend exists without --replay"),
        };
        match &a.record {
            Some(dir) => Ok(Box::new(record_wrap(inner, &dir.join(&name))?)),
            None => Ok(inner),
        }
    };
    let result = run_bench(&corpus, &config, &templates, &factory).map_err(Failure::usage)?;
    write_reports(&a.out, &result, format).map_err(Failure::pipeline)?;
    let _ = write!(out, "{}", summary_markdown(&result));

    let excluded: Vec<_> = result.excluded().collect();
    for (r, f) in &excluded {
        let _ = writeln!(err, "warning: {} on {} excluded from averages: {}", r.strategy, r.scenario_id, f.message);
    }
    if excluded.len() == result.runs.len() {
        let any_gateway = excluded.iter().any(|(_, f)| f.kind == FailureKind::Gateway);
        let msg = "every run failed";
        return Err(if any_gateway { Failure::gateway(msg) } else { Failure::pipeline(msg) });
    }
    Ok(())
}
