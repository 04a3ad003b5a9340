//! Strategy × scenario benchmark grid and its report files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{example_pool, Scenario};
use crate::eval::{evaluate, summarize, Averaging, EvalReport, Metrics};
use crate::gateway::{Backend, GatewayError, Profiles};
use crate::ir::{Component, StateMachine};
use crate::postprocess::Warning;
use crate::strategies::{run_strategy, GenerationConfig, Strategy, StrategyError, Templates};
use crate::tables::emit_tables;
use crate::umple::emit_umple;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Umple,
    Tables,
    Both,
}

impl OutputFormat {
    pub fn parse(s: &str) -> Option<OutputFormat> {
        match s {
            "umple" => Some(OutputFormat::Umple),
            "tables" => Some(OutputFormat::Tables),
            "both" => Some(OutputFormat::Both),
            _ => None,
        }
    }
}

/// Writes `machine` as `<stem>.ump` and/or `<stem>.html`. A machine the Umple
/// subset cannot express is written as tables instead.
pub fn write_model(
    dir: &Path,
    stem: &str,
    machine: &StateMachine,
    format: OutputFormat,
) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut want_tables = format != OutputFormat::Umple;
    if format != OutputFormat::Tables {
        match emit_umple(machine) {
            Ok(text) => {
                let p = dir.join(format!("{stem}.ump"));
                fs::write(&p, text)?;
                written.push(p);
            }
            Err(e) => {
                log::warn!("{stem}: cannot write Umple ({e}); writing tables");
                want_tables = true;
            }
        }
    }
    if want_tables {
        let text = emit_tables(machine).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))?;
        let p = dir.join(format!("{stem}.html"));
        fs::write(&p, text)?;
        written.push(p);
    }
    Ok(written)
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub strategies: Vec<Strategy>,
    /// Empty means every scenario in the corpus.
    pub scenarios: Vec<String>,
    pub model: String,
    /// `None` keeps each strategy's default.
    pub shots: Option<usize>,
    pub profiles: Profiles,
    pub averaging: Averaging,
    pub jobs: usize,
}

impl BenchConfig {
    pub fn new(model: &str) -> Self {
        BenchConfig {
            strategies: Strategy::ALL.to_vec(),
            scenarios: Vec::new(),
            model: model.to_string(),
            shots: None,
            profiles: Profiles::default(),
            averaging: Averaging::Macro,
            jobs: 1,
        }
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("the corpus has no scenarios")]
    EmptyCorpus,
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
    #[error("no strategies selected")]
    NoStrategies,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Gateway,
    Pipeline,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunFailure {
    pub kind: FailureKind,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub machine: StateMachine,
    pub report: EvalReport,
    pub warnings: Vec<Warning>,
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub strategy: Strategy,
    pub scenario_id: String,
    pub outcome: Result<RunOutput, RunFailure>,
}

impl RunRecord {
    pub fn stem(&self) -> String {
        format!("{}__{}", self.strategy.key(), self.scenario_id)
    }
}

#[derive(Debug, Clone)]
pub struct BenchResult {
    pub averaging: Averaging,
    /// Grid order: strategies outer, scenarios inner.
    pub runs: Vec<RunRecord>,
    /// `None` when every run of the strategy failed.
    pub summaries: BTreeMap<Strategy, Option<EvalReport>>,
}

impl BenchResult {
    pub fn excluded(&self) -> impl Iterator<Item = (&RunRecord, &RunFailure)> {
        self.runs.iter().filter_map(|r| r.outcome.as_ref().err().map(|e| (r, e)))
    }
}

pub type BackendFactory<'a> =
    dyn Fn(Strategy, &Scenario) -> Result<Box<dyn Backend + 'a>, GatewayError> + Sync + 'a;

fn run_one(
    strategy: Strategy,
    scenario: &Scenario,
    corpus: &[Scenario],
    config: &BenchConfig,
    templates: &Templates,
    backend_for: &BackendFactory<'_>,
) -> Result<RunOutput, RunFailure> {
    let gateway = |message: String| RunFailure {
        kind: FailureKind::Gateway,
        message,
    };
    let pipeline = |message: String| RunFailure {
        kind: FailureKind::Pipeline,
        message,
    };
    let backend = backend_for(strategy, scenario).map_err(|e| gateway(e.to_string()))?;
    let mut gen = GenerationConfig::new(strategy, &config.model, example_pool(corpus));
    if let Some(n) = config.shots {
        gen.shots = n;
    }
    gen.profiles = config.profiles.clone();
    let result = run_strategy(scenario, corpus, &gen, templates, backend.as_ref()).map_err(|e| match e {
        StrategyError::Gateway { .. } => gateway(e.to_string()),
        other => pipeline(other.to_string()),
    })?;
    let report = evaluate(&result.machine, &scenario.truth, &scenario.aliases)
        .map_err(|e| pipeline(format!("evaluation: {e}")))?;
    Ok(RunOutput {
        machine: result.machine,
        report,
        warnings: result.warnings,
    })
}

/// Runs every selected strategy on every selected scenario with at most
/// `config.jobs` runs in flight, then averages the per-scenario reports of
/// each strategy. Failed runs are kept in `runs` and left out of averages.
pub fn run_bench(
    corpus: &[Scenario],
    config: &BenchConfig,
    templates: &Templates,
    backend_for: &BackendFactory<'_>,
) -> Result<BenchResult, BenchError> {
    if corpus.is_empty() {
        return Err(BenchError::EmptyCorpus);
    }
    if config.strategies.is_empty() {
        return Err(BenchError::NoStrategies);
    }
    let selected: Vec<&Scenario> = if config.scenarios.is_empty() {
        corpus.iter().collect()
    } else {
        config
            .scenarios
            .iter()
            .map(|id| {
                corpus
                    .iter()
                    .find(|s| &s.id == id)
                    .ok_or_else(|| BenchError::UnknownScenario(id.clone()))
            })
            .collect::<Result<_, _>>()?
    };
    let grid: Vec<(Strategy, &Scenario)> = config
        .strategies
        .iter()
        .flat_map(|&st| selected.iter().map(move |&sc| (st, sc)))
        .collect();
    let slots: Vec<Mutex<Option<Result<RunOutput, RunFailure>>>> =
        grid.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = config.jobs.clamp(1, grid.len().max(1));
    thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(strategy, scenario)) = grid.get(i) else {
                    break;
                };
                log::info!("running {strategy} on {}", scenario.id);
                let out = run_one(strategy, scenario, corpus, config, templates, backend_for);
                *slots[i].lock().unwrap() = Some(out);
            });
        }
    });
    let runs: Vec<RunRecord> = grid
        .iter()
        .zip(slots)
        .map(|(&(strategy, scenario), slot)| RunRecord {
            strategy,
            scenario_id: scenario.id.clone(),
            outcome: slot.into_inner().unwrap().expect("every grid cell is run"),
        })
        .collect();
    let mut summaries = BTreeMap::new();
    for &st in &config.strategies {
        let reports: Vec<EvalReport> = runs
            .iter()
            .filter(|r| r.strategy == st)
            .filter_map(|r| r.outcome.as_ref().ok().map(|o| o.report.clone()))
            .collect();
        summaries.insert(st, summarize(&reports, config.averaging).ok());
    }
    Ok(BenchResult {
        averaging: config.averaging,
        runs,
        summaries,
    })
}

fn cell(m: Option<Metrics>, pick: fn(&Metrics) -> f64) -> String {
    m.map(|m| format!("{:.4}", pick(&m))).unwrap_or_else(|| "-".to_string())
}

fn md_row(out: &mut String, cells: &[String]) {
    let _ = writeln!(out, "| {} |", cells.join(" | "));
}

fn md_rule(out: &mut String, columns: usize) {
    let mut cells = vec!["---".to_string()];
    cells.extend((1..columns).map(|_| "---:".to_string()));
    md_row(out, &cells);
}

/// Markdown summary: F1 by component and strategy, the overall P/R/F1 table,
/// one P/R/F1 table per strategy and the list of excluded runs.
pub fn summary_markdown(result: &BenchResult) -> String {
    let mut out = String::new();
    let strategies: Vec<Strategy> = result.summaries.keys().copied().collect();
    let _ = writeln!(out, "# Benchmark summary\n");
    let _ = writeln!(out, "Averaging: {}. Metrics use four decimals; `-` marks a component absent from every scored scenario.\n", result.averaging.key());

    let _ = writeln!(out, "## F1 by component\n");
    let mut head = vec!["Component".to_string()];
    head.extend(strategies.iter().map(|s| s.key().to_string()));
    md_row(&mut out, &head);
    md_rule(&mut out, head.len());
    let summary = |s: &Strategy| result.summaries.get(s).cloned().flatten();
    for c in Component::ALL {
        let mut row = vec![c.label().to_string()];
        row.extend(strategies.iter().map(|s| cell(summary(s).and_then(|r| r.metrics(c)), |m| m.f1)));
        md_row(&mut out, &row);
    }
    let mut row = vec!["All".to_string()];
    row.extend(strategies.iter().map(|s| cell(summary(s).and_then(|r| r.aggregate), |m| m.f1)));
    md_row(&mut out, &row);

    let _ = writeln!(out, "\n## Overall\n");
    let head: Vec<String> = ["Strategy", "P", "R", "F1", "Scenarios"].map(String::from).to_vec();
    md_row(&mut out, &head);
    md_rule(&mut out, head.len());
    for s in &strategies {
        let rep = summary(s);
        let agg = rep.as_ref().and_then(|r| r.aggregate);
        md_row(
            &mut out,
            &[
                s.key().to_string(),
                cell(agg, |m| m.precision),
                cell(agg, |m| m.recall),
                cell(agg, |m| m.f1),
                rep.map(|r| r.scenarios).unwrap_or(0).to_string(),
            ],
        );
    }

    for s in &strategies {
        let _ = writeln!(out, "\n## {}\n", s.key());
        let head: Vec<String> = ["Component", "P", "R", "F1"].map(String::from).to_vec();
        md_row(&mut out, &head);
        md_rule(&mut out, head.len());
        let rep = summary(s);
        for c in Component::ALL {
            let m = rep.as_ref().and_then(|r| r.metrics(c));
            md_row(
                &mut out,
                &[c.label().to_string(), cell(m, |m| m.precision), cell(m, |m| m.recall), cell(m, |m| m.f1)],
            );
        }
        let m = rep.as_ref().and_then(|r| r.aggregate);
        md_row(
            &mut out,
            &["All".to_string(), cell(m, |m| m.precision), cell(m, |m| m.recall), cell(m, |m| m.f1)],
        );
    }

    let excluded: Vec<_> = result.excluded().collect();
    if !excluded.is_empty() {
        let _ = writeln!(out, "\n## Excluded runs\n");
        for (r, f) in excluded {
            let _ = writeln!(out, "- {} on {}: {}", r.strategy.key(), r.scenario_id, f.message);
        }
    }
    out
}

#[derive(Serialize)]
struct RunJson<'a> {
    strategy: Strategy,
    scenario: &'a str,
    report: Option<&'a EvalReport>,
    warnings: Vec<String>,
    failure: Option<&'a RunFailure>,
}

#[derive(Serialize)]
struct SummaryJson<'a> {
    averaging: Averaging,
    strategies: &'a BTreeMap<Strategy, Option<EvalReport>>,
    excluded: Vec<String>,
}

/// Writes `summary.md`, `summary.json` and, under `runs/`, one JSON report and
/// the generated model per run. Returns the written paths in a fixed order.
pub fn write_reports(
    out_dir: &Path,
    result: &BenchResult,
    format: OutputFormat,
) -> io::Result<Vec<PathBuf>> {
    let runs_dir = out_dir.join("runs");
    fs::create_dir_all(&runs_dir)?;
    let mut written = Vec::new();
    for r in &result.runs {
        let stem = r.stem();
        let (report, warnings, failure) = match &r.outcome {
            Ok(o) => (Some(&o.report), o.warnings.iter().map(|w| w.to_string()).collect(), None),
            Err(f) => (None, Vec::new(), Some(f)),
        };
        let json = RunJson {
            strategy: r.strategy,
            scenario: &r.scenario_id,
            report,
            warnings,
            failure,
        };
        let p = runs_dir.join(format!("{stem}.json"));
        fs::write(&p, to_json(&json)?)?;
        written.push(p);
        if let Ok(o) = &r.outcome {
            written.extend(write_model(&runs_dir, &stem, &o.machine, format)?);
        }
    }
    let summary = SummaryJson {
        averaging: result.averaging,
        strategies: &result.summaries,
        excluded: result.excluded().map(|(r, _)| r.stem()).collect(),
    };
    let p = out_dir.join("summary.json");
    fs::write(&p, to_json(&summary)?)?;
    written.push(p);
    let p = out_dir.join("summary.md");
    fs::write(&p, summary_markdown(result))?;
    written.push(p);
    Ok(written)
}

fn to_json<T: Serialize>(v: &T) -> io::Result<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(io::Error::other)?;
    s.push('\n');
    Ok(s)
}
