//! The four generation strategies: one-shot Umple, structure-driven steps,
//! event-driven steps and the hybrid of the first two.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Scenario;
use crate::gateway::{
    Backend, CompletionRequest, CompletionResponse, GatewayError, ProfileKind, Profiles,
    Transcript, TranscriptEntry,
};
use crate::ir::{canonical, to_identifier, Component, IdentCase, StateMachine};
use crate::postprocess::{dedupe, finalize, MergeMode, MergeState, PostError, StepOutcome, Warning};
use crate::tables::{emit_partial, emit_tables, parse_response};
use crate::umple::{emit_umple, parse_umple, ParseMode, Severity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    SinglePrompt,
    StructureDriven,
    EventDriven,
    Hybrid,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::SinglePrompt,
        Strategy::StructureDriven,
        Strategy::EventDriven,
        Strategy::Hybrid,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Strategy::SinglePrompt => "single_prompt",
            Strategy::StructureDriven => "structure_driven",
            Strategy::EventDriven => "event_driven",
            Strategy::Hybrid => "hybrid",
        }
    }

    pub fn parse(s: &str) -> Option<Strategy> {
        Strategy::ALL.into_iter().find(|x| x.key() == s)
    }

    pub fn default_shots(self) -> usize {
        match self {
            Strategy::SinglePrompt => 3,
            _ => 2,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

#[derive(Debug, Error)]
pub enum StrategyError {
    #[error("need {need} few-shot examples but only {have} remain after excluding the test scenario")]
    InsufficientExamples { need: usize, have: usize },
    #[error("unknown scenario {0:?} in example pool")]
    UnknownScenario(String),
    #[error("template {name}: {message}")]
    Template { name: String, message: String },
    #[error("step {step}: {source}")]
    Gateway {
        step: String,
        #[source]
        source: GatewayError,
    },
    #[error("{0}")]
    Finalize(#[from] PostError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationConfig {
    pub strategy: Strategy,
    pub model: String,
    pub shots: usize,
    pub example_pool: Vec<String>,
    /// Steps sampled with the creative profile.
    pub creative_steps: BTreeSet<String>,
    pub profiles: Profiles,
}

impl GenerationConfig {
    pub fn new(strategy: Strategy, model: &str, example_pool: Vec<String>) -> Self {
        GenerationConfig {
            strategy,
            model: model.to_string(),
            shots: strategy.default_shots(),
            example_pool,
            creative_steps: ["S1", "E1"].map(String::from).into(),
            profiles: Profiles::default(),
        }
    }

    pub fn check(&self) -> Result<(), StrategyError> {
        if self.shots > self.example_pool.len() {
            return Err(StrategyError::Config(format!(
                "{} shots requested from a pool of {}",
                self.shots,
                self.example_pool.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExampleFormat {
    Umple,
    Tables,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExampleBlock {
    pub scenario_id: String,
    pub text: String,
}

/// The first `n` pool scenarios other than `test_id`, each rendered as its
/// description followed by its ground truth.
pub fn build_fewshot(
    pool: &[String],
    corpus: &[Scenario],
    test_id: &str,
    n: usize,
    format: ExampleFormat,
) -> Result<Vec<ExampleBlock>, StrategyError> {
    let remaining: Vec<&String> = pool.iter().filter(|id| *id != test_id).collect();
    if remaining.len() < n {
        return Err(StrategyError::InsufficientExamples {
            need: n,
            have: remaining.len(),
        });
    }
    remaining
        .into_iter()
        .take(n)
        .map(|id| {
            let s = corpus
                .iter()
                .find(|s| &s.id == id)
                .ok_or_else(|| StrategyError::UnknownScenario(id.clone()))?;
            let solution = match format {
                ExampleFormat::Umple => emit_umple(&s.truth).map_err(|e| StrategyError::Config(e.to_string()))?,
                ExampleFormat::Tables => emit_tables(&s.truth).map_err(|e| StrategyError::Config(e.to_string()))?,
            };
            Ok(ExampleBlock {
                scenario_id: id.clone(),
                text: format!(
                    "Description:\n{}\n\nSolution:\n{}",
                    s.description.trim_end(),
                    solution.trim_end()
                ),
            })
        })
        .collect()
}

pub const EXAMPLES_OPEN: &str = "<examples>";
pub const EXAMPLES_CLOSE: &str = "</examples>";

/// Example blocks wrapped in `<examples>` markers; `""` when there are none.
pub fn render_examples(blocks: &[ExampleBlock]) -> String {
    if blocks.is_empty() {
        return String::new();
    }
    let mut out = format!("Here are solved examples.\n{EXAMPLES_OPEN}\n");
    for (i, b) in blocks.iter().enumerate() {
        out.push_str(&format!("Example {}\n{}\n\n", i + 1, b.text));
    }
    out.push_str(EXAMPLES_CLOSE);
    out
}

/// The `<examples>` section of a prompt, if any.
pub fn examples_section(prompt: &str) -> Option<&str> {
    let start = prompt.find(EXAMPLES_OPEN)? + EXAMPLES_OPEN.len();
    let end = start + prompt[start..].find(EXAMPLES_CLOSE)?;
    Some(&prompt[start..end])
}

const DEFAULT_TEMPLATES: &[(&str, &str, &str)] = &[
    ("single_prompt", "P1", include_str!("../templates/single_prompt/P1.txt")),
    ("structure_driven", "S1", include_str!("../templates/structure_driven/S1.txt")),
    ("structure_driven", "S2", include_str!("../templates/structure_driven/S2.txt")),
    ("structure_driven", "S3", include_str!("../templates/structure_driven/S3.txt")),
    ("structure_driven", "S4", include_str!("../templates/structure_driven/S4.txt")),
    ("structure_driven", "S5", include_str!("../templates/structure_driven/S5.txt")),
    ("structure_driven", "S6", include_str!("../templates/structure_driven/S6.txt")),
    ("event_driven", "E1", include_str!("../templates/event_driven/E1.txt")),
    ("event_driven", "E2", include_str!("../templates/event_driven/E2.txt")),
    ("event_driven", "E3", include_str!("../templates/event_driven/E3.txt")),
    ("event_driven", "E4", include_str!("../templates/event_driven/E4.txt")),
    ("event_driven", "E5", include_str!("../templates/event_driven/E5.txt")),
    ("event_driven", "E6", include_str!("../templates/event_driven/E6.txt")),
    ("hybrid", "colleague", include_str!("../templates/hybrid/colleague.txt")),
];

/// Prompt templates keyed by `(strategy, step)`, with `{{name}}`
/// placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates {
    map: BTreeMap<(String, String), String>,
}

impl Default for Templates {
    fn default() -> Self {
        Templates {
            map: DEFAULT_TEMPLATES
                .iter()
                .map(|(s, k, t)| ((s.to_string(), k.to_string()), t.to_string()))
                .collect(),
        }
    }
}

impl Templates {
    /// Defaults overridden by any `<dir>/<strategy>/<step>.txt` present.
    pub fn with_overrides(dir: &Path) -> Result<Self, StrategyError> {
        let mut t = Templates::default();
        for (strategy, step) in t.map.keys().cloned().collect::<Vec<_>>() {
            let path = dir.join(&strategy).join(format!("{step}.txt"));
            if path.is_file() {
                let text = std::fs::read_to_string(&path).map_err(|e| StrategyError::Template {
                    name: path.display().to_string(),
                    message: e.to_string(),
                })?;
                t.map.insert((strategy, step), text);
            }
        }
        Ok(t)
    }

    pub fn get(&self, strategy: &str, step: &str) -> Option<&str> {
        self.map
            .get(&(strategy.to_string(), step.to_string()))
            .map(String::as_str)
    }

    /// Fills placeholders; a placeholder without a value is an error.
    pub fn render(
        &self,
        strategy: &str,
        step: &str,
        vars: &[(&str, &str)],
    ) -> Result<String, StrategyError> {
        let name = format!("{strategy}/{step}");
        let text = self.get(strategy, step).ok_or_else(|| StrategyError::Template {
            name: name.clone(),
            message: "no such template".into(),
        })?;
        let mut out = String::with_capacity(text.len());
        let mut rest = text;
        while let Some(i) = rest.find("{{") {
            out.push_str(&rest[..i]);
            let after = &rest[i + 2..];
            let j = after.find("}}").ok_or_else(|| StrategyError::Template {
                name: name.clone(),
                message: "unterminated placeholder".into(),
            })?;
            let key = after[..j].trim();
            let value = vars
                .iter()
                .find(|(k, _)| *k == key)
                .ok_or_else(|| StrategyError::Template {
                    name: name.clone(),
                    message: format!("no value for placeholder {key:?}"),
                })?;
            out.push_str(value.1);
            rest = &after[j + 2..];
        }
        out.push_str(rest);
        Ok(out)
    }
}

/// Everything one run produces.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub machine: StateMachine,
    pub transcript: Transcript,
    pub warnings: Vec<Warning>,
    pub outcomes: Vec<StepOutcome>,
    pub merge: Option<MergeState>,
}

pub struct Runner<'a> {
    pub scenario: &'a Scenario,
    pub corpus: &'a [Scenario],
    pub config: &'a GenerationConfig,
    pub templates: &'a Templates,
    pub backend: &'a dyn Backend,
}

struct Session<'a> {
    runner: &'a Runner<'a>,
    transcript: Transcript,
    warnings: Vec<Warning>,
}

impl Session<'_> {
    fn call(&mut self, step: &str, prompt: String) -> Result<CompletionResponse, StrategyError> {
        let cfg = self.runner.config;
        let family = step.split(':').next().unwrap_or(step);
        let kind = if cfg.creative_steps.contains(step) || cfg.creative_steps.contains(family) {
            ProfileKind::Creative
        } else {
            ProfileKind::Deterministic
        };
        let mut req = CompletionRequest::user(&cfg.model, prompt, cfg.profiles.temperature(kind));
        req.max_tokens = cfg.profiles.max_tokens;
        let start = Instant::now();
        let resp = self
            .runner
            .backend
            .complete(&req)
            .map_err(|e| StrategyError::Gateway {
                step: step.to_string(),
                source: e,
            })?;
        self.transcript.entries.push(TranscriptEntry {
            digest: req.digest(),
            request: req,
            response: resp.clone(),
            ms: start.elapsed().as_millis() as u64,
        });
        Ok(resp)
    }
}

/// `garage_door` becomes `GarageDoor`.
fn machine_name(id: &str) -> String {
    let ident = to_identifier(&id.replace('_', " "), IdentCase::Pascal)
        .unwrap_or_else(|| "Generated".to_string());
    let mut cs = ident.chars();
    match cs.next() {
        Some(c) => c.to_ascii_uppercase().to_string() + cs.as_str(),
        None => ident,
    }
}

/// An answer that explicitly declines, e.g. `none` or `None.`
fn is_none_answer(content: &str) -> bool {
    let t = content.trim().trim_end_matches('.').trim();
    t.eq_ignore_ascii_case("none") || t.eq_ignore_ascii_case("n/a")
}

struct Step<'s> {
    id: String,
    template: &'s str,
    responsible: &'static [Component],
    mode: MergeMode,
    event: Option<String>,
}

fn structure_steps() -> Vec<Step<'static>> {
    use Component::*;
    let s = |id: &str, responsible: &'static [Component]| Step {
        id: id.to_string(),
        template: "structure_driven",
        responsible,
        mode: MergeMode::Replace,
        event: None,
    };
    vec![
        s("S1", &[States]),
        s("S2", &[Parallel]),
        s("S3", &[Transitions, Guards]),
        s("S4", &[Actions]),
        s("S5", &[Hierarchical]),
        s("S6", &[History]),
    ]
}

impl<'a> Runner<'a> {
    pub fn run(&self) -> Result<RunResult, StrategyError> {
        self.config.check()?;
        match self.config.strategy {
            Strategy::SinglePrompt => self.run_single_prompt(),
            Strategy::StructureDriven => self.run_structure_driven(false),
            Strategy::EventDriven => self.run_event_driven(),
            Strategy::Hybrid => self.run_hybrid(),
        }
    }

    fn session(&'a self) -> Session<'a> {
        Session {
            runner: self,
            transcript: Transcript::new(self.config.strategy.key(), &self.scenario.id),
            warnings: Vec::new(),
        }
    }

    fn examples(&self, format: ExampleFormat) -> Result<String, StrategyError> {
        let blocks = build_fewshot(
            &self.config.example_pool,
            self.corpus,
            &self.scenario.id,
            self.config.shots,
            format,
        )?;
        Ok(render_examples(&blocks))
    }

    /// Baseline call shared with the hybrid strategy. Returns the machine and
    /// the raw answer.
    fn single_prompt_step(
        &self,
        session: &mut Session<'_>,
    ) -> Result<(StateMachine, String), StrategyError> {
        const STEP: &str = "P1";
        let examples = self.examples(ExampleFormat::Umple)?;
        let prompt = self.templates.render(
            "single_prompt",
            STEP,
            &[("examples", &examples), ("description", &self.scenario.description)],
        )?;
        let resp = session.call(STEP, prompt)?;
        if resp.truncated() {
            session.warnings.push(Warning::new(
                STEP,
                "response",
                "response truncated at the token limit; using the parseable prefix",
            ));
        }
        let machine = match parse_umple(&resp.content, ParseMode::Lenient) {
            Ok(doc) => {
                for d in doc.diagnostics {
                    let level = if d.severity == Severity::Error { "error" } else { "warning" };
                    session.warnings.push(Warning::new(
                        STEP,
                        "umple",
                        format!("line {} {level}: {}", d.line, d.message),
                    ));
                }
                doc.machine
            }
            Err(e) => {
                session
                    .warnings
                    .push(Warning::new(STEP, "umple", format!("no machine recovered: {e}")));
                StateMachine::new(machine_name(&self.scenario.id))
            }
        };
        let violations = crate::ir::validate(&machine);
        let machine = if violations.is_empty() {
            machine
        } else {
            // rebuild through the table path, which repairs what it can
            let html = tables_of(&machine);
            let (m, w) = finalize(&parse_response(&html).model, &machine.name)
                .unwrap_or_else(|_| (StateMachine::new(machine.name.clone()), Vec::new()));
            session.warnings.extend(w);
            m
        };
        Ok((machine, resp.content))
    }

    pub fn run_single_prompt(&self) -> Result<RunResult, StrategyError> {
        let mut session = self.session();
        let (machine, _) = self.single_prompt_step(&mut session)?;
        Ok(RunResult {
            machine,
            transcript: session.transcript,
            warnings: session.warnings,
            outcomes: Vec::new(),
            merge: None,
        })
    }

    fn run_hybrid(&self) -> Result<RunResult, StrategyError> {
        self.run_structure_driven(true)
    }

    /// With `with_baseline`, a single-prompt answer is produced first and
    /// appended to every step prompt.
    fn run_structure_driven(&self, with_baseline: bool) -> Result<RunResult, StrategyError> {
        let mut session = self.session();
        let baseline = if with_baseline {
            Some(self.single_prompt_step(&mut session)?.1)
        } else {
            None
        };
        let examples = self.examples(ExampleFormat::Tables)?;
        let mut merge = MergeState::new();
        let mut outcomes = Vec::new();
        for step in structure_steps() {
            let outcome = self.run_step(&mut session, &step, &examples, baseline.as_deref(), &merge)?;
            merge.merge_step(&outcome)?;
            outcomes.push(outcome);
        }
        self.finish(session, merge, outcomes)
    }

    fn run_event_driven(&self) -> Result<RunResult, StrategyError> {
        use Component::*;
        let mut session = self.session();
        let examples = self.examples(ExampleFormat::Tables)?;
        let mut merge = MergeState::new();
        let mut outcomes = Vec::new();
        let fixed = |id: &str, responsible: &'static [Component]| Step {
            id: id.to_string(),
            template: "event_driven",
            responsible,
            mode: MergeMode::Replace,
            event: None,
        };

        for step in [fixed("E1", &[States]), fixed("E2", &[])] {
            let outcome = self.run_step(&mut session, &step, &examples, None, &merge)?;
            merge.merge_step(&outcome)?;
            outcomes.push(outcome);
        }
        let e2 = outcomes.last().expect("E2 ran");
        if !is_none_answer(&e2.raw_response) && e2.parsed.events.is_empty() {
            merge.warnings.push(Warning::new(
                "E2",
                "events",
                "no Event table found; no per-event steps",
            ));
        }
        let mut events: Vec<String> = Vec::new();
        for e in &merge.current.events {
            if !events.iter().any(|x| canonical(x) == canonical(e)) && !canonical(e).is_empty() {
                events.push(e.clone());
            }
        }
        if events.is_empty() {
            merge
                .warnings
                .push(Warning::new("E2", "events", "no events; machine has states only"));
        }

        for event in &events {
            let step = Step {
                id: format!("E3:{event}"),
                template: "event_driven",
                responsible: &[Transitions, Guards, Actions],
                mode: MergeMode::Accumulate,
                event: Some(event.clone()),
            };
            let mut outcome = self.run_step(&mut session, &step, &examples, None, &merge)?;
            for row in outcome.parsed.transition_rows.iter_mut() {
                if row.event.is_none() {
                    row.event = Some(event.clone());
                }
            }
            merge.merge_step(&outcome)?;
            outcomes.push(outcome);
        }

        for step in [
            fixed("E4", &[Hierarchical]),
            fixed("E5", &[Parallel]),
            fixed("E6", &[History]),
        ] {
            let outcome = self.run_step(&mut session, &step, &examples, None, &merge)?;
            merge.merge_step(&outcome)?;
            outcomes.push(outcome);
        }
        self.finish(session, merge, outcomes)
    }

    fn run_step(
        &self,
        session: &mut Session<'_>,
        step: &Step<'_>,
        examples: &str,
        baseline: Option<&str>,
        merge: &MergeState,
    ) -> Result<StepOutcome, StrategyError> {
        let family = step.id.split(':').next().unwrap_or(&step.id);
        let tables = emit_partial(&merge.current);
        let tables = if tables.is_empty() { "(empty)".to_string() } else { tables };
        let event = step.event.clone().unwrap_or_default();
        let mut prompt = self.templates.render(
            step.template,
            family,
            &[
                ("examples", examples),
                ("description", &self.scenario.description),
                ("tables", &tables),
                ("event", &event),
            ],
        )?;
        if let Some(b) = baseline {
            let colleague = self.templates.render("hybrid", "colleague", &[("baseline", b)])?;
            prompt.push_str(colleague.strip_suffix('\n').unwrap_or(&colleague));
        }
        let resp = session.call(&step.id, prompt)?;
        let parsed = parse_response(&resp.content);
        let (model, ok) = if is_none_answer(&resp.content) {
            (Default::default(), step.responsible.iter().copied().collect())
        } else {
            (parsed.model, parsed.parsed)
        };
        Ok(StepOutcome {
            step_id: step.id.clone(),
            raw_response: resp.content.clone(),
            parsed: model,
            ok,
            responsible: step.responsible.to_vec(),
            mode: step.mode,
            temperature_used: session
                .transcript
                .entries
                .last()
                .map(|e| e.request.temperature)
                .unwrap_or_default(),
            truncated: resp.truncated(),
        })
    }

    fn finish(
        &self,
        mut session: Session<'_>,
        merge: MergeState,
        outcomes: Vec<StepOutcome>,
    ) -> Result<RunResult, StrategyError> {
        session.warnings.extend(merge.warnings.iter().cloned());
        let (deduped, w) = dedupe(&merge.current);
        session.warnings.extend(w);
        let (machine, w) = finalize(&deduped, &machine_name(&self.scenario.id))?;
        session.warnings.extend(w);
        Ok(RunResult {
            machine,
            transcript: session.transcript,
            warnings: session.warnings,
            outcomes,
            merge: Some(merge),
        })
    }
}

/// Table rendering of a possibly invalid machine.
fn tables_of(sm: &StateMachine) -> String {
    use crate::tables::{PartialModel, RowKind, StateRow, StructureRow, TransitionRow};
    let mut p = PartialModel::default();
    fn walk(n: &crate::ir::StateNode, parent: Option<(&str, &str)>, p: &mut PartialModel) {
        p.states_rows.push(StateRow {
            name: n.name.clone(),
            parent: parent.map(|(a, _)| a.to_string()),
            region: parent.map(|(_, r)| r.to_string()),
            kind: if n.is_composite() { RowKind::Composite } else { RowKind::Simple },
        });
        for r in &n.regions {
            p.structure_rows.push(StructureRow {
                composite: n.name.clone(),
                region: r.name.clone(),
                substates: r.substates.iter().map(|s| s.name.clone()).collect(),
                has_history: n.has_history,
            });
            for s in &r.substates {
                walk(s, Some((&n.name, &r.name)), p);
            }
        }
    }
    for s in &sm.root_states {
        walk(s, None, &mut p);
    }
    p.transition_rows = sm
        .transitions
        .iter()
        .map(|t| TransitionRow {
            source: t.source.clone(),
            target: t.target.clone(),
            event: t.event.clone(),
            guard: t.guard.clone(),
            actions: t.actions.clone(),
        })
        .collect();
    emit_partial(&p)
}

/// Runs `config.strategy` for `scenario`.
pub fn run_strategy(
    scenario: &Scenario,
    corpus: &[Scenario],
    config: &GenerationConfig,
    templates: &Templates,
    backend: &dyn Backend,
) -> Result<RunResult, StrategyError> {
    Runner {
        scenario,
        corpus,
        config,
        templates,
        backend,
    }
    .run()
}
