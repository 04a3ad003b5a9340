//! A deterministic stand-in for an LLM, used to produce replay fixtures and
//! to exercise the pipelines offline.
//!
//! The simulated modeler recognises the step from the default prompt
//! templates, looks up the scenario whose description the prompt carries and
//! answers from that scenario's ground truth with a few repeatable mistakes:
//! one simple state gets a different name, one transition is forgotten and
//! one guard is omitted. Which elements are affected depends only on the
//! scenario id and the strategy family, so every run is byte-identical.

use sha2::{Digest, Sha256};

use crate::corpus::Scenario;
use crate::gateway::{Backend, CompletionRequest, CompletionResponse, Finish, GatewayError, Usage};
use crate::ir::{canonical, StateMachine, StateNode, Transition};
use crate::strategies::{examples_section, EXAMPLES_CLOSE};
use crate::tables::{emit_partial, PartialModel, RowKind, StateRow, StructureRow, TransitionRow};
use crate::umple::emit_umple;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimStep {
    Umple,
    StatesAndEvents,
    StatesOnly,
    Events,
    Parallel,
    Transitions,
    Actions,
    Hierarchy,
    History,
    Event,
}

/// Step kind from the task line of a default template.
pub fn classify(prompt: &str) -> Option<SimStep> {
    let task = prompt
        .lines()
        .rev()
        .find(|l| l.starts_with("Task: "))
        .unwrap_or("");
    let checks: [(&str, SimStep); 9] = [
        ("Task: Identify every state the system can be in and every event", SimStep::StatesAndEvents),
        ("Task: Identify every state", SimStep::StatesOnly),
        ("Task: List every event", SimStep::Events),
        ("Task: Find states that change independently", SimStep::Parallel),
        ("Task: For each state, list the transitions", SimStep::Transitions),
        ("Task: For each transition", SimStep::Actions),
        ("Task: Group states", SimStep::Hierarchy),
        ("Task: Decide which composite", SimStep::History),
        ("Task: Look at the event", SimStep::Event),
    ];
    if let Some((_, s)) = checks.iter().find(|(p, _)| task.starts_with(p)) {
        return Some(*s);
    }
    if prompt.contains("write one complete state machine") {
        return Some(SimStep::Umple);
    }
    None
}

/// A corruption applied to the answer of one step kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Answer in prose with no table.
    NoTable(SimStep),
    /// Cut the answer short and report `finish = length`.
    Truncate(SimStep),
}

pub struct SimulatedModeler<'a> {
    corpus: &'a [Scenario],
    faults: Vec<Fault>,
    exact: bool,
}

impl<'a> SimulatedModeler<'a> {
    pub fn new(corpus: &'a [Scenario]) -> Self {
        SimulatedModeler {
            corpus,
            faults: Vec::new(),
            exact: false,
        }
    }

    /// Answer from the unmodified ground truth.
    pub fn exact(mut self) -> Self {
        self.exact = true;
        self
    }

    pub fn with_fault(mut self, fault: Fault) -> Self {
        self.faults.push(fault);
        self
    }

    fn scenario(&self, prompt: &str) -> Option<&'a Scenario> {
        // the task description sits after the examples, if there are any
        let tail = match examples_section(prompt) {
            Some(_) => &prompt[prompt.find(EXAMPLES_CLOSE).unwrap_or(0)..],
            None => prompt,
        };
        self.corpus
            .iter()
            .find(|s| tail.contains(s.description.trim_end()))
    }

    pub fn answer(&self, req: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        let prompt = req.prompt_text();
        let step = classify(&prompt)
            .ok_or_else(|| GatewayError::Transport("simulated modeler: unknown step".into()))?;
        let scenario = self
            .scenario(&prompt)
            .ok_or_else(|| GatewayError::Transport("simulated modeler: unknown scenario".into()))?;
        let family = if step == SimStep::Umple {
            "umple"
        } else if prompt.contains("A colleague has already written") {
            "hybrid"
        } else {
            "tables"
        };
        let view = if self.exact {
            scenario.truth.clone()
        } else {
            perturbed(&scenario.truth, &scenario.id, family)
        };
        let content = match step {
            SimStep::Umple => format!(
                "Here is the state machine.\n\n```umple\n{}```\n",
                emit_umple(&view).expect("perturbed truth stays encodable")
            ),
            SimStep::Event => {
                let event = prompt
                    .lines()
                    .rev()
                    .find_map(|l| l.strip_prefix("Task: Look at the event "))
                    .and_then(|rest| rest.split_whitespace().next())
                    .unwrap_or("");
                answer_tables(&view, step, Some(event))
            }
            _ => answer_tables(&view, step, None),
        };
        let mut response = CompletionResponse {
            usage: Usage {
                prompt_tokens: (prompt.len() / 4) as u64,
                completion_tokens: (content.len() / 4) as u64,
            },
            content,
            finish: Finish::Stop,
        };
        for f in &self.faults {
            match *f {
                Fault::NoTable(s) if s == step => {
                    response.content =
                        "I am not able to determine this from the description.".to_string();
                }
                Fault::Truncate(s) if s == step => {
                    let cut = response.content.len() / 2;
                    let cut = (0..=cut).rev().find(|&i| response.content.is_char_boundary(i)).unwrap_or(0);
                    response.content.truncate(cut);
                    response.finish = Finish::Length;
                }
                _ => {}
            }
        }
        Ok(response)
    }
}

impl Backend for SimulatedModeler<'_> {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        req.check()?;
        self.answer(req)
    }
}

fn pick(seed: &str, n: usize) -> usize {
    if n == 0 {
        return 0;
    }
    let d = Sha256::digest(seed.as_bytes());
    (u64::from_be_bytes(d[..8].try_into().unwrap()) % n as u64) as usize
}

/// The ground truth as the simulated modeler sees it.
pub fn perturbed(truth: &StateMachine, scenario_id: &str, family: &str) -> StateMachine {
    let mut sm = truth.clone();
    let seed = format!("{scenario_id}/{family}");

    let simple: Vec<String> = sm
        .all_states()
        .iter()
        .filter(|s| !s.is_composite())
        .map(|s| s.name.clone())
        .collect();
    if family != "hybrid" && !simple.is_empty() {
        let old = simple[pick(&format!("{seed}/rename"), simple.len())].clone();
        let new = format!("{old}Mode");
        rename(&mut sm, &old, &new);
    }
    if sm.transitions.len() > 2 {
        let i = pick(&format!("{seed}/drop"), sm.transitions.len());
        sm.transitions.remove(i);
    }
    let guarded: Vec<usize> = (0..sm.transitions.len())
        .filter(|&i| sm.transitions[i].guard.is_some())
        .collect();
    if family == "umple" && !guarded.is_empty() {
        let i = guarded[pick(&format!("{seed}/guard"), guarded.len())];
        sm.transitions[i].guard = None;
    }
    sm.collect_events();
    sm
}

fn rename(sm: &mut StateMachine, old: &str, new: &str) {
    fn walk(n: &mut StateNode, old: &str, new: &str) {
        if n.name == old {
            n.name = new.to_string();
        }
        for r in n.regions.iter_mut() {
            if r.initial == old {
                r.initial = new.to_string();
            }
            for s in r.substates.iter_mut() {
                walk(s, old, new);
            }
        }
    }
    for s in sm.root_states.iter_mut() {
        walk(s, old, new);
    }
    for t in sm.transitions.iter_mut() {
        if t.source == old {
            t.source = new.to_string();
        }
        if t.target == old {
            t.target = new.to_string();
        }
    }
}

fn transition_row(t: &Transition, with_actions: bool) -> TransitionRow {
    TransitionRow {
        source: t.source.clone(),
        target: t.target.clone(),
        event: t.event.clone(),
        guard: t.guard.clone(),
        actions: if with_actions { t.actions.clone() } else { Vec::new() },
    }
}

fn structure_rows(sm: &StateMachine, only_parallel: bool, history: bool) -> Vec<StructureRow> {
    sm.all_states()
        .into_iter()
        .filter(|s| s.is_composite() && (!only_parallel || s.regions.len() >= 2))
        .flat_map(|s| {
            s.regions.iter().map(move |r| StructureRow {
                composite: s.name.clone(),
                region: r.name.clone(),
                substates: r.substates.iter().map(|x| x.name.clone()).collect(),
                has_history: history && s.has_history,
            })
        })
        .collect()
}

fn answer_tables(sm: &StateMachine, step: SimStep, event: Option<&str>) -> String {
    let mut p = PartialModel::default();
    let state_rows = || -> Vec<StateRow> {
        sm.all_states()
            .iter()
            .map(|s| StateRow {
                name: s.name.clone(),
                parent: None,
                region: None,
                kind: RowKind::Simple,
            })
            .collect()
    };
    match step {
        SimStep::StatesAndEvents => {
            p.states_rows = state_rows();
            p.events = sm.events.iter().cloned().collect();
        }
        SimStep::StatesOnly => p.states_rows = state_rows(),
        SimStep::Events => p.events = sm.events.iter().cloned().collect(),
        SimStep::Parallel => {
            p.structure_rows = structure_rows(sm, true, false);
            if p.structure_rows.is_empty() {
                return "none".to_string();
            }
        }
        SimStep::Transitions => {
            p.transition_rows = sm.transitions.iter().map(|t| transition_row(t, false)).collect()
        }
        SimStep::Actions => {
            p.transition_rows = sm.transitions.iter().map(|t| transition_row(t, true)).collect()
        }
        SimStep::Hierarchy => {
            p.structure_rows = structure_rows(sm, false, false);
            if p.structure_rows.is_empty() {
                return "none".to_string();
            }
        }
        SimStep::History => {
            p.structure_rows = structure_rows(sm, false, true);
            if p.structure_rows.is_empty() {
                return "none".to_string();
            }
        }
        SimStep::Event => {
            let e = canonical(event.unwrap_or(""));
            p.transition_rows = sm
                .transitions
                .iter()
                .filter(|t| t.event.as_deref().map(canonical).as_deref() == Some(e.as_str()))
                .map(|t| transition_row(t, true))
                .collect();
            if p.transition_rows.is_empty() {
                return "none".to_string();
            }
        }
        SimStep::Umple => unreachable!("handled by the caller"),
    }
    format!("Here are the tables.\n\n{}", emit_partial(&p))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification() {
        assert_eq!(classify("x\nTask: List every event the system reacts to."), Some(SimStep::Events));
        assert_eq!(
            classify("Task: Identify every state the system can be in."),
            Some(SimStep::StatesOnly)
        );
        assert_eq!(classify("nothing"), None);
    }

    #[test]
    fn pick_is_stable() {
        assert_eq!(pick("a", 7), pick("a", 7));
        assert!(pick("b", 3) < 3);
    }
}
