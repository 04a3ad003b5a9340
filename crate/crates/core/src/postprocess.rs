//! Rule-based merging of step outputs into a final [`StateMachine`].
//!
//! Each step reports which components it is responsible for. A component
//! whose table parsed replaces the accumulated one; a component that failed
//! to parse keeps the value from the last step where it succeeded, and a
//! fallback warning is logged. Nothing is invented: gaps stay gaps.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::{
    self, canonical, to_identifier, Component, IdentCase, Region, StateKind, StateMachine,
    StateNode, Transition,
};
use crate::tables::{PartialModel, RowKind, StateRow, StructureRow, TransitionRow};

/// `WARN <step> <component> <message>`
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Warning {
    pub step: String,
    pub component: String,
    pub message: String,
}

impl Warning {
    pub fn new(step: &str, component: impl fmt::Display, message: impl Into<String>) -> Self {
        Warning {
            step: step.to_string(),
            component: component.to_string(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "WARN {} {} {}", self.step, self.component, self.message)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PostError {
    #[error("step {0} was already merged")]
    AlreadyMerged(String),
    #[error("finalize failed: no states survived post-processing")]
    FinalizeFailed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeMode {
    /// Parsed components replace the accumulated ones.
    Replace,
    /// Parsed transition rows are appended (one event at a time).
    Accumulate,
}

/// One LLM step, already parsed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub step_id: String,
    pub raw_response: String,
    pub parsed: PartialModel,
    /// Components whose table and columns were present in the response.
    pub ok: BTreeSet<Component>,
    pub responsible: Vec<Component>,
    pub mode: MergeMode,
    pub temperature_used: f64,
    pub truncated: bool,
}

impl StepOutcome {
    fn succeeded(&self, c: Component) -> bool {
        self.ok.contains(&c) && !self.truncated
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MergeState {
    /// Accumulated model after each merged step.
    pub snapshots: BTreeMap<String, PartialModel>,
    /// Merge order of `snapshots`.
    pub order: Vec<String>,
    pub current: PartialModel,
    pub warnings: Vec<Warning>,
}

impl MergeState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn merge_step(&mut self, outcome: &StepOutcome) -> Result<(), PostError> {
        if self.snapshots.contains_key(&outcome.step_id) {
            return Err(PostError::AlreadyMerged(outcome.step_id.clone()));
        }
        let step = outcome.step_id.as_str();
        if outcome.truncated {
            self.warnings.push(Warning::new(
                step,
                "response",
                "response truncated at the token limit; its tables are not trusted",
            ));
        }
        let mut cur = Facets::from_model(&self.current);
        let new = Facets::from_model(&outcome.parsed);
        let mut provenance = self.current.provenance.clone();
        let resp: BTreeSet<Component> = outcome.responsible.iter().copied().collect();
        let ok = |c: Component| resp.contains(&c) && outcome.succeeded(c);

        for &c in &outcome.responsible {
            if ok(c) {
                provenance.insert(c, step.to_string());
            } else {
                let last = provenance
                    .get(&c)
                    .or(self.order.last())
                    .map(String::as_str)
                    .unwrap_or("none");
                self.warnings.push(Warning::new(
                    step,
                    c,
                    format!("parse failed; keeping output of step {last}"),
                ));
            }
        }

        match outcome.mode {
            MergeMode::Replace => {
                if ok(Component::States) {
                    cur.states = new.states.clone();
                }
                if ok(Component::Hierarchical) {
                    cur.hierarchy = new.hierarchy.clone();
                }
                if ok(Component::Parallel) {
                    cur.parallel = new.parallel.clone();
                }
                if ok(Component::History) {
                    cur.history = new.history.clone();
                }
                let guards = ok(Component::Guards);
                let actions = ok(Component::Actions);
                if ok(Component::Transitions) {
                    let mut pairing = Pairing::new(&new.transitions, &cur.transitions);
                    cur.transitions = new
                        .transitions
                        .iter()
                        .map(|row| {
                            let prior = pairing.take(row);
                            TransitionRow {
                                guard: if guards {
                                    row.guard.clone()
                                } else {
                                    prior.and_then(|p| p.guard.clone())
                                },
                                actions: if actions {
                                    row.actions.clone()
                                } else {
                                    prior.map(|p| p.actions.clone()).unwrap_or_default()
                                },
                                ..row.clone()
                            }
                        })
                        .collect();
                } else if guards || actions {
                    let mut pairing = Pairing::new(&cur.transitions, &new.transitions);
                    for row in cur.transitions.iter_mut() {
                        let update = pairing.take(row);
                        if guards {
                            row.guard = update.and_then(|u| u.guard.clone());
                        }
                        if actions {
                            row.actions = update.map(|u| u.actions.clone()).unwrap_or_default();
                        }
                    }
                }
            }
            MergeMode::Accumulate => {
                if ok(Component::Transitions) {
                    let guards = ok(Component::Guards);
                    let actions = ok(Component::Actions);
                    cur.transitions.extend(new.transitions.iter().map(|r| TransitionRow {
                        guard: if guards { r.guard.clone() } else { None },
                        actions: if actions { r.actions.clone() } else { Vec::new() },
                        ..r.clone()
                    }));
                }
            }
        }

        let mut model = cur.into_model();
        model.events = if outcome.parsed.events.is_empty() {
            self.current.events.clone()
        } else {
            outcome.parsed.events.clone()
        };
        model.provenance = provenance;
        self.current = model;
        self.snapshots
            .insert(step.to_string(), self.current.clone());
        self.order.push(step.to_string());
        Ok(())
    }
}

/// One-to-one pairing of rows in `a` with rows in `b`: by
/// (source, target, event, guard) first, then by (source, target, event).
struct Pairing<'b> {
    b: &'b [TransitionRow],
    plan: HashMap<usize, usize>,
    next: usize,
}

impl<'b> Pairing<'b> {
    fn new(a: &[TransitionRow], b: &'b [TransitionRow]) -> Self {
        let mut used = vec![false; b.len()];
        let mut plan = HashMap::new();
        for (i, row) in a.iter().enumerate() {
            if let Some(j) = (0..b.len()).find(|&j| !used[j] && full_key(&b[j]) == full_key(row)) {
                used[j] = true;
                plan.insert(i, j);
            }
        }
        for (i, row) in a.iter().enumerate() {
            if plan.contains_key(&i) {
                continue;
            }
            if let Some(j) = (0..b.len()).find(|&j| !used[j] && edge_key(&b[j]) == edge_key(row)) {
                used[j] = true;
                plan.insert(i, j);
            }
        }
        Pairing {
            b,
            plan,
            next: 0,
        }
    }

    /// Partner of the next row of `a` (rows must be taken in order).
    fn take(&mut self, _row: &TransitionRow) -> Option<&'b TransitionRow> {
        let i = self.next;
        self.next += 1;
        self.plan.get(&i).map(|&j| &self.b[j])
    }
}

fn opt_canon(s: &Option<String>) -> String {
    s.as_deref().map(canonical).unwrap_or_default()
}

fn edge_key(r: &TransitionRow) -> (String, String, String) {
    (canonical(&r.source), canonical(&r.target), opt_canon(&r.event))
}

fn full_key(r: &TransitionRow) -> (String, String, String, String) {
    let (s, t, e) = edge_key(r);
    (s, t, e, r.guard.as_deref().map(ir::canonical_text).unwrap_or_default())
}

/// Per-component view of a [`PartialModel`].
#[derive(Debug, Clone, Default, PartialEq)]
struct Facets {
    states: Vec<String>,
    /// composite -> direct children
    hierarchy: Vec<(String, Vec<String>)>,
    /// composite -> (region label, children), only composites with two or
    /// more labelled regions
    parallel: Vec<(String, Vec<(String, Vec<String>)>)>,
    history: Vec<String>,
    transitions: Vec<TransitionRow>,
}

fn push_unique(list: &mut Vec<String>, name: &str) {
    if !list.iter().any(|n| canonical(n) == canonical(name)) {
        list.push(name.to_string());
    }
}

impl Facets {
    fn from_model(m: &PartialModel) -> Self {
        let mut f = Facets::default();
        for r in &m.states_rows {
            if r.kind != RowKind::HistoryMarker {
                push_unique(&mut f.states, &r.name);
            }
        }

        // (child, composite, region label), structure rows first
        let mut claims: Vec<(String, String, String)> = Vec::new();
        let mut placed: BTreeSet<String> = BTreeSet::new();
        for r in &m.structure_rows {
            for s in &r.substates {
                if placed.insert(canonical(s)) {
                    claims.push((s.clone(), r.composite.clone(), r.region.clone()));
                }
            }
        }
        for r in &m.states_rows {
            if r.kind == RowKind::HistoryMarker {
                continue;
            }
            if let Some(p) = &r.parent {
                if placed.insert(canonical(&r.name)) {
                    claims.push((r.name.clone(), p.clone(), r.region.clone().unwrap_or_default()));
                }
            }
        }
        let mut by_parent: Vec<(String, Vec<(String, String)>)> = Vec::new();
        for (child, parent, label) in claims {
            match by_parent.iter_mut().find(|(p, _)| canonical(p) == canonical(&parent)) {
                Some((_, kids)) => kids.push((child, label)),
                None => by_parent.push((parent, vec![(child, label)])),
            }
        }
        for (parent, kids) in by_parent {
            f.hierarchy
                .push((parent.clone(), kids.iter().map(|(c, _)| c.clone()).collect()));
            let regions = group_regions(&kids);
            if regions.iter().filter(|(l, _)| !l.is_empty()).count() >= 2 {
                f.parallel.push((parent, regions));
            }
        }

        for r in &m.structure_rows {
            if r.has_history {
                push_unique(&mut f.history, &r.composite);
            }
        }
        for r in &m.states_rows {
            if r.kind == RowKind::HistoryMarker {
                if let Some(p) = &r.parent {
                    push_unique(&mut f.history, p);
                }
            }
        }
        f.transitions = m.transition_rows.clone();
        f
    }

    fn into_model(self) -> PartialModel {
        let mut parent_of: HashMap<String, (String, String)> = HashMap::new();
        let mut composites: Vec<String> = Vec::new();
        let mut structure_rows = Vec::new();
        let history: BTreeSet<String> = self.history.iter().map(|h| canonical(h)).collect();

        let mut emit = |composite: &str, regions: Vec<(String, Vec<String>)>| {
            for (label, subs) in regions {
                for s in &subs {
                    parent_of
                        .entry(canonical(s))
                        .or_insert((composite.to_string(), label.clone()));
                }
                structure_rows.push(StructureRow {
                    composite: composite.to_string(),
                    region: label,
                    substates: subs,
                    has_history: history.contains(&canonical(composite)),
                });
            }
            push_unique(&mut composites, composite);
        };

        for (composite, kids) in &self.hierarchy {
            let par = self
                .parallel
                .iter()
                .find(|(p, _)| canonical(p) == canonical(composite));
            match par {
                Some((_, regions)) => {
                    let mut regions = regions.clone();
                    for k in kids {
                        let known = regions
                            .iter()
                            .any(|(_, subs)| subs.iter().any(|s| canonical(s) == canonical(k)));
                        if !known {
                            regions[0].1.push(k.clone());
                        }
                    }
                    emit(composite, regions);
                }
                None => emit(composite, vec![(String::new(), kids.clone())]),
            }
        }
        for (composite, regions) in &self.parallel {
            if !self
                .hierarchy
                .iter()
                .any(|(p, _)| canonical(p) == canonical(composite))
            {
                emit(composite, regions.clone());
            }
        }

        let comp_set: BTreeSet<String> = composites.iter().map(|c| canonical(c)).collect();
        let mut states_rows: Vec<StateRow> = self
            .states
            .iter()
            .map(|name| {
                let (parent, region) = match parent_of.get(&canonical(name)) {
                    Some((p, r)) => (Some(p.clone()), (!r.is_empty()).then(|| r.clone())),
                    None => (None, None),
                };
                StateRow {
                    name: name.clone(),
                    parent,
                    region,
                    kind: if comp_set.contains(&canonical(name)) {
                        RowKind::Composite
                    } else {
                        RowKind::Simple
                    },
                }
            })
            .collect();
        for h in &self.history {
            states_rows.push(StateRow {
                name: "H".into(),
                parent: Some(h.clone()),
                region: None,
                kind: RowKind::HistoryMarker,
            });
        }
        PartialModel {
            states_rows,
            transition_rows: self.transitions,
            structure_rows,
            events: Vec::new(),
            provenance: BTreeMap::new(),
        }
    }
}

/// Groups children by region label in first-appearance order. Unlabelled
/// children join the first labelled region when there is one.
fn group_regions(kids: &[(String, String)]) -> Vec<(String, Vec<String>)> {
    let mut regions: Vec<(String, Vec<String>)> = Vec::new();
    for (child, label) in kids.iter().filter(|(_, l)| !l.is_empty()) {
        match regions.iter_mut().find(|(l, _)| canonical(l) == canonical(label)) {
            Some((_, subs)) => subs.push(child.clone()),
            None => regions.push((label.clone(), vec![child.clone()])),
        }
    }
    let unlabelled: Vec<String> = kids
        .iter()
        .filter(|(_, l)| l.is_empty())
        .map(|(c, _)| c.clone())
        .collect();
    if !unlabelled.is_empty() {
        match regions.first_mut() {
            Some((_, subs)) => subs.extend(unlabelled),
            None => regions.push((String::new(), unlabelled)),
        }
    }
    regions
}

/// Collapses duplicate transition and state rows.
pub fn dedupe(partial: &PartialModel) -> (PartialModel, Vec<Warning>) {
    let mut warnings = Vec::new();
    let mut out = partial.clone();

    let mut rows: Vec<TransitionRow> = Vec::new();
    for r in &partial.transition_rows {
        match rows.iter_mut().find(|x| full_key(x) == full_key(r)) {
            Some(existing) => {
                if canonical_actions(&existing.actions) != canonical_actions(&r.actions) {
                    warnings.push(Warning::new(
                        "dedupe",
                        Component::Actions,
                        format!(
                            "conflicting actions for {} -> {} on {}; keeping the union",
                            r.source,
                            r.target,
                            r.event.as_deref().unwrap_or("(auto)")
                        ),
                    ));
                }
                for a in &r.actions {
                    if !existing
                        .actions
                        .iter()
                        .any(|x| ir::canonical_text(x) == ir::canonical_text(a))
                    {
                        existing.actions.push(a.clone());
                    }
                }
            }
            None => {
                if rows
                    .iter()
                    .any(|x| edge_key(x) == edge_key(r) && full_key(x) != full_key(r))
                {
                    warnings.push(Warning::new(
                        "dedupe",
                        Component::Guards,
                        format!(
                            "conflicting guards for {} -> {} on {}; keeping both",
                            r.source,
                            r.target,
                            r.event.as_deref().unwrap_or("(auto)")
                        ),
                    ));
                }
                rows.push(r.clone());
            }
        }
    }
    out.transition_rows = rows;

    let mut states: Vec<StateRow> = Vec::new();
    for r in &partial.states_rows {
        let key = |x: &StateRow| match x.kind {
            RowKind::HistoryMarker => format!("H:{}", opt_canon(&x.parent)),
            _ => canonical(&x.name),
        };
        match states.iter_mut().find(|x| key(x) == key(r)) {
            Some(existing) => {
                if r.kind == RowKind::Composite {
                    existing.kind = RowKind::Composite;
                }
                if existing.parent.is_none() {
                    existing.parent = r.parent.clone();
                }
                if existing.region.is_none() {
                    existing.region = r.region.clone();
                }
                if existing.kind == RowKind::Composite && r.kind == RowKind::Composite
                    && existing.name != r.name
                    && r.name.chars().next().is_some_and(char::is_uppercase)
                    && !existing.name.chars().next().is_some_and(char::is_uppercase)
                {
                    existing.name = r.name.clone();
                }
            }
            None => states.push(r.clone()),
        }
    }
    out.states_rows = states;
    (out, warnings)
}

fn canonical_actions(a: &[String]) -> Vec<String> {
    a.iter().map(|x| ir::canonical_text(x)).collect()
}

/// Guard text safe for both output syntaxes.
fn clean_guard(g: &str) -> Option<String> {
    let g = g.split_whitespace().collect::<Vec<_>>().join(" ");
    if g.is_empty() {
        return None;
    }
    let mut depth = 0i32;
    let balanced = g.chars().all(|c| {
        match c {
            '[' => depth += 1,
            ']' => depth -= 1,
            _ => {}
        }
        depth >= 0
    }) && depth == 0;
    Some(if balanced {
        g
    } else {
        g.replace('[', "(").replace(']', ")")
    })
}

fn clean_action(a: &str) -> Option<String> {
    let a: String = a.chars().filter(|c| !matches!(c, ';' | '{' | '}')).collect();
    let a = a.split_whitespace().collect::<Vec<_>>().join(" ");
    (!a.is_empty()).then_some(a)
}

/// Builds a valid machine from accumulated rows.
///
/// Parent claims from structure rows come before those from state rows; the
/// first claim on a state wins. Transitions whose endpoints do not resolve
/// are dropped.
pub fn finalize(
    partial: &PartialModel,
    name: &str,
) -> Result<(StateMachine, Vec<Warning>), PostError> {
    const STEP: &str = "finalize";
    let mut warnings = Vec::new();

    struct Entry {
        name: String,
        parent: Option<usize>,
        /// (region label, children)
        regions: Vec<(String, Vec<usize>)>,
        history: bool,
        declared_composite: bool,
    }
    let mut entries: Vec<Entry> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();

    fn register(
        entries: &mut Vec<Entry>,
        index: &mut HashMap<String, usize>,
        raw: &str,
        warnings: &mut Vec<Warning>,
    ) -> Option<usize> {
        let Some(ident) = to_identifier(raw, IdentCase::Pascal) else {
            warnings.push(Warning::new(
                STEP,
                Component::States,
                format!("state {raw:?} has no usable name; skipped"),
            ));
            return None;
        };
        let key = canonical(&ident);
        if let Some(&i) = index.get(&key) {
            return Some(i);
        }
        entries.push(Entry {
            name: ident,
            parent: None,
            regions: Vec::new(),
            history: false,
            declared_composite: false,
        });
        index.insert(key, entries.len() - 1);
        Some(entries.len() - 1)
    }

    for r in &partial.states_rows {
        if r.kind != RowKind::HistoryMarker {
            if let Some(i) = register(&mut entries, &mut index, &r.name, &mut warnings) {
                if r.kind == RowKind::Composite {
                    entries[i].declared_composite = true;
                }
            }
        }
    }
    let mut claims: Vec<(usize, usize, String)> = Vec::new();
    for r in &partial.structure_rows {
        let Some(p) = register(&mut entries, &mut index, &r.composite, &mut warnings) else { continue };
        for s in &r.substates {
            if let Some(c) = register(&mut entries, &mut index, s, &mut warnings) {
                claims.push((c, p, r.region.clone()));
            }
        }
    }
    for r in &partial.states_rows {
        if r.kind == RowKind::HistoryMarker {
            continue;
        }
        let Some(parent) = &r.parent else { continue };
        let Some(&c) = to_identifier(&r.name, IdentCase::Pascal)
            .and_then(|id| index.get(&canonical(&id)))
        else {
            continue;
        };
        let Some(&p) = to_identifier(parent, IdentCase::Pascal)
            .and_then(|id| index.get(&canonical(&id)))
        else {
            warnings.push(Warning::new(
                STEP,
                Component::Hierarchical,
                format!("parent {parent:?} of {} is not a known state; ignored", r.name),
            ));
            continue;
        };
        claims.push((c, p, r.region.clone().unwrap_or_default()));
    }

    if entries.is_empty() {
        return Err(PostError::FinalizeFailed);
    }

    for (child, parent, label) in claims {
        if child == parent {
            warnings.push(Warning::new(
                STEP,
                Component::Hierarchical,
                format!("{} cannot contain itself; ignored", entries[child].name),
            ));
            continue;
        }
        if let Some(existing) = entries[child].parent {
            if existing != parent {
                warnings.push(Warning::new(
                    STEP,
                    Component::Hierarchical,
                    format!(
                        "{} claimed by {} and {}; keeping {}",
                        entries[child].name,
                        entries[existing].name,
                        entries[parent].name,
                        entries[existing].name
                    ),
                ));
            }
            continue;
        }
        let mut up = Some(parent);
        let mut cycle = false;
        while let Some(u) = up {
            if u == child {
                cycle = true;
                break;
            }
            up = entries[u].parent;
        }
        if cycle {
            warnings.push(Warning::new(
                STEP,
                Component::Hierarchical,
                format!(
                    "placing {} inside {} would create a cycle; ignored",
                    entries[child].name, entries[parent].name
                ),
            ));
            continue;
        }
        entries[child].parent = Some(parent);
        let regions = &mut entries[parent].regions;
        match regions.iter_mut().find(|(l, _)| canonical(l) == canonical(&label)) {
            Some((_, kids)) => kids.push(child),
            None => regions.push((label, vec![child])),
        }
    }
    // unlabelled children join the first labelled region
    for e in entries.iter_mut() {
        if e.regions.len() > 1 {
            if let Some(pos) = e.regions.iter().position(|(l, _)| l.is_empty()) {
                let (_, kids) = e.regions.remove(pos);
                e.regions[0].1.extend(kids);
            }
        }
    }
    for e in entries.iter() {
        if e.declared_composite && e.regions.is_empty() {
            warnings.push(Warning::new(
                STEP,
                Component::Hierarchical,
                format!("{} declared composite but has no substates; kept simple", e.name),
            ));
        }
    }

    let mut history_claims: Vec<&str> = Vec::new();
    for r in &partial.structure_rows {
        if r.has_history {
            history_claims.push(&r.composite);
        }
    }
    for r in &partial.states_rows {
        if r.kind == RowKind::HistoryMarker {
            if let Some(p) = &r.parent {
                history_claims.push(p);
            }
        }
    }
    for h in history_claims {
        let found = to_identifier(h, IdentCase::Pascal).and_then(|id| index.get(&canonical(&id)));
        match found {
            Some(&i) if !entries[i].regions.is_empty() => entries[i].history = true,
            _ => warnings.push(Warning::new(
                STEP,
                Component::History,
                format!("history on {h:?} dropped: not a composite state"),
            )),
        }
    }

    fn build(i: usize, entries: &[Entry]) -> StateNode {
        let e = &entries[i];
        if e.regions.is_empty() {
            return StateNode::simple(e.name.clone());
        }
        let regions = e
            .regions
            .iter()
            .enumerate()
            .map(|(k, (label, kids))| {
                let name = to_identifier(label, IdentCase::Camel)
                    .unwrap_or_else(|| ir::auto_region_name(k));
                Region::new(name, kids.iter().map(|&c| build(c, entries)).collect())
            })
            .collect();
        StateNode {
            name: e.name.clone(),
            kind: StateKind::Composite,
            regions,
            has_history: e.history,
        }
    }

    let mut sm = StateMachine::new(name);
    sm.root_states = (0..entries.len())
        .filter(|&i| entries[i].parent.is_none())
        .map(|i| build(i, &entries))
        .collect();

    for r in &partial.transition_rows {
        let resolve = |raw: &str| {
            to_identifier(raw, IdentCase::Pascal)
                .and_then(|id| index.get(&canonical(&id)))
                .map(|&i| entries[i].name.clone())
        };
        let (source, target) = match (resolve(&r.source), resolve(&r.target)) {
            (Some(s), Some(t)) => (s, t),
            (s, _) => {
                let which = if s.is_none() { "source" } else { "target" };
                let bad = if s.is_none() { &r.source } else { &r.target };
                warnings.push(Warning::new(
                    STEP,
                    Component::Transitions,
                    format!(
                        "dropped {} -> {}: unknown {which} {bad}",
                        r.source, r.target
                    ),
                ));
                continue;
            }
        };
        sm.transitions.push(Transition {
            source,
            target,
            event: r
                .event
                .as_deref()
                .and_then(|e| to_identifier(e, IdentCase::Camel)),
            guard: r.guard.as_deref().and_then(clean_guard),
            actions: r.actions.iter().filter_map(|a| clean_action(a)).collect(),
        });
    }
    sm.collect_events();
    sm.group_transitions();
    debug_assert!(ir::validate(&sm).is_empty(), "{:?}", ir::validate(&sm));
    Ok((sm, warnings))
}
