//! In-memory representation of a UML state machine.
//!
//! A [`StateMachine`] owns a tree of [`StateNode`]s (composites hold one or
//! more [`Region`]s of substates) and a flat list of [`Transition`]s whose
//! endpoints refer to states by name. Names are compared through
//! [`normalize_name`], so `PaperJam`, `paper_jam` and `Paper Jam` all denote
//! the same state.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IrError {
    #[error("name {0:?} has no alphanumeric characters")]
    NameUnusable(String),
    #[error("invalid state machine: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
}

/// The seven scored state machine components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    States,
    Transitions,
    Guards,
    Actions,
    Hierarchical,
    Parallel,
    History,
}

impl Component {
    pub const ALL: [Component; 7] = [
        Component::States,
        Component::Transitions,
        Component::Guards,
        Component::Actions,
        Component::Hierarchical,
        Component::Parallel,
        Component::History,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Component::States => "states",
            Component::Transitions => "transitions",
            Component::Guards => "guards",
            Component::Actions => "actions",
            Component::Hierarchical => "hierarchical",
            Component::Parallel => "parallel",
            Component::History => "history",
        }
    }

    /// Row label used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            Component::States => "States",
            Component::Transitions => "Transitions",
            Component::Guards => "Guards",
            Component::Actions => "Actions",
            Component::Hierarchical => "Hierarchical states",
            Component::Parallel => "Parallel regions",
            Component::History => "History states",
        }
    }

    pub fn from_key(key: &str) -> Option<Component> {
        Component::ALL.into_iter().find(|c| c.key() == key)
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateKind {
    Simple,
    Composite,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub name: String,
    pub substates: Vec<StateNode>,
    pub initial: String,
}

impl Region {
    /// A region whose initial substate is the first one listed.
    pub fn new(name: impl Into<String>, substates: Vec<StateNode>) -> Self {
        let initial = substates.first().map(|s| s.name.clone()).unwrap_or_default();
        Region {
            name: name.into(),
            substates,
            initial,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateNode {
    pub name: String,
    pub kind: StateKind,
    pub regions: Vec<Region>,
    pub has_history: bool,
}

impl StateNode {
    pub fn simple(name: impl Into<String>) -> Self {
        StateNode {
            name: name.into(),
            kind: StateKind::Simple,
            regions: Vec::new(),
            has_history: false,
        }
    }

    /// Composite state; regions are auto-named `r1`, `r2`, ... in order.
    pub fn composite(name: impl Into<String>, regions: Vec<Vec<StateNode>>) -> Self {
        let regions = regions
            .into_iter()
            .enumerate()
            .map(|(i, subs)| Region::new(auto_region_name(i), subs))
            .collect();
        StateNode {
            name: name.into(),
            kind: StateKind::Composite,
            regions,
            has_history: false,
        }
    }

    pub fn with_history(mut self) -> Self {
        self.has_history = true;
        self
    }

    pub fn is_composite(&self) -> bool {
        self.kind == StateKind::Composite
    }

    /// Direct substates across all regions.
    pub fn children(&self) -> impl Iterator<Item = &StateNode> {
        self.regions.iter().flat_map(|r| r.substates.iter())
    }

    fn visit<'a>(&'a self, out: &mut Vec<&'a StateNode>) {
        out.push(self);
        for child in self.children() {
            child.visit(out);
        }
    }
}

pub fn auto_region_name(index: usize) -> String {
    format!("r{}", index + 1)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub source: String,
    pub target: String,
    pub event: Option<String>,
    pub guard: Option<String>,
    pub actions: Vec<String>,
}

impl Transition {
    pub fn new(source: impl Into<String>, target: impl Into<String>) -> Self {
        Transition {
            source: source.into(),
            target: target.into(),
            event: None,
            guard: None,
            actions: Vec::new(),
        }
    }

    pub fn on(mut self, event: impl Into<String>) -> Self {
        self.event = Some(event.into());
        self
    }

    pub fn guarded(mut self, guard: impl Into<String>) -> Self {
        self.guard = Some(guard.into());
        self
    }

    pub fn action(mut self, action: impl Into<String>) -> Self {
        self.actions.push(action.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateMachine {
    pub name: String,
    pub root_states: Vec<StateNode>,
    pub transitions: Vec<Transition>,
    pub events: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentCounts {
    pub states: usize,
    pub transitions: usize,
    pub guards: usize,
    pub actions: usize,
    pub hierarchical_states: usize,
    pub parallel_regions: usize,
    pub history_states: usize,
}

impl ComponentCounts {
    pub fn get(&self, component: Component) -> usize {
        match component {
            Component::States => self.states,
            Component::Transitions => self.transitions,
            Component::Guards => self.guards,
            Component::Actions => self.actions,
            Component::Hierarchical => self.hierarchical_states,
            Component::Parallel => self.parallel_regions,
            Component::History => self.history_states,
        }
    }

    pub fn set(&mut self, component: Component, value: usize) {
        let slot = match component {
            Component::States => &mut self.states,
            Component::Transitions => &mut self.transitions,
            Component::Guards => &mut self.guards,
            Component::Actions => &mut self.actions,
            Component::Hierarchical => &mut self.hierarchical_states,
            Component::Parallel => &mut self.parallel_regions,
            Component::History => &mut self.history_states,
        };
        *slot = value;
    }
}

/// A broken invariant, naming the rule and the offending element.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: Rule,
    pub element: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    InvalidIdentifier,
    DuplicateState,
    UnknownSource,
    UnknownTarget,
    EmptyEndpoint,
    UndeclaredEvent,
    EmptyAction,
    SimpleWithRegions,
    SimpleWithHistory,
    CompositeWithoutRegions,
    EmptyRegion,
    BadInitial,
}

impl Rule {
    pub fn describe(self) -> &'static str {
        match self {
            Rule::InvalidIdentifier => "invalid identifier",
            Rule::DuplicateState => "duplicate state",
            Rule::UnknownSource => "unknown source",
            Rule::UnknownTarget => "unknown target",
            Rule::EmptyEndpoint => "empty endpoint",
            Rule::UndeclaredEvent => "undeclared event",
            Rule::EmptyAction => "empty action",
            Rule::SimpleWithRegions => "simple state with regions",
            Rule::SimpleWithHistory => "simple state with history",
            Rule::CompositeWithoutRegions => "composite state without regions",
            Rule::EmptyRegion => "empty region",
            Rule::BadInitial => "initial state not in region",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.rule.describe(), self.element)
    }
}

/// Canonical form of a name: lowercase ASCII alphanumerics only.
///
/// CamelCase, snake_case and spaced spellings of the same words collapse to
/// one token string.
pub fn normalize_name(raw: &str) -> Result<String, IrError> {
    let canon = canonical(raw);
    if canon.is_empty() {
        Err(IrError::NameUnusable(raw.to_string()))
    } else {
        Ok(canon)
    }
}

/// Infallible variant of [`normalize_name`]; unusable names map to `""`.
pub fn canonical(raw: &str) -> String {
    raw.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Text that survives whitespace collapsing unchanged: no leading, trailing,
/// repeated or non-space whitespace.
pub fn is_clean_text(s: &str) -> bool {
    s.split_whitespace().collect::<Vec<_>>().join(" ") == s
}

/// Comparison key for guard and action text: lowercase, single spaces, no
/// trailing punctuation.
pub fn canonical_text(s: &str) -> String {
    let collapsed = s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    collapsed
        .trim_end_matches(|c: char| c.is_ascii_punctuation() && !matches!(c, ')' | ']' | '}' | '"' | '\''))
        .trim_end()
        .to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdentCase {
    /// `PaperJam`, used for states.
    Pascal,
    /// `doorOpened`, used for events.
    Camel,
}

/// Turns free text such as `"door opened"` into an identifier.
///
/// Text that already is an identifier is returned unchanged. Returns `None`
/// when no alphanumeric characters remain.
pub fn to_identifier(text: &str, case: IdentCase) -> Option<String> {
    let text = text.trim();
    if is_identifier(text) {
        return Some(text.to_string());
    }
    let words: Vec<String> = text
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect();
    if words.is_empty() {
        return None;
    }
    let mut out = String::new();
    for (i, w) in words.iter().enumerate() {
        let mut cs = w.chars();
        let first = cs.next().unwrap();
        if i == 0 && case == IdentCase::Camel {
            out.push(first.to_ascii_lowercase());
        } else {
            out.push(first.to_ascii_uppercase());
        }
        out.extend(cs);
    }
    if out.starts_with(|c: char| c.is_ascii_digit()) {
        out.insert(0, '_');
    }
    Some(out)
}

impl StateMachine {
    pub fn new(name: impl Into<String>) -> Self {
        StateMachine {
            name: name.into(),
            root_states: Vec::new(),
            transitions: Vec::new(),
            events: BTreeSet::new(),
        }
    }

    /// Adds the triggers of all transitions to `events`.
    pub fn collect_events(&mut self) {
        for t in &self.transitions {
            if let Some(e) = &t.event {
                self.events.insert(e.clone());
            }
        }
    }

    /// Every state, depth-first in document order.
    pub fn all_states(&self) -> Vec<&StateNode> {
        let mut out = Vec::new();
        for s in &self.root_states {
            s.visit(&mut out);
        }
        out
    }

    /// Parent composite of every non-root state, keyed by canonical name.
    pub fn parents(&self) -> HashMap<String, &StateNode> {
        let mut map = HashMap::new();
        for s in self.all_states() {
            for c in s.children() {
                map.entry(canonical(&c.name)).or_insert(s);
            }
        }
        map
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate(self)
    }

    pub fn counts(&self) -> Result<ComponentCounts, IrError> {
        component_counts(self)
    }

    /// Canonical form used for structural equality: regions renamed
    /// positionally, each region's initial substate first and the remaining
    /// siblings sorted by name, transitions sorted by source in depth-first
    /// state order and then by their content.
    pub fn canonical_form(&self) -> StateMachine {
        fn canon_node(node: &StateNode) -> StateNode {
            let regions = node
                .regions
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    let mut subs: Vec<StateNode> = r.substates.iter().map(canon_node).collect();
                    sort_after_initial(&mut subs, &r.initial);
                    Region::new(auto_region_name(i), subs)
                })
                .collect();
            StateNode {
                name: node.name.clone(),
                kind: node.kind,
                regions,
                has_history: node.has_history,
            }
        }
        let mut root_states: Vec<StateNode> = self.root_states.iter().map(canon_node).collect();
        if let Some(first) = self.root_states.first().map(|s| s.name.clone()) {
            sort_after_initial(&mut root_states, &first);
        }
        let mut out = StateMachine {
            name: self.name.clone(),
            root_states,
            transitions: Vec::new(),
            events: self.events.clone(),
        };
        let order: HashMap<String, usize> = out
            .all_states()
            .iter()
            .enumerate()
            .map(|(i, s)| (canonical(&s.name), i))
            .collect();
        let mut transitions = self.transitions.clone();
        transitions.sort_by(|a, b| {
            let rank = |t: &Transition| order.get(&canonical(&t.source)).copied().unwrap_or(usize::MAX);
            (rank(a), &a.target, &a.event, &a.guard, &a.actions)
                .cmp(&(rank(b), &b.target, &b.event, &b.guard, &b.actions))
        });
        out.transitions = transitions;
        out
    }

    /// Structural equality up to auto region names, initial-first ordering
    /// and transition grouping.
    pub fn equivalent(&self, other: &StateMachine) -> bool {
        self.canonical_form() == other.canonical_form()
    }

    /// Reorders `transitions` so that they are grouped by source state in
    /// depth-first order; the relative order within a source is kept.
    pub fn group_transitions(&mut self) {
        let order: HashMap<String, usize> = self
            .all_states()
            .iter()
            .enumerate()
            .map(|(i, s)| (canonical(&s.name), i))
            .collect();
        self.transitions
            .sort_by_key(|t| order.get(&canonical(&t.source)).copied().unwrap_or(usize::MAX));
    }
}

/// Moves the state named `initial` to the front and sorts the rest by name.
fn sort_after_initial(states: &mut Vec<StateNode>, initial: &str) {
    let init = states.iter().position(|s| s.name == initial).map(|i| states.remove(i));
    states.sort_by(|a, b| a.name.cmp(&b.name));
    if let Some(init) = init {
        states.insert(0, init);
    }
}

pub fn validate(sm: &StateMachine) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen: BTreeMap<String, ()> = BTreeMap::new();
    let v = |rule, element: String| Violation { rule, element };

    for state in sm.all_states() {
        if !is_identifier(&state.name) {
            out.push(v(Rule::InvalidIdentifier, format!("state {:?}", state.name)));
        }
        let canon = canonical(&state.name);
        if seen.insert(canon, ()).is_some() {
            out.push(v(Rule::DuplicateState, state.name.clone()));
        }
        match state.kind {
            StateKind::Simple => {
                if !state.regions.is_empty() {
                    out.push(v(Rule::SimpleWithRegions, state.name.clone()));
                }
                if state.has_history {
                    out.push(v(Rule::SimpleWithHistory, state.name.clone()));
                }
            }
            StateKind::Composite => {
                if state.regions.is_empty() {
                    out.push(v(Rule::CompositeWithoutRegions, state.name.clone()));
                }
            }
        }
        for region in &state.regions {
            if region.substates.is_empty() {
                out.push(v(Rule::EmptyRegion, format!("{}.{}", state.name, region.name)));
            } else if !region.substates.iter().any(|s| s.name == region.initial) {
                out.push(v(
                    Rule::BadInitial,
                    format!("{}.{} initial {:?}", state.name, region.name, region.initial),
                ));
            }
        }
    }

    for t in &sm.transitions {
        let label = format!("{} -> {}", t.source, t.target);
        if t.source.is_empty() || t.target.is_empty() {
            out.push(v(Rule::EmptyEndpoint, label.clone()));
        }
        if !t.source.is_empty() && !seen.contains_key(&canonical(&t.source)) {
            out.push(v(Rule::UnknownSource, label.clone()));
        }
        if !t.target.is_empty() && !seen.contains_key(&canonical(&t.target)) {
            out.push(v(Rule::UnknownTarget, label.clone()));
        }
        if let Some(e) = &t.event {
            if !is_identifier(e) {
                out.push(v(Rule::InvalidIdentifier, format!("event {e:?}")));
            }
            if !sm.events.contains(e) {
                out.push(v(Rule::UndeclaredEvent, format!("{e} on {label}")));
            }
        }
        if t.actions.iter().any(|a| a.trim().is_empty()) {
            out.push(v(Rule::EmptyAction, label));
        }
    }
    out
}

pub fn component_counts(sm: &StateMachine) -> Result<ComponentCounts, IrError> {
    let violations = validate(sm);
    if !violations.is_empty() {
        return Err(IrError::Invalid(violations));
    }
    let mut c = ComponentCounts::default();
    for s in sm.all_states() {
        c.states += 1;
        if s.is_composite() {
            c.hierarchical_states += 1;
            if s.regions.len() >= 2 {
                c.parallel_regions += s.regions.len();
            }
            if s.has_history {
                c.history_states += 1;
            }
        }
    }
    c.transitions = sm.transitions.len();
    c.guards = sm.transitions.iter().filter(|t| t.guard.is_some()).count();
    c.actions = sm.transitions.iter().map(|t| t.actions.len()).sum();
    Ok(c)
}

/// Depth-first search by canonical name; the first match in document order
/// wins when names collide.
pub fn find_state<'a>(sm: &'a StateMachine, canonical_name: &str) -> Option<&'a StateNode> {
    let key = canonical(canonical_name);
    sm.all_states().into_iter().find(|s| canonical(&s.name) == key)
}
