//! Component-wise comparison of a generated machine against a ground truth.
//!
//! States match on canonical name or alias. Transitions, guards and actions
//! are judged only relative to matched endpoint states: anything hanging off
//! an unmatched generated state is a false positive. Composite states,
//! parallel regions and history flags are judged structurally.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::{self, canonical, canonical_text, Component, StateMachine, StateNode, Transition};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("alias conflict in {namespace} namespace: {detail}")]
    AliasConflict { namespace: String, detail: String },
    #[error("{which} machine is invalid: {detail}")]
    InvalidMachine { which: &'static str, detail: String },
    #[error("nothing to average")]
    NoReports,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Namespace {
    State,
    Event,
    Guard,
    Action,
}

impl Namespace {
    pub const ALL: [Namespace; 4] = [
        Namespace::State,
        Namespace::Event,
        Namespace::Guard,
        Namespace::Action,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Namespace::State => "state",
            Namespace::Event => "event",
            Namespace::Guard => "guard",
            Namespace::Action => "action",
        }
    }

    pub fn from_key(key: &str) -> Option<Namespace> {
        Namespace::ALL.into_iter().find(|n| n.key() == key)
    }

    /// Comparison key of a name or text in this namespace.
    pub fn canon(self, s: &str) -> String {
        match self {
            Namespace::State | Namespace::Event => canonical(s),
            Namespace::Guard | Namespace::Action => canonical_text(s),
        }
    }
}

impl fmt::Display for Namespace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// Human equivalence judgments between generated and ground-truth names,
/// consulted in addition to the name rule.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AliasMap {
    forward: BTreeMap<Namespace, BTreeMap<String, String>>,
    backward: BTreeMap<Namespace, BTreeMap<String, String>>,
}

impl AliasMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, ns: Namespace, gen: &str, truth: &str) -> Result<(), EvalError> {
        let (g, t) = (ns.canon(gen), ns.canon(truth));
        let fwd = self.forward.entry(ns).or_default();
        let bwd = self.backward.entry(ns).or_default();
        let conflict = |detail: String| EvalError::AliasConflict {
            namespace: ns.key().to_string(),
            detail,
        };
        match (fwd.get(&g), bwd.get(&t)) {
            (Some(x), _) if *x != t => {
                return Err(conflict(format!("{gen} maps to both {x} and {truth}")))
            }
            (_, Some(x)) if *x != g => {
                return Err(conflict(format!("{truth} is the target of both {x} and {gen}")))
            }
            _ => {}
        }
        fwd.insert(g.clone(), t.clone());
        bwd.insert(t, g);
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.forward.values().all(BTreeMap::is_empty)
    }

    /// Same judgments with the generated and truth sides exchanged.
    pub fn inverted(&self) -> AliasMap {
        AliasMap {
            forward: self.backward.clone(),
            backward: self.forward.clone(),
        }
    }

    pub fn pairs(&self, ns: Namespace) -> Vec<(String, String)> {
        self.forward
            .get(&ns)
            .map(|m| m.iter().map(|(a, b)| (a.clone(), b.clone())).collect())
            .unwrap_or_default()
    }

    /// Whether generated `gen` and truth `truth` denote the same thing.
    pub fn matches(&self, ns: Namespace, gen: &str, truth: &str) -> bool {
        let (g, t) = (ns.canon(gen), ns.canon(truth));
        if g.is_empty() || t.is_empty() {
            return false;
        }
        g == t || self.forward.get(&ns).and_then(|m| m.get(&g)) == Some(&t)
    }
}

/// TP/FP/FN counts with witnesses.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentMatch {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub matched: Vec<(String, String)>,
    pub unmatched_generated: Vec<String>,
    pub unmatched_truth: Vec<String>,
}

impl ComponentMatch {
    fn finish(mut self) -> Self {
        self.tp = self.matched.len();
        self.fp = self.unmatched_generated.len();
        self.fn_ = self.unmatched_truth.len();
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchSets {
    pub components: BTreeMap<Component, ComponentMatch>,
}

impl MatchSets {
    pub fn get(&self, c: Component) -> &ComponentMatch {
        static EMPTY: ComponentMatch = ComponentMatch {
            tp: 0,
            fp: 0,
            fn_: 0,
            matched: Vec::new(),
            unmatched_generated: Vec::new(),
            unmatched_truth: Vec::new(),
        };
        self.components.get(&c).unwrap_or(&EMPTY)
    }
}

/// Generated state name -> truth state name.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateMapping {
    pub forward: BTreeMap<String, String>,
}

impl StateMapping {
    pub fn get(&self, gen: &str) -> Option<&str> {
        self.forward.get(&canonical(gen)).map(String::as_str)
    }
}

fn check_valid(sm: &StateMachine, which: &'static str) -> Result<(), EvalError> {
    let v = ir::validate(sm);
    if v.is_empty() {
        Ok(())
    } else {
        Err(EvalError::InvalidMachine {
            which,
            detail: v
                .iter()
                .map(|x| format!("{}: {}", x.rule.describe(), x.element))
                .collect::<Vec<_>>()
                .join("; "),
        })
    }
}

/// Largest one-to-one pairing of generated and truth states that agree by
/// name or alias. Both sides are ordered by canonical name first so the
/// chosen pairing is deterministic.
pub fn match_states(
    gen: &StateMachine,
    truth: &StateMachine,
    aliases: &AliasMap,
) -> Result<(StateMapping, ComponentMatch), EvalError> {
    check_valid(gen, "generated")?;
    check_valid(truth, "ground-truth")?;
    let mut gens: Vec<&StateNode> = gen.all_states();
    gens.sort_by_key(|s| canonical(&s.name));
    let mut truths: Vec<&StateNode> = truth.all_states();
    truths.sort_by_key(|s| canonical(&s.name));

    let weights: Vec<Vec<i64>> = gens
        .iter()
        .map(|g| {
            truths
                .iter()
                .map(|t| aliases.matches(Namespace::State, &g.name, &t.name) as i64)
                .collect()
        })
        .collect();
    let assignment = max_weight_assignment(&weights);
    let mut used = vec![false; truths.len()];
    let mut mapping = StateMapping::default();
    let mut m = ComponentMatch::default();
    for (g, hit) in gens.iter().zip(assignment) {
        match hit {
            Some(j) => {
                used[j] = true;
                mapping
                    .forward
                    .insert(canonical(&g.name), canonical(&truths[j].name));
                m.matched.push((g.name.clone(), truths[j].name.clone()));
            }
            None => m.unmatched_generated.push(g.name.clone()),
        }
    }
    for (j, t) in truths.iter().enumerate() {
        if !used[j] {
            m.unmatched_truth.push(t.name.clone());
        }
    }
    Ok((mapping, m.finish()))
}

fn describe(t: &Transition) -> String {
    let mut s = format!("{} -> {}", t.source, t.target);
    if let Some(e) = &t.event {
        s.push_str(&format!(" on {e}"));
    }
    if let Some(g) = &t.guard {
        s.push_str(&format!(" [{g}]"));
    }
    s
}

fn event_matches(aliases: &AliasMap, gen: &Option<String>, truth: &Option<String>) -> bool {
    match (gen, truth) {
        (None, None) => true,
        (Some(g), Some(t)) => aliases.matches(Namespace::Event, g, t),
        _ => false,
    }
}

fn guard_tp(aliases: &AliasMap, g: &Transition, t: &Transition) -> usize {
    match (&g.guard, &t.guard) {
        (Some(a), Some(b)) if aliases.matches(Namespace::Guard, a, b) => 1,
        _ => 0,
    }
}

/// Size of the largest one-to-one pairing of action entries. Each generated
/// entry can match only one truth spelling, so greedy pairing is maximal.
fn action_tp(aliases: &AliasMap, g: &Transition, t: &Transition) -> usize {
    pair_actions(aliases, g, t).0.len()
}

/// Transition, guard and action matches for one candidate pair, ordered so
/// that transitions dominate guards and guards dominate actions.
fn pair_weight(aliases: &AliasMap, g: &Transition, t: &Transition) -> i64 {
    (1i64 << 40) + ((guard_tp(aliases, g, t) as i64) << 20) + action_tp(aliases, g, t) as i64
}

/// Maximum-weight assignment on a rectangular matrix of non-negative weights.
/// Returns `assignment[row] = Some(col)`; zero-weight pairs are left out.
pub fn max_weight_assignment(w: &[Vec<i64>]) -> Vec<Option<usize>> {
    let rows = w.len();
    let cols = w.first().map_or(0, Vec::len);
    let n = rows.max(cols);
    if n == 0 {
        return Vec::new();
    }
    let max = w.iter().flatten().copied().max().unwrap_or(0);
    let cost = |i: usize, j: usize| -> i64 {
        if i < rows && j < cols {
            max - w[i][j]
        } else {
            max
        }
    };
    // potentials method, 1-based with a virtual column 0
    let inf = i64::MAX / 4;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![None; rows];
    for j in 1..=n {
        let i = p[j];
        if i >= 1 && i <= rows && j <= cols && w[i - 1][j - 1] > 0 {
            out[i - 1] = Some(j - 1);
        }
    }
    out
}

/// Transitions, guards and actions.
pub fn match_dependents(
    gen: &StateMachine,
    truth: &StateMachine,
    mapping: &StateMapping,
    aliases: &AliasMap,
) -> MatchSets {
    let mut tm = ComponentMatch::default();
    let mut gm = ComponentMatch::default();
    let mut am = ComponentMatch::default();

    // FP-state transitions are false positives along with everything on them.
    let mut live: Vec<&Transition> = Vec::new();
    for g in &gen.transitions {
        match (mapping.get(&g.source), mapping.get(&g.target)) {
            (Some(_), Some(_)) => live.push(g),
            _ => {
                tm.unmatched_generated.push(describe(g));
                if let Some(x) = &g.guard {
                    gm.unmatched_generated.push(x.clone());
                }
                am.unmatched_generated.extend(g.actions.iter().cloned());
            }
        }
    }

    // Candidate pairs share mapped endpoints and a matching event.
    let compatible = |g: &Transition, t: &Transition| {
        mapping.get(&g.source) == Some(canonical(&t.source).as_str())
            && mapping.get(&g.target) == Some(canonical(&t.target).as_str())
            && event_matches(aliases, &g.event, &t.event)
    };
    let weights: Vec<Vec<i64>> = live
        .iter()
        .map(|g| {
            truth
                .transitions
                .iter()
                .map(|t| if compatible(g, t) { pair_weight(aliases, g, t) } else { 0 })
                .collect()
        })
        .collect();
    let assignment = if truth.transitions.is_empty() {
        vec![None; live.len()]
    } else {
        max_weight_assignment(&weights)
    };

    let mut truth_used = vec![false; truth.transitions.len()];
    for (i, g) in live.iter().enumerate() {
        match assignment.get(i).copied().flatten() {
            Some(j) => {
                let t = &truth.transitions[j];
                truth_used[j] = true;
                tm.matched.push((describe(g), describe(t)));
                match (&g.guard, &t.guard) {
                    (Some(a), Some(b)) if guard_tp(aliases, g, t) == 1 => {
                        gm.matched.push((a.clone(), b.clone()))
                    }
                    (a, b) => {
                        gm.unmatched_generated.extend(a.iter().cloned());
                        gm.unmatched_truth.extend(b.iter().cloned());
                    }
                }
                let (pairs, extra_gen, extra_truth) = pair_actions(aliases, g, t);
                am.matched.extend(pairs);
                am.unmatched_generated.extend(extra_gen);
                am.unmatched_truth.extend(extra_truth);
            }
            None => {
                tm.unmatched_generated.push(describe(g));
                gm.unmatched_generated.extend(g.guard.iter().cloned());
                am.unmatched_generated.extend(g.actions.iter().cloned());
            }
        }
    }
    for (j, t) in truth.transitions.iter().enumerate() {
        if !truth_used[j] {
            tm.unmatched_truth.push(describe(t));
            gm.unmatched_truth.extend(t.guard.iter().cloned());
            am.unmatched_truth.extend(t.actions.iter().cloned());
        }
    }

    let mut sets = MatchSets::default();
    sets.components.insert(Component::Transitions, tm.finish());
    sets.components.insert(Component::Guards, gm.finish());
    sets.components.insert(Component::Actions, am.finish());
    sets
}

type ActionSplit = (Vec<(String, String)>, Vec<String>, Vec<String>);

fn pair_actions(aliases: &AliasMap, g: &Transition, t: &Transition) -> ActionSplit {
    let weights: Vec<Vec<i64>> = g
        .actions
        .iter()
        .map(|a| {
            t.actions
                .iter()
                .map(|b| aliases.matches(Namespace::Action, a, b) as i64)
                .collect()
        })
        .collect();
    let mut truth_left: Vec<Option<&String>> = t.actions.iter().map(Some).collect();
    let mut pairs = Vec::new();
    let mut extra_gen = Vec::new();
    for (a, hit) in g.actions.iter().zip(max_weight_assignment(&weights)) {
        match hit {
            Some(k) => pairs.push((a.clone(), truth_left[k].take().unwrap().clone())),
            None => extra_gen.push(a.clone()),
        }
    }
    let extra_truth = truth_left.into_iter().flatten().cloned().collect();
    (pairs, extra_gen, extra_truth)
}

fn composites(sm: &StateMachine) -> Vec<&StateNode> {
    let mut v: Vec<&StateNode> = sm.all_states().into_iter().filter(|s| s.is_composite()).collect();
    v.sort_by_key(|s| canonical(&s.name));
    v
}

/// Image of `states` under the mapping, or `None` if any is unmatched.
fn image<'a>(
    mapping: &StateMapping,
    states: impl Iterator<Item = &'a StateNode>,
) -> Option<BTreeSet<String>> {
    states
        .map(|s| mapping.get(&s.name).map(str::to_string))
        .collect()
}

fn canon_set<'a>(states: impl Iterator<Item = &'a StateNode>) -> BTreeSet<String> {
    states.map(|s| canonical(&s.name)).collect()
}

/// Composite states, parallel regions and history flags.
pub fn match_structures(
    gen: &StateMachine,
    truth: &StateMachine,
    mapping: &StateMapping,
) -> MatchSets {
    let gc = composites(gen);
    let tc = composites(truth);
    let mut pair_of: Vec<Option<usize>> = vec![None; gc.len()];
    let mut t_used = vec![false; tc.len()];

    // name-matched pairs first
    for (i, g) in gc.iter().enumerate() {
        if let Some(target) = mapping.get(&g.name) {
            if let Some(j) = (0..tc.len()).find(|&j| !t_used[j] && canonical(&tc[j].name) == target) {
                pair_of[i] = Some(j);
                t_used[j] = true;
            }
        }
    }
    // then identical direct-substate sets
    for (i, g) in gc.iter().enumerate() {
        if pair_of[i].is_some() {
            continue;
        }
        let Some(img) = image(mapping, g.children()) else { continue };
        if let Some(j) = (0..tc.len()).find(|&j| !t_used[j] && canon_set(tc[j].children()) == img) {
            pair_of[i] = Some(j);
            t_used[j] = true;
        }
    }

    let mut hm = ComponentMatch::default();
    let mut pm = ComponentMatch::default();
    let mut hist = ComponentMatch::default();
    let parallel = |s: &StateNode| s.regions.len() >= 2;
    let region_label = |s: &StateNode, k: usize| format!("{}.{}", s.name, s.regions[k].name);

    for (i, g) in gc.iter().enumerate() {
        let Some(j) = pair_of[i] else {
            hm.unmatched_generated.push(g.name.clone());
            if parallel(g) {
                for k in 0..g.regions.len() {
                    pm.unmatched_generated.push(region_label(g, k));
                }
            }
            if g.has_history {
                hist.unmatched_generated.push(g.name.clone());
            }
            continue;
        };
        let t = tc[j];
        hm.matched.push((g.name.clone(), t.name.clone()));

        let g_regions: Vec<usize> = if parallel(g) { (0..g.regions.len()).collect() } else { vec![] };
        let t_regions: Vec<usize> = if parallel(t) { (0..t.regions.len()).collect() } else { vec![] };
        let mut t_region_used = vec![false; t.regions.len()];
        for &k in &g_regions {
            let img = image(mapping, g.regions[k].substates.iter());
            let hit = img.and_then(|img| {
                t_regions.iter().copied().find(|&l| {
                    !t_region_used[l] && canon_set(t.regions[l].substates.iter()) == img
                })
            });
            match hit {
                Some(l) => {
                    t_region_used[l] = true;
                    pm.matched.push((region_label(g, k), region_label(t, l)));
                }
                None => pm.unmatched_generated.push(region_label(g, k)),
            }
        }
        for &l in &t_regions {
            if !t_region_used[l] {
                pm.unmatched_truth.push(region_label(t, l));
            }
        }

        match (g.has_history, t.has_history) {
            (true, true) => hist.matched.push((g.name.clone(), t.name.clone())),
            (true, false) => hist.unmatched_generated.push(g.name.clone()),
            (false, true) => hist.unmatched_truth.push(t.name.clone()),
            (false, false) => {}
        }
    }
    for (j, t) in tc.iter().enumerate() {
        if t_used[j] {
            continue;
        }
        hm.unmatched_truth.push(t.name.clone());
        if parallel(t) {
            for l in 0..t.regions.len() {
                pm.unmatched_truth.push(region_label(t, l));
            }
        }
        if t.has_history {
            hist.unmatched_truth.push(t.name.clone());
        }
    }

    let mut sets = MatchSets::default();
    sets.components.insert(Component::Hierarchical, hm.finish());
    sets.components.insert(Component::Parallel, pm.finish());
    sets.components.insert(Component::History, hist.finish());
    sets
}

/// All seven components.
pub fn match_all(
    gen: &StateMachine,
    truth: &StateMachine,
    aliases: &AliasMap,
) -> Result<MatchSets, EvalError> {
    let (mapping, states) = match_states(gen, truth, aliases)?;
    let mut sets = match_dependents(gen, truth, &mapping, aliases);
    sets.components.insert(Component::States, states);
    sets.components
        .extend(match_structures(gen, truth, &mapping).components);
    Ok(sets)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Counts {
    pub fn new(tp: usize, fp: usize, fn_: usize) -> Self {
        Counts { tp, fp, fn_ }
    }

    fn add(self, o: Counts) -> Counts {
        Counts::new(self.tp + o.tp, self.fp + o.fp, self.fn_ + o.fn_)
    }
}

/// Precision, recall and F1; `None` when all three counts are zero.
pub fn metrics(c: Counts) -> Option<Metrics> {
    if c.tp + c.fp + c.fn_ == 0 {
        return None;
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Some(Metrics {
        precision,
        recall,
        f1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    /// Mean of per-scenario metrics.
    Macro,
    /// Metrics of counts summed over scenarios.
    Pooled,
}

impl Averaging {
    pub fn key(self) -> &'static str {
        match self {
            Averaging::Macro => "macro",
            Averaging::Pooled => "pooled",
        }
    }

    pub fn parse(s: &str) -> Option<Averaging> {
        match s {
            "macro" => Some(Averaging::Macro),
            "pooled" => Some(Averaging::Pooled),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `None` marks an excluded component.
    pub components: BTreeMap<Component, Option<Metrics>>,
    pub counts: BTreeMap<Component, Counts>,
    pub aggregate: Option<Metrics>,
    /// Number of reports this one summarizes (1 for a single scenario).
    pub scenarios: usize,
    pub averaging: Option<Averaging>,
}

impl EvalReport {
    pub fn metrics(&self, c: Component) -> Option<Metrics> {
        self.components.get(&c).copied().flatten()
    }
}

pub fn score(sets: &MatchSets) -> EvalReport {
    let mut components = BTreeMap::new();
    let mut counts = BTreeMap::new();
    let mut total = Counts::default();
    for c in Component::ALL {
        let m = sets.get(c);
        let k = Counts::new(m.tp, m.fp, m.fn_);
        total = total.add(k);
        counts.insert(c, k);
        components.insert(c, metrics(k));
    }
    EvalReport {
        components,
        counts,
        aggregate: metrics(total),
        scenarios: 1,
        averaging: None,
    }
}

pub fn evaluate(
    gen: &StateMachine,
    truth: &StateMachine,
    aliases: &AliasMap,
) -> Result<EvalReport, EvalError> {
    Ok(score(&match_all(gen, truth, aliases)?))
}

fn mean(values: &[Metrics]) -> Option<Metrics> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    Some(Metrics {
        precision: values.iter().map(|m| m.precision).sum::<f64>() / n,
        recall: values.iter().map(|m| m.recall).sum::<f64>() / n,
        f1: values.iter().map(|m| m.f1).sum::<f64>() / n,
    })
}

/// Per-metric arithmetic mean over the scenarios where each component was
/// scored. The mean F1 is not the harmonic mean of the mean P and R.
pub fn macro_average(reports: &[EvalReport]) -> Result<EvalReport, EvalError> {
    if reports.is_empty() {
        return Err(EvalError::NoReports);
    }
    let mut components = BTreeMap::new();
    for c in Component::ALL {
        let scored: Vec<Metrics> = reports.iter().filter_map(|r| r.metrics(c)).collect();
        components.insert(c, mean(&scored));
    }
    let aggregates: Vec<Metrics> = reports.iter().filter_map(|r| r.aggregate).collect();
    Ok(EvalReport {
        components,
        counts: summed_counts(reports),
        aggregate: mean(&aggregates),
        scenarios: reports.iter().map(|r| r.scenarios).sum(),
        averaging: Some(Averaging::Macro),
    })
}

fn summed_counts(reports: &[EvalReport]) -> BTreeMap<Component, Counts> {
    let mut out: BTreeMap<Component, Counts> = BTreeMap::new();
    for r in reports {
        for (c, k) in &r.counts {
            let e = out.entry(*c).or_default();
            *e = e.add(*k);
        }
    }
    out
}

/// Metrics of counts summed over all reports.
pub fn pooled_average(reports: &[EvalReport]) -> Result<EvalReport, EvalError> {
    if reports.is_empty() {
        return Err(EvalError::NoReports);
    }
    let counts = summed_counts(reports);
    let mut components = BTreeMap::new();
    let mut total = Counts::default();
    for c in Component::ALL {
        let k = counts.get(&c).copied().unwrap_or_default();
        total = total.add(k);
        components.insert(c, metrics(k));
    }
    Ok(EvalReport {
        components,
        counts,
        aggregate: metrics(total),
        scenarios: reports.iter().map(|r| r.scenarios).sum(),
        averaging: Some(Averaging::Pooled),
    })
}

pub fn summarize(reports: &[EvalReport], mode: Averaging) -> Result<EvalReport, EvalError> {
    match mode {
        Averaging::Macro => macro_average(reports),
        Averaging::Pooled => pooled_average(reports),
    }
}

/// Component rows plus `All`, columns P, R, F1 at four decimals. Excluded
/// components print `-`.
pub fn format_report(report: &EvalReport) -> String {
    let mut out = String::new();
    if let Some(mode) = report.averaging {
        let _ = writeln!(out, "averaging: {} over {} scenario(s)", mode.key(), report.scenarios);
    }
    let _ = writeln!(out, "{:<20} {:>9} {:>9} {:>9}", "Component", "P", "R", "F1");
    let row = |out: &mut String, label: &str, m: Option<Metrics>| {
        let _ = match m {
            Some(m) => writeln!(
                out,
                "{:<20} {:>9.4} {:>9.4} {:>9.4}",
                label, m.precision, m.recall, m.f1
            ),
            None => writeln!(out, "{:<20} {:>9} {:>9} {:>9}", label, "-", "-", "-"),
        };
    };
    for c in Component::ALL {
        row(&mut out, c.label(), report.metrics(c));
    }
    row(&mut out, "All", report.aggregate);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{StateNode, Transition};

    fn sm(states: Vec<StateNode>, transitions: Vec<Transition>) -> StateMachine {
        let mut m = StateMachine::new("M");
        m.root_states = states;
        m.transitions = transitions;
        m.collect_events();
        m
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn score_arithmetic() {
        let m = metrics(Counts::new(3, 1, 2)).unwrap();
        assert!(close(m.precision, 0.75));
        assert!(close(m.recall, 0.6));
        assert!(close(m.f1, 2.0 * 0.75 * 0.6 / 1.35));
        assert_eq!(metrics(Counts::new(0, 0, 0)), None);
        let m = metrics(Counts::new(0, 0, 4)).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        let m = metrics(Counts::new(0, 2, 0)).unwrap();
        assert_eq!((m.precision, m.recall), (0.0, 0.0));
    }

    #[test]
    fn extra_state_is_fp() {
        let truth = sm(
            vec![StateNode::simple("Idle"), StateNode::simple("Printing"), StateNode::simple("PaperJam")],
            vec![],
        );
        let gen = sm(
            vec![
                StateNode::simple("idle"),
                StateNode::simple("Printing"),
                StateNode::simple("Paper_Jam"),
                StateNode::simple("Diagnostics"),
            ],
            vec![],
        );
        let (_, m) = match_states(&gen, &truth, &AliasMap::new()).unwrap();
        assert_eq!((m.tp, m.fp, m.fn_), (3, 1, 0));
        assert_eq!(m.unmatched_generated, vec!["Diagnostics"]);
    }

    #[test]
    fn fp_state_propagates() {
        let truth = sm(
            vec![StateNode::simple("A"), StateNode::simple("B")],
            vec![Transition::new("A", "B").on("go")],
        );
        let gen = sm(
            vec![StateNode::simple("A"), StateNode::simple("B"), StateNode::simple("Ghost")],
            vec![
                Transition::new("A", "B").on("go"),
                Transition::new("A", "Ghost").on("go").guarded("x > 1").action("a").action("b"),
            ],
        );
        let s = match_all(&gen, &truth, &AliasMap::new()).unwrap();
        let t = s.get(Component::Transitions);
        assert_eq!((t.tp, t.fp, t.fn_), (1, 1, 0));
        assert_eq!(s.get(Component::Guards).fp, 1);
        assert_eq!(s.get(Component::Actions).fp, 2);
    }

    #[test]
    fn duplicates_give_one_tp() {
        let truth = sm(
            vec![StateNode::simple("A"), StateNode::simple("B")],
            vec![Transition::new("A", "B").on("go")],
        );
        let gen = sm(
            vec![StateNode::simple("A"), StateNode::simple("B")],
            vec![Transition::new("A", "B").on("go"), Transition::new("A", "B").on("go")],
        );
        let t = match_all(&gen, &truth, &AliasMap::new()).unwrap();
        let t = t.get(Component::Transitions);
        assert_eq!((t.tp, t.fp, t.fn_), (1, 1, 0));
    }

    #[test]
    fn assignment_prefers_guard_matches() {
        let truth = sm(
            vec![StateNode::simple("A"), StateNode::simple("B")],
            vec![
                Transition::new("A", "B").on("go").guarded("x"),
                Transition::new("A", "B").on("go").guarded("y"),
            ],
        );
        let gen = sm(
            vec![StateNode::simple("A"), StateNode::simple("B")],
            vec![
                Transition::new("A", "B").on("go").guarded("y"),
                Transition::new("A", "B").on("go").guarded("x"),
            ],
        );
        let s = match_all(&gen, &truth, &AliasMap::new()).unwrap();
        assert_eq!(s.get(Component::Guards).tp, 2);
    }

    #[test]
    fn renamed_superstate_matches_by_substates() {
        let truth = sm(
            vec![StateNode::composite("Active", vec![vec![StateNode::simple("A"), StateNode::simple("B")]])],
            vec![],
        );
        let gen = sm(
            vec![StateNode::composite("Running", vec![vec![StateNode::simple("A"), StateNode::simple("B")]])],
            vec![],
        );
        let s = match_all(&gen, &truth, &AliasMap::new()).unwrap();
        assert_eq!(s.get(Component::Hierarchical).tp, 1);
        assert_eq!(s.get(Component::States).fp, 1);
    }

    #[test]
    fn two_regions_against_three() {
        let leaf = StateNode::simple;
        let truth = sm(
            vec![StateNode::composite(
                "P",
                vec![vec![leaf("A")], vec![leaf("B")], vec![leaf("C")]],
            )],
            vec![],
        );
        let gen = sm(
            vec![StateNode::composite("P", vec![vec![leaf("A")], vec![leaf("B")]])],
            vec![],
        );
        let p = match_all(&gen, &truth, &AliasMap::new()).unwrap();
        let p = p.get(Component::Parallel);
        assert_eq!((p.tp, p.fp, p.fn_), (2, 0, 1));
    }

    #[test]
    fn alias_adds_to_name_rule() {
        let truth = sm(vec![StateNode::simple("Off"), StateNode::simple("Idle")], vec![]);
        let gen = sm(vec![StateNode::simple("Standby"), StateNode::simple("Idle")], vec![]);
        let mut a = AliasMap::new();
        a.insert(Namespace::State, "Standby", "Off").unwrap();
        let (_, m) = match_states(&gen, &truth, &a).unwrap();
        assert_eq!((m.tp, m.fp, m.fn_), (2, 0, 0));
        // both generated states could claim Idle; only one may have it
        let mut b = AliasMap::new();
        b.insert(Namespace::State, "Standby", "Idle").unwrap();
        let (_, m) = match_states(&gen, &truth, &b).unwrap();
        assert_eq!(m.matched.len(), 1);
        assert_eq!((m.tp, m.fp, m.fn_), (1, 1, 1));
        let mut a = b;
        assert!(a.insert(Namespace::State, "Standby", "Off").is_err());
        assert!(a.insert(Namespace::State, "Other", "Idle").is_err());
    }

    #[test]
    fn macro_is_not_pooled() {
        let r = |p: f64, rc: f64| {
            let f1 = 2.0 * p * rc / (p + rc);
            let m = Metrics { precision: p, recall: rc, f1 };
            EvalReport {
                components: Component::ALL.into_iter().map(|c| (c, None)).collect(),
                counts: BTreeMap::new(),
                aggregate: Some(m),
                scenarios: 1,
                averaging: None,
            }
        };
        let avg = macro_average(&[r(0.8, 0.9), r(0.8, 0.5)]).unwrap();
        let a = avg.aggregate.unwrap();
        assert!(close(a.precision, 0.8));
        assert!(close(a.recall, 0.7));
        assert!((a.f1 - 0.7312).abs() < 1e-4);
        assert!(avg.metrics(Component::States).is_none());
        assert_eq!(macro_average(&[]), Err(EvalError::NoReports));
    }

    #[test]
    fn hungarian_small() {
        let w = vec![vec![3, 1], vec![3, 0], vec![0, 2]];
        let a = max_weight_assignment(&w);
        let total: i64 = a
            .iter()
            .enumerate()
            .filter_map(|(i, j)| j.map(|j| w[i][j]))
            .sum();
        assert_eq!(total, 5);
    }

    #[test]
    fn report_layout() {
        let s = sm(vec![StateNode::simple("A")], vec![]);
        let r = evaluate(&s, &s, &AliasMap::new()).unwrap();
        let text = format_report(&r);
        assert!(text.contains("States                  1.0000    1.0000    1.0000"));
        let guards = text.lines().find(|l| l.starts_with("Guards")).unwrap();
        assert_eq!(guards.split_whitespace().collect::<Vec<_>>(), ["Guards", "-", "-", "-"]);
    }
}
