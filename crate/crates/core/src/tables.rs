//! The three-table HTML representation exchanged with the LLM by the
//! multi-step strategies.
//!
//! | table       | columns                                      |
//! |-------------|----------------------------------------------|
//! | States      | Name, Parent, Region, Kind                   |
//! | Transitions | Source, Target, Event, Guard, Actions (`;`)  |
//! | Structure   | Composite, Region, Substates (`,`), History  |
//!
//! An auxiliary single-column `Event` table is understood when parsing
//! (event lists), but never emitted by [`emit_tables`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::html::{encode_entities, extract_html_tables, RawTable};
use crate::ir::{self, canonical, Component, IrError, StateMachine, StateNode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    Simple,
    Composite,
    HistoryMarker,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateRow {
    pub name: String,
    pub parent: Option<String>,
    pub region: Option<String>,
    pub kind: RowKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionRow {
    pub source: String,
    pub target: String,
    pub event: Option<String>,
    pub guard: Option<String>,
    pub actions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureRow {
    pub composite: String,
    pub region: String,
    pub substates: Vec<String>,
    pub has_history: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartialModel {
    pub states_rows: Vec<StateRow>,
    pub transition_rows: Vec<TransitionRow>,
    pub structure_rows: Vec<StructureRow>,
    /// Event names from an `Event` table, in order.
    #[serde(default)]
    pub events: Vec<String>,
    /// Step id of the last successful parse of each component.
    #[serde(default)]
    pub provenance: BTreeMap<Component, String>,
}

impl PartialModel {
    pub fn is_empty(&self) -> bool {
        self.states_rows.is_empty()
            && self.transition_rows.is_empty()
            && self.structure_rows.is_empty()
    }
}

/// Result of [`parse_tables`]: the rows found plus which components had a
/// table (and columns) to come from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedTables {
    pub model: PartialModel,
    pub parsed: BTreeSet<Component>,
    pub has_events: bool,
    pub warnings: Vec<String>,
}

impl ParsedTables {
    pub fn ok(&self, c: Component) -> bool {
        self.parsed.contains(&c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Schema {
    States,
    Transitions,
    Structure,
    Events,
}

/// Canonical header names and the spellings accepted for them.
const COLUMNS: &[(&str, &[&str])] = &[
    ("name", &["name", "state", "statename"]),
    ("parent", &["parent", "parentstate", "superstate"]),
    ("region", &["region", "parallelregion"]),
    ("kind", &["kind", "type", "statekind"]),
    ("source", &["source", "from", "sourcestate"]),
    ("target", &["target", "to", "targetstate"]),
    ("event", &["event", "trigger", "events"]),
    ("guard", &["guard", "guards", "guardcondition", "condition"]),
    ("actions", &["actions", "action", "effect", "effects"]),
    ("composite", &["composite", "compositestate"]),
    ("substates", &["substates", "substate", "children"]),
    ("history", &["history", "hashistory", "historystate"]),
];

struct Header {
    cols: BTreeMap<&'static str, usize>,
}

impl Header {
    fn new(raw: &[String]) -> Self {
        let mut cols = BTreeMap::new();
        for (i, h) in raw.iter().enumerate() {
            let key = canonical(h);
            if let Some((name, _)) = COLUMNS.iter().find(|(_, spell)| spell.contains(&key.as_str())) {
                cols.entry(*name).or_insert(i);
            }
        }
        Header { cols }
    }

    fn has(&self, col: &str) -> bool {
        self.cols.contains_key(col)
    }

    fn cell<'r>(&self, row: &'r [String], col: &str) -> Option<&'r str> {
        let i = *self.cols.get(col)?;
        row.get(i).map(String::as_str).filter(|s| !is_blank(s))
    }

    fn schema(&self) -> Option<Schema> {
        if self.has("source") && self.has("target") {
            Some(Schema::Transitions)
        } else if self.has("composite") && self.has("substates") {
            Some(Schema::Structure)
        } else if self.has("name") {
            Some(Schema::States)
        } else if self.has("event") {
            Some(Schema::Events)
        } else {
            None
        }
    }
}

fn is_blank(s: &str) -> bool {
    matches!(
        s.trim().to_ascii_lowercase().as_str(),
        "" | "-" | "--" | "none" | "n/a" | "na" | "null"
    )
}

fn parse_kind(s: Option<&str>) -> RowKind {
    let Some(s) = s else { return RowKind::Simple };
    let k = canonical(s);
    if k.contains("history") || k == "h" {
        RowKind::HistoryMarker
    } else if k.contains("composite") || k.contains("super") || k.contains("hierarch") {
        RowKind::Composite
    } else {
        RowKind::Simple
    }
}

fn parse_yes(s: Option<&str>) -> bool {
    s.is_some_and(|s| {
        matches!(
            s.trim().to_ascii_lowercase().as_str(),
            "yes" | "y" | "true" | "x" | "h" | "shallow" | "deep"
        )
    })
}

fn split_list(s: &str, sep: char) -> Vec<String> {
    s.split(sep)
        .map(str::trim)
        .filter(|p| !is_blank(p))
        .map(str::to_string)
        .collect()
}

/// Classifies tables by header row and collects their rows.
pub fn parse_tables(tables: &[RawTable]) -> ParsedTables {
    let mut out = ParsedTables::default();
    for (ti, table) in tables.iter().enumerate() {
        let header = Header::new(table.header());
        let Some(schema) = header.schema() else {
            out.warnings.push(format!("table {} ignored: unrecognised header", ti + 1));
            continue;
        };
        match schema {
            Schema::States => {
                out.parsed.insert(Component::States);
                if header.has("parent") {
                    out.parsed.insert(Component::Hierarchical);
                }
                if header.has("region") {
                    out.parsed.insert(Component::Parallel);
                }
                if header.has("kind") {
                    out.parsed.insert(Component::History);
                }
                for (ri, row) in table.body().iter().enumerate() {
                    let kind = parse_kind(header.cell(row, "kind"));
                    let parent = header.cell(row, "parent").map(str::to_string);
                    let name = header.cell(row, "name").map(str::to_string);
                    match (name, kind) {
                        (_, RowKind::HistoryMarker) if parent.is_none() => out.warnings.push(
                            format!("states row {} skipped: history marker without parent", ri + 1),
                        ),
                        (None, RowKind::HistoryMarker) => out.model.states_rows.push(StateRow {
                            name: "H".into(),
                            parent,
                            region: None,
                            kind,
                        }),
                        (None, _) => out
                            .warnings
                            .push(format!("states row {} skipped: missing name", ri + 1)),
                        (Some(name), kind) => out.model.states_rows.push(StateRow {
                            name,
                            parent,
                            region: header.cell(row, "region").map(str::to_string),
                            kind,
                        }),
                    }
                }
            }
            Schema::Transitions => {
                out.parsed.insert(Component::Transitions);
                if header.has("guard") {
                    out.parsed.insert(Component::Guards);
                }
                if header.has("actions") {
                    out.parsed.insert(Component::Actions);
                }
                for (ri, row) in table.body().iter().enumerate() {
                    let (Some(source), Some(target)) =
                        (header.cell(row, "source"), header.cell(row, "target"))
                    else {
                        out.warnings.push(format!(
                            "transitions row {} skipped: missing source or target",
                            ri + 1
                        ));
                        continue;
                    };
                    out.model.transition_rows.push(TransitionRow {
                        source: source.to_string(),
                        target: target.to_string(),
                        event: header.cell(row, "event").map(str::to_string),
                        guard: header.cell(row, "guard").map(str::to_string),
                        actions: header
                            .cell(row, "actions")
                            .map(|a| split_list(a, ';'))
                            .unwrap_or_default(),
                    });
                }
            }
            Schema::Structure => {
                out.parsed.insert(Component::Hierarchical);
                if header.has("region") {
                    out.parsed.insert(Component::Parallel);
                }
                if header.has("history") {
                    out.parsed.insert(Component::History);
                }
                for (ri, row) in table.body().iter().enumerate() {
                    let composite = header.cell(row, "composite");
                    let subs = header
                        .cell(row, "substates")
                        .map(|s| split_list(s, ','))
                        .unwrap_or_default();
                    let Some(composite) = composite.filter(|_| !subs.is_empty()) else {
                        out.warnings.push(format!(
                            "structure row {} skipped: missing composite or substates",
                            ri + 1
                        ));
                        continue;
                    };
                    out.model.structure_rows.push(StructureRow {
                        composite: composite.to_string(),
                        region: header.cell(row, "region").unwrap_or("").to_string(),
                        substates: subs,
                        has_history: parse_yes(header.cell(row, "history")),
                    });
                }
            }
            Schema::Events => {
                out.has_events = true;
                for row in table.body() {
                    if let Some(e) = header.cell(row, "event") {
                        out.model.events.push(e.to_string());
                    }
                }
            }
        }
    }
    out
}

/// `extract_html_tables` followed by `parse_tables`.
pub fn parse_response(response: &str) -> ParsedTables {
    parse_tables(&extract_html_tables(response))
}

/// Deterministic three-table HTML rendering of a valid machine.
pub fn emit_tables(sm: &StateMachine) -> Result<String, IrError> {
    let v = ir::validate(sm);
    if !v.is_empty() {
        return Err(IrError::Invalid(v));
    }
    let mut out = String::new();
    let row = |out: &mut String, tag: &str, cells: &[&str]| {
        out.push_str("<tr>");
        for c in cells {
            let _ = write!(out, "<{tag}>{}</{tag}>", encode_entities(c));
        }
        out.push_str("</tr>\n");
    };

    out.push_str("<table>\n");
    row(&mut out, "th", &["Name", "Parent", "Region", "Kind"]);
    fn walk<'a>(
        node: &'a StateNode,
        parent: Option<(&'a str, &'a str)>,
        acc: &mut Vec<(&'a StateNode, Option<(&'a str, &'a str)>)>,
    ) {
        acc.push((node, parent));
        for r in &node.regions {
            for s in ordered(r) {
                walk(s, Some((&node.name, &r.name)), acc);
            }
        }
    }
    let mut nodes = Vec::new();
    for s in &sm.root_states {
        walk(s, None, &mut nodes);
    }
    for (node, parent) in &nodes {
        let (p, r) = parent.unwrap_or(("", ""));
        let kind = if node.is_composite() { "composite" } else { "simple" };
        row(&mut out, "td", &[&node.name, p, r, kind]);
        if node.has_history {
            row(&mut out, "td", &["H", &node.name, "", "history"]);
        }
    }
    out.push_str("</table>\n");

    out.push_str("<table>\n");
    row(&mut out, "th", &["Source", "Target", "Event", "Guard", "Actions"]);
    let mut grouped = sm.clone();
    grouped.group_transitions();
    for t in &grouped.transitions {
        let actions = t.actions.join("; ");
        row(
            &mut out,
            "td",
            &[
                &t.source,
                &t.target,
                t.event.as_deref().unwrap_or(""),
                t.guard.as_deref().unwrap_or(""),
                &actions,
            ],
        );
    }
    out.push_str("</table>\n");

    out.push_str("<table>\n");
    row(&mut out, "th", &["Composite", "Region", "Substates", "History"]);
    for (node, _) in &nodes {
        for r in &node.regions {
            let subs: Vec<&str> = ordered(r).map(|s| s.name.as_str()).collect();
            let hist = if node.has_history { "yes" } else { "no" };
            row(&mut out, "td", &[&node.name, &r.name, &subs.join(", "), hist]);
        }
    }
    out.push_str("</table>\n");
    Ok(out)
}

fn html_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::from("<table>\n<tr>");
    for h in header {
        let _ = write!(out, "<th>{h}</th>");
    }
    out.push_str("</tr>\n");
    for r in rows {
        out.push_str("<tr>");
        for c in r {
            let _ = write!(out, "<td>{}</td>", encode_entities(c));
        }
        out.push_str("</tr>\n");
    }
    out.push_str("</table>\n");
    out
}

/// HTML rendering of accumulated rows, used to show a model in progress.
/// Tables without rows are left out; an empty model renders as `""`.
pub fn emit_partial(p: &PartialModel) -> String {
    let mut out = String::new();
    if !p.states_rows.is_empty() {
        let rows: Vec<Vec<String>> = p
            .states_rows
            .iter()
            .map(|r| {
                let kind = match r.kind {
                    RowKind::Simple => "simple",
                    RowKind::Composite => "composite",
                    RowKind::HistoryMarker => "history",
                };
                vec![
                    r.name.clone(),
                    r.parent.clone().unwrap_or_default(),
                    r.region.clone().unwrap_or_default(),
                    kind.to_string(),
                ]
            })
            .collect();
        out.push_str(&html_table(&["Name", "Parent", "Region", "Kind"], &rows));
    }
    if !p.events.is_empty() {
        let rows: Vec<Vec<String>> = p.events.iter().map(|e| vec![e.clone()]).collect();
        out.push_str(&html_table(&["Event"], &rows));
    }
    if !p.transition_rows.is_empty() {
        let rows: Vec<Vec<String>> = p
            .transition_rows
            .iter()
            .map(|t| {
                vec![
                    t.source.clone(),
                    t.target.clone(),
                    t.event.clone().unwrap_or_default(),
                    t.guard.clone().unwrap_or_default(),
                    t.actions.join("; "),
                ]
            })
            .collect();
        out.push_str(&html_table(
            &["Source", "Target", "Event", "Guard", "Actions"],
            &rows,
        ));
    }
    if !p.structure_rows.is_empty() {
        let rows: Vec<Vec<String>> = p
            .structure_rows
            .iter()
            .map(|r| {
                vec![
                    r.composite.clone(),
                    r.region.clone(),
                    r.substates.join(", "),
                    if r.has_history { "yes" } else { "no" }.to_string(),
                ]
            })
            .collect();
        out.push_str(&html_table(
            &["Composite", "Region", "Substates", "History"],
            &rows,
        ));
    }
    out
}

/// Substates of a region with the initial one first.
fn ordered(r: &ir::Region) -> impl Iterator<Item = &StateNode> {
    let init = r.substates.iter().find(|s| s.name == r.initial);
    init.into_iter()
        .chain(r.substates.iter().filter(move |s| Some(*s) != init))
}
