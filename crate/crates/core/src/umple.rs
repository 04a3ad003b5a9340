//! Emitter and parser for the Umple state machine subset.
//!
//! ```text
//! class <Name> { sm { <state>* } }          wrapper is optional
//! <state>  := <id> { <entry>* }  |  <id> ;
//! <entry>  := <event>? [ "[" guard "]" ] [ "/" "{" a1; a2 "}" ] "->" <id> ";"
//!           | <state> | "||" | "H"
//! ```
//!
//! The first substate of each region is its initial state. `||` separates
//! orthogonal regions and a bare `H` line marks a composite as having
//! (shallow) history. Transition targets name any state by simple name.

use std::collections::HashSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::{self, canonical, IrError, Region, StateKind, StateMachine, StateNode, Transition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseDiagnostic {
    pub line: usize,
    pub severity: Severity,
    pub message: String,
}

impl std::fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let sev = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "line {}: {}: {}", self.line, sev, self.message)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UmpleDocument {
    pub source_text: String,
    pub machine: StateMachine,
    pub diagnostics: Vec<ParseDiagnostic>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseMode {
    Strict,
    Lenient,
}

#[derive(Debug, Error)]
pub enum UmpleError {
    #[error("umple parse failed: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    ParseFailed(Vec<ParseDiagnostic>),
    #[error(transparent)]
    Invalid(#[from] IrError),
    #[error("text cannot be written in umple syntax: {0:?}")]
    Unencodable(String),
}

pub fn emit_umple(sm: &StateMachine) -> Result<String, UmpleError> {
    let violations = ir::validate(sm);
    if !violations.is_empty() {
        return Err(IrError::Invalid(violations).into());
    }
    for t in &sm.transitions {
        if let Some(g) = &t.guard {
            if !guard_encodable(g) {
                return Err(UmpleError::Unencodable(g.clone()));
            }
        }
        for a in &t.actions {
            if a.contains([';', '{', '}']) || !ir::is_clean_text(a) {
                return Err(UmpleError::Unencodable(a.clone()));
            }
        }
    }
    let mut out = String::new();
    let _ = writeln!(out, "class {} {{", sm.name);
    out.push_str("  sm {\n");
    for s in &sm.root_states {
        emit_state(sm, s, 2, &mut out);
    }
    out.push_str("  }\n}\n");
    Ok(out)
}

fn guard_encodable(g: &str) -> bool {
    if g.is_empty() || !ir::is_clean_text(g) {
        return false;
    }
    let mut depth = 0i32;
    for c in g.chars() {
        match c {
            '[' => depth += 1,
            ']' => {
                depth -= 1;
                if depth < 0 {
                    return false;
                }
            }
            _ => {}
        }
    }
    depth == 0
}

fn emit_state(sm: &StateMachine, node: &StateNode, depth: usize, out: &mut String) {
    let pad = "  ".repeat(depth);
    let inner = "  ".repeat(depth + 1);
    let key = canonical(&node.name);
    let outgoing: Vec<&Transition> = sm
        .transitions
        .iter()
        .filter(|t| canonical(&t.source) == key)
        .collect();
    if outgoing.is_empty() && node.regions.is_empty() {
        let _ = writeln!(out, "{pad}{} {{}}", node.name);
        return;
    }
    let _ = writeln!(out, "{pad}{} {{", node.name);
    for t in outgoing {
        out.push_str(&inner);
        if let Some(e) = &t.event {
            out.push_str(e);
            out.push(' ');
        }
        if let Some(g) = &t.guard {
            let _ = write!(out, "[{g}] ");
        }
        if !t.actions.is_empty() {
            let _ = write!(out, "/ {{ {} }} ", t.actions.join("; "));
        }
        let target = ir::find_state(sm, &t.target)
            .map(|s| s.name.as_str())
            .unwrap_or(&t.target);
        let _ = writeln!(out, "-> {target};");
    }
    if node.has_history {
        let _ = writeln!(out, "{inner}H");
    }
    for (i, region) in node.regions.iter().enumerate() {
        if i > 0 {
            let _ = writeln!(out, "{inner}||");
        }
        let init = region.substates.iter().find(|s| s.name == region.initial);
        for s in init.into_iter().chain(
            region
                .substates
                .iter()
                .filter(|s| Some(*s) != init),
        ) {
            emit_state(sm, s, depth + 1, out);
        }
    }
    let _ = writeln!(out, "{pad}}}");
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    LBrace,
    RBrace,
    LBracket,
    Slash,
    Arrow,
    Semi,
    Bars,
    Other(char),
    Eof,
}

struct Scanner<'a> {
    src: &'a [u8],
    text: &'a str,
    pos: usize,
    line: usize,
}

impl<'a> Scanner<'a> {
    fn new(text: &'a str) -> Self {
        Scanner {
            src: text.as_bytes(),
            text,
            pos: 0,
            line: 1,
        }
    }

    fn skip_trivia(&mut self) {
        loop {
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
                if self.src[self.pos] == b'\n' {
                    self.line += 1;
                }
                self.pos += 1;
            }
            if self.src[self.pos..].starts_with(b"//") {
                while self.pos < self.src.len() && self.src[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            if self.src[self.pos..].starts_with(b"/*") {
                self.pos += 2;
                while self.pos < self.src.len() && !self.src[self.pos..].starts_with(b"*/") {
                    if self.src[self.pos] == b'\n' {
                        self.line += 1;
                    }
                    self.pos += 1;
                }
                self.pos = (self.pos + 2).min(self.src.len());
                continue;
            }
            break;
        }
    }

    /// Next token and the line it starts on.
    fn lex(&mut self) -> (Tok, usize) {
        self.skip_trivia();
        let line = self.line;
        let Some(&b) = self.src.get(self.pos) else {
            return (Tok::Eof, line);
        };
        let tok = match b {
            b'{' => Tok::LBrace,
            b'}' => Tok::RBrace,
            b'[' => Tok::LBracket,
            b';' => Tok::Semi,
            b'/' => Tok::Slash,
            b'-' if self.src.get(self.pos + 1) == Some(&b'>') => {
                self.pos += 2;
                return (Tok::Arrow, line);
            }
            b'|' if self.src.get(self.pos + 1) == Some(&b'|') => {
                self.pos += 2;
                return (Tok::Bars, line);
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let start = self.pos;
                while self
                    .src
                    .get(self.pos)
                    .is_some_and(|c| c.is_ascii_alphanumeric() || *c == b'_')
                {
                    self.pos += 1;
                }
                return (Tok::Ident(self.text[start..self.pos].to_string()), line);
            }
            _ => {
                let ch = self.text[self.pos..].chars().next().unwrap();
                self.pos += ch.len_utf8();
                return (Tok::Other(ch), line);
            }
        };
        self.pos += 1;
        (tok, line)
    }

    fn peek(&mut self) -> (Tok, usize) {
        let (pos, line) = (self.pos, self.line);
        let t = self.lex();
        self.pos = pos;
        self.line = line;
        t
    }

    fn peek2(&mut self) -> Tok {
        let (pos, line) = (self.pos, self.line);
        self.lex();
        let t = self.lex().0;
        self.pos = pos;
        self.line = line;
        t
    }

    /// Raw text up to the bracket matching an already consumed opener.
    fn raw_until(&mut self, open: u8, close: u8) -> Option<String> {
        let start = self.pos;
        let mut depth = 1;
        while self.pos < self.src.len() {
            let c = self.src[self.pos];
            if c == b'\n' {
                self.line += 1;
            }
            if c == open {
                depth += 1;
            } else if c == close {
                depth -= 1;
                if depth == 0 {
                    let s = self.text[start..self.pos].to_string();
                    self.pos += 1;
                    return Some(s);
                }
            }
            self.pos += 1;
        }
        None
    }

    /// True when the rest of the current line holds no more tokens.
    fn at_line_end(&self) -> bool {
        let rest = &self.src[self.pos..];
        for &c in rest {
            match c {
                b'\n' => return true,
                b' ' | b'\t' | b'\r' | b';' => {}
                _ => return false,
            }
        }
        true
    }
}

struct RawTransition {
    line: usize,
    source: String,
    target: String,
    event: Option<String>,
    guard: Option<String>,
    actions: Vec<String>,
}

struct Parser<'a> {
    sc: Scanner<'a>,
    mode: ParseMode,
    diags: Vec<ParseDiagnostic>,
    transitions: Vec<RawTransition>,
    seen: HashSet<String>,
}

type Fatal = ();

impl<'a> Parser<'a> {
    fn diag(&mut self, line: usize, msg: impl Into<String>) -> Result<(), Fatal> {
        let severity = match self.mode {
            ParseMode::Strict => Severity::Error,
            ParseMode::Lenient => Severity::Warning,
        };
        self.diags.push(ParseDiagnostic {
            line,
            severity,
            message: msg.into(),
        });
        match self.mode {
            ParseMode::Strict => Err(()),
            ParseMode::Lenient => Ok(()),
        }
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<bool, Fatal> {
        let (t, line) = self.sc.peek();
        if t == want {
            self.sc.lex();
            Ok(true)
        } else {
            self.diag(line, format!("expected {what}, found {}", describe(&t)))?;
            Ok(false)
        }
    }

    /// Skips to just past the next `;` or up to (not past) the next `}`.
    fn recover(&mut self) {
        loop {
            match self.sc.peek().0 {
                Tok::Eof | Tok::RBrace => return,
                Tok::Semi => {
                    self.sc.lex();
                    return;
                }
                Tok::LBrace => {
                    self.sc.lex();
                    self.sc.raw_until(b'{', b'}');
                }
                _ => {
                    self.sc.lex();
                }
            }
        }
    }

    fn document(&mut self) -> Result<(String, Vec<StateNode>), Fatal> {
        let mut name = None;
        // Lenient mode skips prose until `<id> {`.
        loop {
            let (t, line) = self.sc.peek();
            match (&t, self.sc.peek2()) {
                (Tok::Ident(kw), Tok::Ident(cls)) if kw == "class" => {
                    self.sc.lex();
                    self.sc.lex();
                    if self.expect(Tok::LBrace, "'{' after class name")? {
                        name = Some(cls);
                        break;
                    }
                }
                (Tok::Ident(_), Tok::LBrace) => break,
                (Tok::Eof, _) => {
                    if self.mode == ParseMode::Strict {
                        self.diag(line, "no state machine found")?;
                    }
                    return Ok((name.unwrap_or_else(|| "Unnamed".into()), Vec::new()));
                }
                _ => {
                    if self.mode == ParseMode::Strict {
                        self.diag(line, format!("unexpected {}", describe(&t)))?;
                    }
                    self.sc.lex();
                }
            }
        }
        // state machine block
        let (t, line) = self.sc.lex();
        let sm_name = match t {
            Tok::Ident(s) => s,
            other => {
                self.diag(line, format!("expected state machine name, found {}", describe(&other)))?;
                "sm".into()
            }
        };
        self.expect(Tok::LBrace, "'{'")?;
        let mut roots = Vec::new();
        loop {
            let (t, line) = self.sc.peek();
            match t {
                Tok::RBrace => {
                    self.sc.lex();
                    break;
                }
                Tok::Eof => {
                    self.diag(line, "unexpected end of input in state machine")?;
                    break;
                }
                Tok::Ident(_) => {
                    if let Some(s) = self.state()? {
                        roots.push(s);
                    }
                }
                other => {
                    self.diag(line, format!("unexpected {} in state machine", describe(&other)))?;
                    self.sc.lex();
                }
            }
        }
        if name.is_some() {
            let (t, line) = self.sc.peek();
            match t {
                Tok::RBrace => {
                    self.sc.lex();
                }
                Tok::Eof => {
                    self.diag(line, "unexpected end of input in class")?;
                }
                other => {
                    self.diag(line, format!("expected '}}' closing class, found {}", describe(&other)))?;
                }
            }
        }
        if self.mode == ParseMode::Strict {
            let (t, line) = self.sc.peek();
            if t != Tok::Eof {
                self.diag(line, format!("trailing {}", describe(&t)))?;
            }
        }
        Ok((name.unwrap_or(sm_name), roots))
    }

    /// Parses `<id> { ... }` or `<id> ;`. Returns `None` for a dropped
    /// duplicate in lenient mode.
    fn state(&mut self) -> Result<Option<StateNode>, Fatal> {
        let (t, line) = self.sc.lex();
        let Tok::Ident(name) = t else { unreachable!() };
        let duplicate = !self.seen.insert(canonical(&name));
        if duplicate {
            self.diag(line, format!("duplicate state {name}"))?;
        }
        let (next, _) = self.sc.peek();
        if next == Tok::Semi {
            self.sc.lex();
            return Ok((!duplicate).then(|| StateNode::simple(name)));
        }
        self.expect(Tok::LBrace, "'{' after state name")?;
        let mut regions: Vec<Vec<StateNode>> = vec![Vec::new()];
        let mut history = None;
        loop {
            let (t, line) = self.sc.peek();
            match t {
                Tok::RBrace => {
                    self.sc.lex();
                    break;
                }
                Tok::Eof => {
                    self.diag(line, format!("unexpected end of input in state {name}"))?;
                    break;
                }
                Tok::Bars => {
                    self.sc.lex();
                    regions.push(Vec::new());
                }
                Tok::Ident(ref id) => {
                    let after = self.sc.peek2();
                    if id == "H" && !matches!(after, Tok::LBrace | Tok::Arrow | Tok::LBracket | Tok::Slash)
                        && self.history_marker_follows()
                    {
                        self.sc.lex();
                        if self.sc.peek().0 == Tok::Semi {
                            self.sc.lex();
                        }
                        history = Some(line);
                    } else if matches!(after, Tok::LBrace | Tok::Semi) {
                        if let Some(s) = self.state()? {
                            regions.last_mut().unwrap().push(s);
                        }
                    } else {
                        self.transition(&name)?;
                    }
                }
                Tok::Arrow | Tok::LBracket | Tok::Slash => self.transition(&name)?,
                other => {
                    self.diag(line, format!("unexpected {} in state {name}", describe(&other)))?;
                    self.recover();
                }
            }
        }
        if duplicate {
            return Ok(None);
        }
        let has_subs = regions.iter().any(|r| !r.is_empty());
        if has_subs && regions.iter().any(|r| r.is_empty()) {
            self.diag(line, format!("empty region in state {name}"))?;
            regions.retain(|r| !r.is_empty());
        } else if !has_subs && regions.len() > 1 {
            self.diag(line, format!("region separator in state {name} without substates"))?;
        }
        if !has_subs {
            if let Some(hline) = history {
                self.diag(hline, format!("history marker in simple state {name}"))?;
            }
            return Ok(Some(StateNode::simple(name)));
        }
        let regions = regions
            .into_iter()
            .enumerate()
            .map(|(i, subs)| Region::new(ir::auto_region_name(i), subs))
            .collect();
        Ok(Some(StateNode {
            name,
            kind: StateKind::Composite,
            regions,
            has_history: history.is_some(),
        }))
    }

    fn history_marker_follows(&mut self) -> bool {
        // `H` then end of line (optionally `;`)
        let (pos, line) = (self.sc.pos, self.sc.line);
        self.sc.skip_trivia();
        self.sc.pos += 1;
        let ok = self.sc.at_line_end();
        self.sc.pos = pos;
        self.sc.line = line;
        ok
    }

    fn transition(&mut self, source: &str) -> Result<(), Fatal> {
        let (_, line) = self.sc.peek();
        let mut event = None;
        let mut guard = None;
        let mut actions = Vec::new();
        if let Tok::Ident(e) = self.sc.peek().0 {
            self.sc.lex();
            event = Some(e);
        }
        if self.sc.peek().0 == Tok::LBracket {
            self.sc.lex();
            match self.sc.raw_until(b'[', b']') {
                Some(g) => {
                    let g = g.split_whitespace().collect::<Vec<_>>().join(" ");
                    if g.is_empty() {
                        self.diag(line, "empty guard")?;
                    } else {
                        guard = Some(g);
                    }
                }
                None => {
                    self.diag(line, "unterminated guard")?;
                    return Ok(());
                }
            }
        }
        if self.sc.peek().0 == Tok::Slash {
            self.sc.lex();
            if !self.expect(Tok::LBrace, "'{' opening actions")? {
                self.recover();
                return Ok(());
            }
            match self.sc.raw_until(b'{', b'}') {
                Some(body) => {
                    actions = body
                        .split(';')
                        .map(|a| a.split_whitespace().collect::<Vec<_>>().join(" "))
                        .filter(|a| !a.is_empty())
                        .collect();
                }
                None => {
                    self.diag(line, "unterminated action block")?;
                    return Ok(());
                }
            }
        }
        let (t, tline) = self.sc.peek();
        if t != Tok::Arrow {
            self.diag(tline, format!("expected '->' in transition, found {}", describe(&t)))?;
            self.recover();
            return Ok(());
        }
        self.sc.lex();
        let (t, tline) = self.sc.peek();
        let Tok::Ident(target) = t else {
            self.diag(tline, format!("expected target state, found {}", describe(&t)))?;
            self.recover();
            return Ok(());
        };
        self.sc.lex();
        let (t, tline) = self.sc.peek();
        if t == Tok::Semi {
            self.sc.lex();
        } else {
            self.diag(tline, format!("expected ';' after transition, found {}", describe(&t)))?;
        }
        self.transitions.push(RawTransition {
            line,
            source: source.to_string(),
            target,
            event,
            guard,
            actions,
        });
        Ok(())
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("identifier {s:?}"),
        Tok::LBrace => "'{'".into(),
        Tok::RBrace => "'}'".into(),
        Tok::LBracket => "'['".into(),
        Tok::Slash => "'/'".into(),
        Tok::Arrow => "'->'".into(),
        Tok::Semi => "';'".into(),
        Tok::Bars => "'||'".into(),
        Tok::Other(c) => format!("{c:?}"),
        Tok::Eof => "end of input".into(),
    }
}

/// Pulls the Umple part out of a chat answer: the first fenced block that
/// contains a `{`, or everything after an unterminated fence.
fn strip_fences(text: &str) -> &str {
    let mut rest = text;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        let body_start = after.find('\n').map(|i| i + 1).unwrap_or(after.len());
        let body = &after[body_start..];
        match body.find("```") {
            Some(close) => {
                let block = &body[..close];
                if block.contains('{') {
                    return block;
                }
                rest = &body[close + 3..];
            }
            None => return body,
        }
    }
    text
}

pub fn parse_umple(text: &str, mode: ParseMode) -> Result<UmpleDocument, UmpleError> {
    let body = match mode {
        ParseMode::Strict => text,
        ParseMode::Lenient => strip_fences(text),
    };
    // keep line numbers relative to the original text
    let offset_lines = line_of(text, body);
    let mut p = Parser {
        sc: Scanner::new(body),
        mode,
        diags: Vec::new(),
        transitions: Vec::new(),
        seen: HashSet::new(),
    };
    let parsed = p.document();
    for d in &mut p.diags {
        d.line += offset_lines;
    }
    let Ok((name, roots)) = parsed else {
        return Err(UmpleError::ParseFailed(p.diags));
    };
    let mut sm = StateMachine::new(name);
    sm.root_states = roots;
    let mut diags = p.diags;
    for raw in p.transitions {
        let src = ir::find_state(&sm, &raw.source).map(|s| s.name.clone());
        let tgt = ir::find_state(&sm, &raw.target).map(|s| s.name.clone());
        match (src, tgt) {
            (Some(source), Some(target)) => sm.transitions.push(Transition {
                source,
                target,
                event: raw.event,
                guard: raw.guard,
                actions: raw.actions,
            }),
            (_, None) => {
                let d = ParseDiagnostic {
                    line: raw.line + offset_lines,
                    severity: if mode == ParseMode::Strict {
                        Severity::Error
                    } else {
                        Severity::Warning
                    },
                    message: format!("unknown target state {} (transition dropped)", raw.target),
                };
                diags.push(d);
            }
            (None, Some(_)) => unreachable!("source is the enclosing state"),
        }
    }
    if mode == ParseMode::Strict && diags.iter().any(|d| d.severity == Severity::Error) {
        return Err(UmpleError::ParseFailed(diags));
    }
    sm.collect_events();
    sm.group_transitions();
    debug_assert!(!diags.is_empty() || ir::validate(&sm).is_empty());
    Ok(UmpleDocument {
        source_text: text.to_string(),
        machine: sm,
        diagnostics: diags,
    })
}

fn line_of(text: &str, sub: &str) -> usize {
    let base = text.as_ptr() as usize;
    let start = sub.as_ptr() as usize;
    if start < base || start > base + text.len() {
        return 0;
    }
    text[..start - base].matches('\n').count()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> StateMachine {
        let mut sm = StateMachine::new("Toy");
        sm.root_states = vec![StateNode::simple("A"), StateNode::simple("B")];
        sm.transitions.push(Transition::new("A", "B").on("go"));
        sm.collect_events();
        sm
    }

    #[test]
    fn emits_transition_inside_source() {
        let text = emit_umple(&two_state()).unwrap();
        assert_eq!(
            text,
            "class Toy {\n  sm {\n    A {\n      go -> B;\n    }\n    B {}\n  }\n}\n"
        );
    }

    #[test]
    fn regions_are_separated_by_bars() {
        let mut sm = StateMachine::new("P");
        sm.root_states.push(StateNode::composite(
            "X",
            vec![vec![StateNode::simple("A")], vec![StateNode::simple("B")]],
        ));
        let text = emit_umple(&sm).unwrap();
        assert!(text.contains("      ||\n"), "{text}");
        let back = parse_umple(&text, ParseMode::Strict).unwrap();
        assert_eq!(back.machine, sm);
        assert!(back.diagnostics.is_empty());
    }

    #[test]
    fn full_feature_round_trip() {
        let mut sm = StateMachine::new("Oven");
        sm.root_states = vec![
            StateNode::simple("Idle"),
            StateNode::composite(
                "Busy",
                vec![vec![StateNode::simple("Heat"), StateNode::simple("Hold")]],
            )
            .with_history(),
        ];
        sm.transitions = vec![
            Transition::new("Idle", "Busy")
                .on("start")
                .guarded("door == closed && t[0] > 1")
                .action("lamp on")
                .action("fan()"),
            Transition::new("Busy", "Idle").on("cancel"),
            Transition::new("Heat", "Hold").guarded("hot"),
        ];
        sm.collect_events();
        let text = emit_umple(&sm).unwrap();
        let doc = parse_umple(&text, ParseMode::Strict).unwrap();
        assert_eq!(doc.machine, sm, "{text}");
    }

    #[test]
    fn fenced_answer_parses_leniently() {
        let text = emit_umple(&two_state()).unwrap();
        let answer = format!("Sure! Here is the model:\n\n```umple\n{text}```\n\nLet me know.");
        let doc = parse_umple(&answer, ParseMode::Lenient).unwrap();
        assert_eq!(doc.machine, two_state());
        assert!(doc.diagnostics.iter().all(|d| d.severity != Severity::Error));
        assert!(doc.diagnostics.is_empty());
        assert!(parse_umple(&answer, ParseMode::Strict).is_err());
    }

    #[test]
    fn malformed_transition_dropped_with_one_warning() {
        let doc = parse_umple("state machine sm { A { go -> ; } }", ParseMode::Lenient).unwrap();
        assert_eq!(doc.machine.root_states, vec![StateNode::simple("A")]);
        assert!(doc.machine.transitions.is_empty());
        assert_eq!(doc.diagnostics.len(), 1);
        assert_eq!(doc.diagnostics[0].severity, Severity::Warning);
    }

    #[test]
    fn strict_rejects_malformed_transition() {
        let err = parse_umple("sm { A { go -> ; } }", ParseMode::Strict).unwrap_err();
        let UmpleError::ParseFailed(d) = err else { panic!() };
        assert_eq!(d[0].line, 1);
        assert_eq!(d[0].severity, Severity::Error);
    }

    #[test]
    fn unknown_target_is_dropped_leniently() {
        let doc = parse_umple("sm { A { go -> Ghost; } }", ParseMode::Lenient).unwrap();
        assert!(doc.machine.transitions.is_empty());
        assert!(doc.diagnostics[0].message.contains("Ghost"));
        assert!(parse_umple("sm { A { go -> Ghost; } }", ParseMode::Strict).is_err());
    }

    #[test]
    fn truncated_answer_keeps_prefix() {
        let text = "```umple\nclass T {\n  sm {\n    A {\n      go -> B;\n    }\n    B {\n      back -> A;\n      ne";
        let doc = parse_umple(text, ParseMode::Lenient).unwrap();
        assert_eq!(doc.machine.all_states().len(), 2);
        assert_eq!(doc.machine.transitions.len(), 2);
        assert!(!doc.diagnostics.is_empty());
    }

    #[test]
    fn history_marker_and_forward_reference() {
        let text = "class C {\n sm {\n  Top {\n   H\n   x -> Other;\n   Inner {}\n  }\n  Other { y -> Inner; }\n }\n}\n";
        let doc = parse_umple(text, ParseMode::Strict).unwrap();
        let top = &doc.machine.root_states[0];
        assert!(top.has_history);
        assert_eq!(doc.machine.transitions.len(), 2);
        assert_eq!(doc.machine.transitions[1].target, "Inner");
    }

    #[test]
    fn history_on_simple_state() {
        let text = "sm {\n  A {\n    H\n  }\n}";
        assert!(parse_umple(text, ParseMode::Strict).is_err());
        let doc = parse_umple(text, ParseMode::Lenient).unwrap();
        assert!(!doc.machine.root_states[0].has_history);
        assert_eq!(doc.diagnostics.len(), 1);
        assert_eq!(doc.diagnostics[0].line, 3);
    }

    #[test]
    fn event_named_h_is_a_transition() {
        let doc = parse_umple("sm { A { H -> B; } B; }", ParseMode::Strict).unwrap();
        assert_eq!(doc.machine.transitions[0].event.as_deref(), Some("H"));
    }

    #[test]
    fn unencodable_action_is_rejected() {
        let mut sm = two_state();
        sm.transitions[0].actions.push("a; b".into());
        assert!(matches!(emit_umple(&sm), Err(UmpleError::Unencodable(_))));
    }
}
