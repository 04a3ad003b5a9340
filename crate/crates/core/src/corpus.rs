//! Scenario directories: a prose description, a ground-truth model and a
//! metadata file with declared component counts and name aliases.
//!
//! ```text
//! <id>/description.txt
//! <id>/model.ump
//! <id>/meta.txt      key = value lines and `<namespace>: gen = truth` aliases
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::eval::{AliasMap, EvalError, Namespace};
use crate::ir::{Component, ComponentCounts, StateMachine};
use crate::umple::{parse_umple, ParseMode, UmpleError};

pub const DESCRIPTION_FILE: &str = "description.txt";
pub const MODEL_FILE: &str = "model.ump";
pub const META_FILE: &str = "meta.txt";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Meta {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Model { path: PathBuf, source: UmpleError },
    #[error("{path}: {source}")]
    Alias { path: PathBuf, source: EvalError },
    #[error("no scenario directories under {0}")]
    Empty(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: String,
    pub description: String,
    pub truth: StateMachine,
    /// Ground-truth text as stored on disk.
    pub model_text: String,
    pub declared: ComponentCounts,
    pub aliases: AliasMap,
    pub is_example_pool_member: bool,
    /// Position in the few-shot pool (lower first).
    pub pool_rank: Option<u32>,
    /// Column of the published summary table this scenario reproduces.
    pub table_i_column: Option<String>,
    pub dir: PathBuf,
}

/// Declared component counts of the eight published ground truths.
pub const TABLE_I: [(&str, &str, [usize; 7]); 8] = [
    ("P", "Printer", [6, 17, 6, 3, 2, 0, 1]),
    ("SM", "Spa Manager", [11, 17, 4, 0, 3, 5, 1]),
    ("D", "Dishwasher", [9, 17, 4, 7, 2, 2, 1]),
    ("C", "Chess Clock", [9, 16, 4, 6, 3, 2, 1]),
    ("B", "Bread Maker", [9, 17, 4, 5, 3, 0, 1]),
    ("T", "Thermomix TM6", [9, 17, 7, 6, 1, 0, 1]),
    ("W", "W-UMPLE", [17, 41, 5, 24, 5, 2, 1]),
    ("S", "SSC7", [7, 24, 10, 16, 1, 0, 1]),
];

fn counts_from(values: [usize; 7]) -> ComponentCounts {
    let mut c = ComponentCounts::default();
    for (comp, v) in Component::ALL.into_iter().zip(values) {
        c.set(comp, v);
    }
    c
}

/// Published counts for a column key such as `"P"`.
pub fn table_i(column: &str) -> Option<ComponentCounts> {
    TABLE_I
        .iter()
        .find(|(k, _, _)| k.eq_ignore_ascii_case(column))
        .map(|(_, _, v)| counts_from(*v))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountMismatch {
    pub component: Component,
    pub declared: usize,
    pub actual: usize,
}

impl fmt::Display for CountMismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: declared {}, actual {}",
            self.component, self.declared, self.actual
        )
    }
}

fn compare(expected: &ComponentCounts, actual: &ComponentCounts) -> Vec<CountMismatch> {
    Component::ALL
        .into_iter()
        .filter(|&c| expected.get(c) != actual.get(c))
        .map(|c| CountMismatch {
            component: c,
            declared: expected.get(c),
            actual: actual.get(c),
        })
        .collect()
}

/// Compares the ground truth's counts with the declared ones. A scenario
/// tied to a published column must also declare that column's counts.
pub fn verify_counts(s: &Scenario) -> Result<(), Vec<CountMismatch>> {
    let actual = s
        .truth
        .counts()
        .expect("loaded ground truths are validated");
    let mut out = compare(&s.declared, &actual);
    if let Some(published) = s.table_i_column.as_deref().and_then(table_i) {
        for m in compare(&published, &actual) {
            if !out.contains(&m) {
                out.push(m);
            }
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

fn read(path: &Path) -> Result<String, CorpusError> {
    match std::fs::read_to_string(path) {
        Ok(s) => Ok(s),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            Err(CorpusError::MissingFile(path.to_path_buf()))
        }
        Err(e) => Err(CorpusError::Io {
            path: path.to_path_buf(),
            source: e,
        }),
    }
}

#[derive(Debug, Default)]
struct Meta {
    id: Option<String>,
    declared: ComponentCounts,
    example_pool: bool,
    pool_rank: Option<u32>,
    table_i: Option<String>,
    aliases: AliasMap,
}

fn parse_meta(path: &Path, text: &str) -> Result<Meta, CorpusError> {
    let mut meta = Meta::default();
    let mut seen = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| CorpusError::Meta {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        if let Some((head, rest)) = line.split_once(':') {
            if let Some(ns) = Namespace::from_key(head.trim()) {
                let (g, t) = rest
                    .split_once('=')
                    .ok_or_else(|| err(format!("alias needs `gen = truth`: {line}")))?;
                meta.aliases
                    .insert(ns, g.trim(), t.trim())
                    .map_err(|e| CorpusError::Alias {
                        path: path.to_path_buf(),
                        source: e,
                    })?;
                continue;
            }
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = value`: {line}")))?;
        let (key, value) = (key.trim(), value.trim());
        let number = || {
            value
                .parse::<usize>()
                .map_err(|_| err(format!("{key} must be a count, got {value:?}")))
        };
        match key {
            "id" => meta.id = Some(value.to_string()),
            "example_pool" => {
                meta.example_pool = match value {
                    "true" | "yes" => true,
                    "false" | "no" => false,
                    _ => return Err(err(format!("example_pool must be true or false, got {value:?}"))),
                }
            }
            "pool_rank" => meta.pool_rank = Some(number()? as u32),
            "table_i" => meta.table_i = Some(value.to_string()),
            _ => match Component::from_key(key) {
                Some(c) => {
                    meta.declared.set(c, number()?);
                    seen.push(c);
                }
                None => return Err(err(format!("unknown key {key:?}"))),
            },
        }
    }
    if let Some(missing) = Component::ALL.into_iter().find(|c| !seen.contains(c)) {
        return Err(CorpusError::Meta {
            path: path.to_path_buf(),
            line: 0,
            message: format!("missing declared count for {missing}"),
        });
    }
    Ok(meta)
}

/// Reads one scenario directory; the model must parse strictly.
pub fn load_scenario(dir: &Path) -> Result<Scenario, CorpusError> {
    let model_path = dir.join(MODEL_FILE);
    let meta_path = dir.join(META_FILE);
    let description = read(&dir.join(DESCRIPTION_FILE))?;
    let model_text = read(&model_path)?;
    let meta = parse_meta(&meta_path, &read(&meta_path)?)?;
    let doc = parse_umple(&model_text, ParseMode::Strict).map_err(|e| CorpusError::Model {
        path: model_path.clone(),
        source: e,
    })?;
    let id = meta.id.unwrap_or_else(|| {
        dir.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    Ok(Scenario {
        id,
        description: description.trim_end().to_string(),
        truth: doc.machine,
        model_text,
        declared: meta.declared,
        aliases: meta.aliases,
        is_example_pool_member: meta.example_pool,
        pool_rank: meta.pool_rank,
        table_i_column: meta.table_i,
        dir: dir.to_path_buf(),
    })
}

/// Every subdirectory holding a meta file, ordered by pool rank then id.
pub fn load_corpus(root: &Path) -> Result<Vec<Scenario>, CorpusError> {
    let entries = std::fs::read_dir(root).map_err(|e| CorpusError::Io {
        path: root.to_path_buf(),
        source: e,
    })?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.is_dir() && p.join(META_FILE).is_file())
        .collect();
    dirs.sort();
    let mut out = dirs
        .iter()
        .map(|d| load_scenario(d))
        .collect::<Result<Vec<_>, _>>()?;
    if out.is_empty() {
        return Err(CorpusError::Empty(root.to_path_buf()));
    }
    out.sort_by(|a, b| {
        (a.pool_rank.unwrap_or(u32::MAX), &a.id).cmp(&(b.pool_rank.unwrap_or(u32::MAX), &b.id))
    });
    Ok(out)
}

/// Ids of pool members in pool order.
pub fn example_pool(scenarios: &[Scenario]) -> Vec<String> {
    let mut pool: Vec<&Scenario> = scenarios.iter().filter(|s| s.is_example_pool_member).collect();
    pool.sort_by(|a, b| {
        (a.pool_rank.unwrap_or(u32::MAX), &a.id).cmp(&(b.pool_rank.unwrap_or(u32::MAX), &b.id))
    });
    pool.into_iter().map(|s| s.id.clone()).collect()
}
