//! Machine-readable score payload exchanged with model coders.
//!
//! ```text
//! {
//!   "1": {"Theme name": 70, "Other theme": 5},
//!   "2": {...},
//!   "justifications": [{"statement": 1, "theme": "Theme name", "reason": "..."}]
//! }
//! ```
//!
//! Keys are statement ids, values map every theme name to an integer score
//! in `[0, 100]`. `justifications` is optional and only requested on revision
//! passes. A single surrounding markdown code fence is tolerated; anything
//! else outside the object is not.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::corpus::{Codebook, Corpus, Dims};
use crate::matrix::{Cell, CellNote, ScoreMatrix, SCORE_MAX, SCORE_MIN};

pub const JUSTIFICATIONS_KEY: &str = "justifications";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PayloadError {
    #[error("malformed payload: {0}")]
    Malformed(String),
    #[error("unknown statement id(s) {0:?}")]
    UnknownStatements(Vec<String>),
    #[error("unknown theme name(s) {names:?}; expected one of {candidates:?}")]
    UnknownThemes { names: Vec<String>, candidates: Vec<String> },
    #[error("cell(s) given more than once: {}", list_cells(.0))]
    DuplicateCells(Vec<Cell>),
    #[error("non-integer score(s): {}", .0.iter().map(|(c, v)| format!("{c} = {v}")).collect::<Vec<_>>().join(", "))]
    NonIntegerScores(Vec<(Cell, String)>),
    #[error("score(s) outside [0, 100]: {}", .0.iter().map(|(c, v)| format!("{c} = {v}")).collect::<Vec<_>>().join(", "))]
    OutOfRange(Vec<(Cell, i64)>),
    #[error("{} missing cell(s): {}", .0.len(), list_cells(.0))]
    MissingCells(Vec<Cell>),
}

fn list_cells(cells: &[Cell]) -> String {
    cells.iter().map(Cell::to_string).collect::<Vec<_>>().join(", ")
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseOptions {
    /// Also collapse interior whitespace runs when matching theme names.
    /// Case folding and trimming always apply; nothing fuzzier ever does.
    pub repair: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireJustification {
    pub statement: u32,
    pub theme: String,
    pub reason: String,
}

/// Canonical payload text for `m`: statements and themes in id order.
pub fn render_payload(m: &ScoreMatrix, codebook: &Codebook) -> String {
    let dims = m.dims();
    let mut names: Vec<(u32, &str)> = codebook.themes().iter().map(|t| (t.id, t.name.as_str())).collect();
    names.sort_by_key(|(id, _)| *id);
    let mut out = String::from("{\n");
    for (s, row) in m.rows().enumerate() {
        let fields: Vec<String> = row
            .iter()
            .zip(&names)
            .map(|(v, (_, name))| format!("{}: {v}", json_string(name)))
            .collect();
        let comma = if s + 1 < dims.statements || !m.justifications().is_empty() { "," } else { "" };
        let _ = writeln!(out, "  \"{}\": {{{}}}{comma}", s + 1, fields.join(", "));
    }
    if !m.justifications().is_empty() {
        let entries: Vec<String> = m
            .justifications()
            .iter()
            .map(|n| {
                let theme = codebook.theme(n.cell.theme).map_or("", |t| t.name.as_str());
                format!(
                    "    {{\"statement\": {}, \"theme\": {}, \"reason\": {}}}",
                    n.cell.statement,
                    json_string(theme),
                    json_string(&n.text)
                )
            })
            .collect();
        let _ = writeln!(out, "  \"{JUSTIFICATIONS_KEY}\": [\n{}\n  ]", entries.join(",\n"));
    }
    out.push('}');
    out
}

fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("strings serialize")
}

fn strip_fence(text: &str) -> &str {
    let t = text.trim();
    let Some(rest) = t.strip_prefix("```") else { return t };
    let body = rest.split_once('\n').map_or("", |(_, b)| b);
    body.trim_end().strip_suffix("```").unwrap_or(body).trim()
}

/// Parses a payload into a complete matrix for `corpus` x `codebook`.
pub fn parse_payload(
    text: &str,
    coder_id: &str,
    codebook: &Codebook,
    corpus: &Corpus,
    opts: ParseOptions,
) -> Result<ScoreMatrix, PayloadError> {
    let dims = Dims::new(corpus.len(), codebook.len());
    let root: Value = serde_json::from_str(strip_fence(text)).map_err(|e| PayloadError::Malformed(e.to_string()))?;
    let Value::Object(map) = root else {
        return Err(PayloadError::Malformed("top level is not a JSON object".into()));
    };

    let resolve = |name: &str| codebook.find_theme(name, opts.repair).map(|t| t.id);
    let mut unknown_statements = Vec::new();
    let mut unknown_themes = BTreeSet::new();
    let mut duplicates = Vec::new();
    let mut non_integer = Vec::new();
    let mut out_of_range = Vec::new();
    let mut grid: Vec<Option<u8>> = vec![None; dims.cells()];
    let mut notes = Vec::new();

    for (key, value) in &map {
        if key == JUSTIFICATIONS_KEY {
            let entries: Vec<WireJustification> = serde_json::from_value(value.clone())
                .map_err(|e| PayloadError::Malformed(format!("{JUSTIFICATIONS_KEY}: {e}")))?;
            for j in entries {
                if corpus.statement(j.statement).is_none() {
                    unknown_statements.push(j.statement.to_string());
                    continue;
                }
                let Some(theme) = resolve(&j.theme) else {
                    unknown_themes.insert(j.theme.clone());
                    continue;
                };
                if !j.reason.trim().is_empty() {
                    notes.push(CellNote { cell: Cell::new(j.statement, theme), text: j.reason.trim().to_string() });
                }
            }
            continue;
        }
        let statement = match key.trim().parse::<u32>() {
            Ok(id) if corpus.statement(id).is_some() => id,
            _ => {
                unknown_statements.push(key.clone());
                continue;
            }
        };
        let Value::Object(scores) = value else {
            return Err(PayloadError::Malformed(format!("statement {statement}: expected an object of theme scores")));
        };
        for (name, score) in scores {
            let Some(theme) = resolve(name) else {
                unknown_themes.insert(name.clone());
                continue;
            };
            let cell = Cell::new(statement, theme);
            let slot = (statement as usize - 1) * dims.themes + (theme as usize - 1);
            let value = match score.as_i64() {
                Some(v) => v,
                None => {
                    non_integer.push((cell, score.to_string()));
                    continue;
                }
            };
            if !(SCORE_MIN as i64..=SCORE_MAX as i64).contains(&value) {
                out_of_range.push((cell, value));
                continue;
            }
            if grid[slot].replace(value as u8).is_some() {
                duplicates.push(cell);
            }
        }
    }

    if !unknown_statements.is_empty() {
        return Err(PayloadError::UnknownStatements(unknown_statements));
    }
    if !unknown_themes.is_empty() {
        return Err(PayloadError::UnknownThemes {
            names: unknown_themes.into_iter().collect(),
            candidates: codebook.theme_names(),
        });
    }
    if !duplicates.is_empty() {
        duplicates.sort();
        return Err(PayloadError::DuplicateCells(duplicates));
    }
    if !non_integer.is_empty() {
        non_integer.sort();
        return Err(PayloadError::NonIntegerScores(non_integer));
    }
    if !out_of_range.is_empty() {
        out_of_range.sort();
        return Err(PayloadError::OutOfRange(out_of_range));
    }
    let missing: Vec<Cell> = crate::matrix::cells(dims).zip(&grid).filter(|(_, v)| v.is_none()).map(|(c, _)| c).collect();
    if !missing.is_empty() {
        return Err(PayloadError::MissingCells(missing));
    }

    let scores = grid.into_iter().map(|v| v.expect("no missing cells")).collect();
    let mut m = ScoreMatrix::new(coder_id, 1, dims, scores).map_err(|e| PayloadError::Malformed(e.to_string()))?;
    m.set_justifications(notes).map_err(|e| PayloadError::Malformed(e.to_string()))?;
    Ok(m)
}
