//! Per-coder statement-by-theme matrices.
//!
//! Cells are addressed by 1-based statement and theme ids and stored
//! row-major in id order, independent of the order statements were shown to
//! a coder.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Codebook, Dims};

pub const SCORE_MIN: u8 = 0;
pub const SCORE_MAX: u8 = 100;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MatrixError {
    #[error("score {value} at {cell} is outside [0, 100]")]
    ScoreOutOfRange { cell: Cell, value: i64 },
    #[error("value {value} at {cell} is not 0 or 1")]
    NotBinary { cell: Cell, value: i64 },
    #[error("expected {expected} matrix, found {found}")]
    DimensionMismatch { expected: Dims, found: Dims },
    #[error("{dims} matrix needs {expected} values, got {found}")]
    WrongLength { dims: Dims, expected: usize, found: usize },
    #[error("matrix has no cells")]
    Empty,
    #[error("pass number must be 1 or 2, got {0}")]
    InvalidPass(u8),
    #[error("threshold {0} is outside [0, 100]")]
    InvalidThreshold(i64),
    #[error("{0} is outside the matrix")]
    CellOutOfBounds(Cell),
    #[error("{} missing cell(s): {}", .0.len(), .0.iter().map(Cell::to_string).collect::<Vec<_>>().join(", "))]
    MissingCells(Vec<Cell>),
    #[error("csv: {0}")]
    Csv(String),
}

/// One (statement, theme) cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub statement: u32,
    pub theme: u32,
}

impl Cell {
    pub fn new(statement: u32, theme: u32) -> Self {
        Self { statement, theme }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(statement {}, theme {})", self.statement, self.theme)
    }
}

/// A free-text note attached to one cell, e.g. a revision justification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellNote {
    pub cell: Cell,
    pub text: String,
}

fn index(dims: Dims, cell: Cell) -> Option<usize> {
    let s = cell.statement as usize;
    let t = cell.theme as usize;
    if s == 0 || t == 0 || s > dims.statements || t > dims.themes {
        return None;
    }
    Some((s - 1) * dims.themes + (t - 1))
}

fn cell_at(dims: Dims, i: usize) -> Cell {
    Cell::new((i / dims.themes) as u32 + 1, (i % dims.themes) as u32 + 1)
}

/// Iterates all cells of `dims` in row-major id order.
pub fn cells(dims: Dims) -> impl Iterator<Item = Cell> {
    (0..dims.cells()).map(move |i| cell_at(dims, i))
}

/// Dichotomization cut-off. A score `s` is present iff `s >= tau`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "u8")]
pub struct Threshold(u8);

impl Threshold {
    pub fn new(tau: i64) -> Result<Self, MatrixError> {
        if (SCORE_MIN as i64..=SCORE_MAX as i64).contains(&tau) {
            Ok(Self(tau as u8))
        } else {
            Err(MatrixError::InvalidThreshold(tau))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }
}

impl TryFrom<i64> for Threshold {
    type Error = MatrixError;
    fn try_from(v: i64) -> Result<Self, MatrixError> {
        Self::new(v)
    }
}

impl From<Threshold> for u8 {
    fn from(t: Threshold) -> u8 {
        t.0
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// One coder's integer relevance scores in `[0, 100]` for every cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ScoreMatrixRepr", into = "ScoreMatrixRepr")]
pub struct ScoreMatrix {
    coder_id: String,
    pass_number: u8,
    dims: Dims,
    scores: Vec<u8>,
    justifications: Vec<CellNote>,
}

#[derive(Serialize, Deserialize)]
struct ScoreMatrixRepr {
    coder_id: String,
    pass_number: u8,
    rows: Vec<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    justifications: Vec<CellNote>,
}

impl TryFrom<ScoreMatrixRepr> for ScoreMatrix {
    type Error = MatrixError;
    fn try_from(r: ScoreMatrixRepr) -> Result<Self, MatrixError> {
        let (dims, values) = flatten_rows(&r.rows)?;
        let mut scores = Vec::with_capacity(values.len());
        for (i, v) in values.into_iter().enumerate() {
            scores.push(check_score(cell_at(dims, i), v)?);
        }
        let mut m = ScoreMatrix::new(r.coder_id, r.pass_number, dims, scores)?;
        m.set_justifications(r.justifications)?;
        Ok(m)
    }
}

impl From<ScoreMatrix> for ScoreMatrixRepr {
    fn from(m: ScoreMatrix) -> Self {
        let rows = m
            .scores
            .chunks(m.dims.themes)
            .map(|row| row.iter().map(|&v| v as i64).collect())
            .collect();
        ScoreMatrixRepr {
            coder_id: m.coder_id,
            pass_number: m.pass_number,
            rows,
            justifications: m.justifications,
        }
    }
}

fn flatten_rows(rows: &[Vec<i64>]) -> Result<(Dims, Vec<i64>), MatrixError> {
    let k = rows.first().map_or(0, Vec::len);
    let dims = Dims::new(rows.len(), k);
    if dims.cells() == 0 {
        return Err(MatrixError::Empty);
    }
    let mut out = Vec::with_capacity(dims.cells());
    for row in rows {
        if row.len() != k {
            return Err(MatrixError::WrongLength { dims, expected: k, found: row.len() });
        }
        out.extend_from_slice(row);
    }
    Ok((dims, out))
}

fn check_score(cell: Cell, v: i64) -> Result<u8, MatrixError> {
    if (SCORE_MIN as i64..=SCORE_MAX as i64).contains(&v) {
        Ok(v as u8)
    } else {
        Err(MatrixError::ScoreOutOfRange { cell, value: v })
    }
}

fn check_dims(dims: Dims, found: usize) -> Result<(), MatrixError> {
    if dims.cells() == 0 {
        return Err(MatrixError::Empty);
    }
    if found != dims.cells() {
        return Err(MatrixError::WrongLength { dims, expected: dims.cells(), found });
    }
    Ok(())
}

impl ScoreMatrix {
    pub fn new(
        coder_id: impl Into<String>,
        pass_number: u8,
        dims: Dims,
        scores: Vec<u8>,
    ) -> Result<Self, MatrixError> {
        if !(1..=2).contains(&pass_number) {
            return Err(MatrixError::InvalidPass(pass_number));
        }
        check_dims(dims, scores.len())?;
        for (i, &v) in scores.iter().enumerate() {
            check_score(cell_at(dims, i), v as i64)?;
        }
        Ok(Self { coder_id: coder_id.into(), pass_number, dims, scores, justifications: Vec::new() })
    }

    pub fn from_fn(
        coder_id: impl Into<String>,
        pass_number: u8,
        dims: Dims,
        mut f: impl FnMut(Cell) -> u8,
    ) -> Result<Self, MatrixError> {
        let scores = cells(dims).map(&mut f).collect();
        Self::new(coder_id, pass_number, dims, scores)
    }

    /// Assembles a matrix from individually supplied cells. Every cell of
    /// `dims` must be supplied; a repeated cell keeps its last value.
    pub fn from_cells(
        coder_id: impl Into<String>,
        pass_number: u8,
        dims: Dims,
        entries: impl IntoIterator<Item = (Cell, u8)>,
    ) -> Result<Self, MatrixError> {
        let mut grid = vec![None; dims.cells()];
        for (cell, v) in entries {
            let i = index(dims, cell).ok_or(MatrixError::CellOutOfBounds(cell))?;
            grid[i] = Some(v);
        }
        let missing: Vec<Cell> = cells(dims).zip(&grid).filter(|(_, v)| v.is_none()).map(|(c, _)| c).collect();
        if !missing.is_empty() {
            return Err(MatrixError::MissingCells(missing));
        }
        Self::new(coder_id, pass_number, dims, grid.into_iter().flatten().collect())
    }

    pub fn coder_id(&self) -> &str {
        &self.coder_id
    }

    pub fn pass_number(&self) -> u8 {
        self.pass_number
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    /// Row-major scores in id order.
    pub fn scores(&self) -> &[u8] {
        &self.scores
    }

    pub fn get(&self, cell: Cell) -> Option<u8> {
        index(self.dims, cell).map(|i| self.scores[i])
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u8]> {
        self.scores.chunks(self.dims.themes)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Cell, u8)> + '_ {
        self.scores.iter().enumerate().map(|(i, &v)| (cell_at(self.dims, i), v))
    }

    pub fn set_coder_id(&mut self, coder_id: impl Into<String>) {
        self.coder_id = coder_id.into();
    }

    pub fn set_pass_number(&mut self, pass: u8) -> Result<(), MatrixError> {
        if !(1..=2).contains(&pass) {
            return Err(MatrixError::InvalidPass(pass));
        }
        self.pass_number = pass;
        Ok(())
    }

    pub fn justifications(&self) -> &[CellNote] {
        &self.justifications
    }

    pub fn justification(&self, cell: Cell) -> Option<&str> {
        self.justifications.iter().find(|n| n.cell == cell).map(|n| n.text.as_str())
    }

    /// Replaces the notes; they are kept sorted by cell.
    pub fn set_justifications(&mut self, mut notes: Vec<CellNote>) -> Result<(), MatrixError> {
        for n in &notes {
            if index(self.dims, n.cell).is_none() {
                return Err(MatrixError::CellOutOfBounds(n.cell));
            }
        }
        notes.sort_by_key(|n| n.cell);
        self.justifications = notes;
        Ok(())
    }

    /// Scores as `f64` in row-major order.
    pub fn values(&self) -> Vec<f64> {
        self.scores.iter().map(|&v| v as f64).collect()
    }

    pub fn to_csv(&self, codebook: &Codebook) -> Result<String, MatrixError> {
        write_grid(self.dims, codebook, |i| self.scores[i] as i64)
    }

    pub fn from_csv(
        text: &str,
        coder_id: impl Into<String>,
        pass_number: u8,
        codebook: &Codebook,
        statements: usize,
    ) -> Result<Self, MatrixError> {
        let dims = Dims::new(statements, codebook.len());
        let grid = read_grid(text, codebook, statements)?;
        let scores = grid
            .into_iter()
            .enumerate()
            .map(|(i, v)| check_score(cell_at(dims, i), v))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(coder_id, pass_number, dims, scores)
    }
}

/// Present/absent codings for every cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BinaryMatrixRepr", into = "BinaryMatrixRepr")]
pub struct BinaryMatrix {
    coder_id: String,
    dims: Dims,
    bits: Vec<bool>,
    threshold_used: Option<Threshold>,
}

#[derive(Serialize, Deserialize)]
struct BinaryMatrixRepr {
    coder_id: String,
    #[serde(default)]
    threshold_used: Option<Threshold>,
    rows: Vec<Vec<i64>>,
}

impl TryFrom<BinaryMatrixRepr> for BinaryMatrix {
    type Error = MatrixError;
    fn try_from(r: BinaryMatrixRepr) -> Result<Self, MatrixError> {
        let (dims, values) = flatten_rows(&r.rows)?;
        let mut m = BinaryMatrix::from_values(r.coder_id, dims, &values)?;
        m.threshold_used = r.threshold_used;
        Ok(m)
    }
}

impl From<BinaryMatrix> for BinaryMatrixRepr {
    fn from(m: BinaryMatrix) -> Self {
        let rows = m
            .bits
            .chunks(m.dims.themes)
            .map(|row| row.iter().map(|&b| b as i64).collect())
            .collect();
        BinaryMatrixRepr { coder_id: m.coder_id, threshold_used: m.threshold_used, rows }
    }
}

impl BinaryMatrix {
    pub fn new(coder_id: impl Into<String>, dims: Dims, bits: Vec<bool>) -> Result<Self, MatrixError> {
        check_dims(dims, bits.len())?;
        Ok(Self { coder_id: coder_id.into(), dims, bits, threshold_used: None })
    }

    /// Builds from integer entries, rejecting anything other than 0 or 1.
    pub fn from_values(coder_id: impl Into<String>, dims: Dims, values: &[i64]) -> Result<Self, MatrixError> {
        check_dims(dims, values.len())?;
        let bits = values
            .iter()
            .enumerate()
            .map(|(i, &v)| match v {
                0 => Ok(false),
                1 => Ok(true),
                _ => Err(MatrixError::NotBinary { cell: cell_at(dims, i), value: v }),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(coder_id, dims, bits)
    }

    pub fn from_fn(
        coder_id: impl Into<String>,
        dims: Dims,
        mut f: impl FnMut(Cell) -> bool,
    ) -> Result<Self, MatrixError> {
        let bits = cells(dims).map(&mut f).collect();
        Self::new(coder_id, dims, bits)
    }

    pub fn with_threshold(mut self, tau: Threshold) -> Self {
        self.threshold_used = Some(tau);
        self
    }

    pub fn coder_id(&self) -> &str {
        &self.coder_id
    }

    pub fn set_coder_id(&mut self, coder_id: impl Into<String>) {
        self.coder_id = coder_id.into();
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn threshold_used(&self) -> Option<Threshold> {
        self.threshold_used
    }

    pub fn get(&self, cell: Cell) -> Option<bool> {
        index(self.dims, cell).map(|i| self.bits[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (Cell, bool)> + '_ {
        self.bits.iter().enumerate().map(|(i, &b)| (cell_at(self.dims, i), b))
    }

    /// Number of present cells.
    pub fn assigned(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn values(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    pub fn to_csv(&self, codebook: &Codebook) -> Result<String, MatrixError> {
        write_grid(self.dims, codebook, |i| self.bits[i] as i64)
    }

    pub fn from_csv(
        text: &str,
        coder_id: impl Into<String>,
        codebook: &Codebook,
        statements: usize,
    ) -> Result<Self, MatrixError> {
        let dims = Dims::new(statements, codebook.len());
        let grid = read_grid(text, codebook, statements)?;
        Self::from_values(coder_id, dims, &grid)
    }
}

const STATEMENT_COLUMN: &str = "statement";

fn write_grid(dims: Dims, codebook: &Codebook, value: impl Fn(usize) -> i64) -> Result<String, MatrixError> {
    if codebook.len() != dims.themes {
        return Err(MatrixError::DimensionMismatch {
            expected: dims,
            found: Dims::new(dims.statements, codebook.len()),
        });
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![STATEMENT_COLUMN.to_string()];
    // Columns follow theme ids, which is how cells are indexed.
    let mut by_id: Vec<_> = codebook.themes().iter().collect();
    by_id.sort_by_key(|t| t.id);
    header.extend(by_id.iter().map(|t| t.name.clone()));
    w.write_record(&header).map_err(|e| MatrixError::Csv(e.to_string()))?;
    for s in 0..dims.statements {
        let mut rec = vec![(s + 1).to_string()];
        rec.extend((0..dims.themes).map(|t| value(s * dims.themes + t).to_string()));
        w.write_record(&rec).map_err(|e| MatrixError::Csv(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| MatrixError::Csv(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| MatrixError::Csv(e.to_string()))
}

/// Reads a `statement,<theme>...` grid into row-major id order. Columns and
/// rows may come in any order but each theme and statement must appear once.
fn read_grid(text: &str, codebook: &Codebook, statements: usize) -> Result<Vec<i64>, MatrixError> {
    let k = codebook.len();
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| MatrixError::Csv(e.to_string()))?.clone();
    if header.get(0).map(|h| h.to_lowercase()) != Some(STATEMENT_COLUMN.into()) {
        return Err(MatrixError::Csv("first header column must be `statement`".into()));
    }
    let mut columns = Vec::with_capacity(k);
    for name in header.iter().skip(1) {
        let theme = codebook
            .find_theme(name, false)
            .ok_or_else(|| MatrixError::Csv(format!("unknown theme column {name:?}")))?;
        if columns.contains(&theme.id) {
            return Err(MatrixError::Csv(format!("duplicate theme column {name:?}")));
        }
        columns.push(theme.id);
    }
    if columns.len() != k {
        return Err(MatrixError::Csv(format!("expected {k} theme columns, found {}", columns.len())));
    }
    let mut grid = vec![None; statements * k];
    let mut rows_seen = 0usize;
    for rec in r.records() {
        let rec = rec.map_err(|e| MatrixError::Csv(e.to_string()))?;
        let id: usize = rec[0]
            .parse()
            .map_err(|_| MatrixError::Csv(format!("bad statement id {:?}", &rec[0])))?;
        if id == 0 || id > statements {
            return Err(MatrixError::DimensionMismatch {
                expected: Dims::new(statements, k),
                found: Dims::new(id.max(statements), k),
            });
        }
        rows_seen += 1;
        for (col, field) in rec.iter().skip(1).enumerate() {
            let v: i64 = field
                .parse()
                .map_err(|_| MatrixError::Csv(format!("non-integer value {field:?} in statement {id}")))?;
            let slot = &mut grid[(id - 1) * k + (columns[col] as usize - 1)];
            if slot.is_some() {
                return Err(MatrixError::Csv(format!("duplicate row for statement {id}")));
            }
            *slot = Some(v);
        }
    }
    if rows_seen != statements {
        return Err(MatrixError::DimensionMismatch {
            expected: Dims::new(statements, k),
            found: Dims::new(rows_seen, k),
        });
    }
    Ok(grid.into_iter().map(|v| v.expect("every row filled")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Theme;

    fn codebook(names: &[&str]) -> Codebook {
        let themes = names
            .iter()
            .enumerate()
            .map(|(i, n)| Theme { id: i as u32 + 1, name: n.to_string(), description: None })
            .collect();
        Codebook::new(1, themes).unwrap()
    }

    #[test]
    fn threshold_bounds() {
        assert!(Threshold::new(0).is_ok());
        assert!(Threshold::new(100).is_ok());
        assert_eq!(Threshold::new(150), Err(MatrixError::InvalidThreshold(150)));
        assert_eq!(Threshold::new(-1), Err(MatrixError::InvalidThreshold(-1)));
    }

    #[test]
    fn score_out_of_range_names_the_cell() {
        let err = ScoreMatrix::new("m", 1, Dims::new(1, 2), vec![10, 101]).unwrap_err();
        assert_eq!(err, MatrixError::ScoreOutOfRange { cell: Cell::new(1, 2), value: 101 });
    }

    #[test]
    fn non_binary_entries_are_rejected() {
        let err = BinaryMatrix::from_values("h", Dims::new(2, 2), &[0, 1, 2, 0]).unwrap_err();
        assert_eq!(err, MatrixError::NotBinary { cell: Cell::new(2, 1), value: 2 });
    }

    #[test]
    fn partial_tables_name_missing_cells() {
        let dims = Dims::new(17, 11);
        let entries = cells(dims).filter(|&c| c != Cell::new(5, 2)).map(|c| (c, 40));
        let err = ScoreMatrix::from_cells("m", 1, dims, entries).unwrap_err();
        assert_eq!(err, MatrixError::MissingCells(vec![Cell::new(5, 2)]));
        assert!(err.to_string().contains("(statement 5, theme 2)"));
    }

    #[test]
    fn cell_addressing_is_row_major() {
        let m = ScoreMatrix::from_fn("m", 1, Dims::new(3, 2), |c| (c.statement * 10 + c.theme) as u8).unwrap();
        assert_eq!(m.get(Cell::new(2, 1)), Some(21));
        assert_eq!(m.scores(), &[11, 12, 21, 22, 31, 32]);
        assert_eq!(m.get(Cell::new(4, 1)), None);
        assert_eq!(m.get(Cell::new(0, 1)), None);
    }

    #[test]
    fn csv_round_trip_with_shuffled_columns() {
        let cb = codebook(&["Alpha", "Beta"]);
        let m = ScoreMatrix::from_fn("m", 1, Dims::new(2, 2), |c| (c.statement * 10 + c.theme) as u8).unwrap();
        let csv = m.to_csv(&cb).unwrap();
        assert_eq!(csv, "statement,Alpha,Beta\n1,11,12\n2,21,22\n");
        let back = ScoreMatrix::from_csv(&csv, "m", 1, &cb, 2).unwrap();
        assert_eq!(back, m);
        let shuffled = "statement,beta,ALPHA\n2,22,21\n1,12,11\n";
        assert_eq!(ScoreMatrix::from_csv(shuffled, "m", 1, &cb, 2).unwrap(), m);
    }

    #[test]
    fn csv_rejects_missing_rows_and_unknown_columns() {
        let cb = codebook(&["Alpha", "Beta"]);
        assert!(matches!(
            BinaryMatrix::from_csv("statement,Alpha,Beta\n1,0,1\n", "h", &cb, 2),
            Err(MatrixError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            BinaryMatrix::from_csv("statement,Alpha,Gamma\n1,0,1\n2,0,0\n", "h", &cb, 2),
            Err(MatrixError::Csv(_))
        ));
        assert!(matches!(
            BinaryMatrix::from_csv("statement,Alpha,Beta\n1,0,1\n2,0,2\n", "h", &cb, 2),
            Err(MatrixError::NotBinary { .. })
        ));
    }

    #[test]
    fn json_mirror_round_trip() {
        let mut m = ScoreMatrix::from_fn("m", 2, Dims::new(2, 3), |c| (c.theme * 7) as u8).unwrap();
        m.set_justifications(vec![CellNote { cell: Cell::new(2, 3), text: "lowered".into() }]).unwrap();
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(serde_json::from_str::<ScoreMatrix>(&json).unwrap(), m);
        let b = BinaryMatrix::from_values("h", Dims::new(1, 3), &[1, 0, 1]).unwrap().with_threshold(Threshold::new(70).unwrap());
        let json = serde_json::to_string(&b).unwrap();
        assert_eq!(json, r#"{"coder_id":"h","threshold_used":70,"rows":[[1,0,1]]}"#);
        assert_eq!(serde_json::from_str::<BinaryMatrix>(&json).unwrap(), b);
        assert!(serde_json::from_str::<ScoreMatrix>(r#"{"coder_id":"m","pass_number":1,"rows":[[1,200]]}"#).is_err());
    }
}
