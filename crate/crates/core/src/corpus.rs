//! Statement corpus and theme codebook.
//!
//! Both files are UTF-8 JSON. A corpus file is an array of
//! `{id, source, text, selection_notes?}` records; a codebook file is
//! `{version, themes: [{id, name, description?}]}`. Ids are authoritative:
//! records may appear in any order, but the ids must be exactly `1..=n`.
//! File order is kept because presentation order is itself an experimental
//! variable.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record in {path}: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("duplicate statement id {0}")]
    DuplicateStatementId(u32),
    #[error("statement {0} has empty text")]
    EmptyText(u32),
    #[error("statement ids must be exactly 1..={expected_max}; missing {missing:?}")]
    StatementIdGap { expected_max: u32, missing: Vec<u32> },
    #[error("empty codebook")]
    EmptyCodebook,
    #[error("duplicate theme id {0}")]
    DuplicateThemeId(u32),
    #[error("duplicate theme name {0:?} (names are compared case-insensitively)")]
    DuplicateThemeName(String),
    #[error("theme {0} has an empty name")]
    EmptyThemeName(u32),
    #[error("theme ids must be exactly 1..={expected_max}; missing {missing:?}")]
    ThemeIdGap { expected_max: u32, missing: Vec<u32> },
    #[error("no theme with id {0}")]
    UnknownTheme(u32),
    #[error("new version {requested} must exceed current version {current}")]
    VersionNotIncreasing { current: u64, requested: u64 },
}

/// Where a statement came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Hansard,
    Notmydebt,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Statement {
    pub id: u32,
    pub source: Source,
    pub text: String,
    /// Free-text provenance of the manual selection decision.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection_notes: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Theme {
    pub id: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

/// Matrix dimensions: statements (rows) by themes (columns).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub statements: usize,
    pub themes: usize,
}

impl Dims {
    pub fn new(statements: usize, themes: usize) -> Self {
        Self { statements, themes }
    }

    pub fn cells(&self) -> usize {
        self.statements * self.themes
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.statements, self.themes)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    label: String,
    statements: Vec<Statement>,
}

impl Corpus {
    pub fn new(label: impl Into<String>, statements: Vec<Statement>) -> Result<Self, CorpusError> {
        if statements.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }
        let mut seen = HashSet::with_capacity(statements.len());
        for s in &statements {
            if !seen.insert(s.id) {
                return Err(CorpusError::DuplicateStatementId(s.id));
            }
            if s.text.trim().is_empty() {
                return Err(CorpusError::EmptyText(s.id));
            }
        }
        let n = statements.len() as u32;
        let missing: Vec<u32> = (1..=n).filter(|id| !seen.contains(id)).collect();
        if !missing.is_empty() {
            return Err(CorpusError::StatementIdGap { expected_max: n, missing });
        }
        Ok(Self { label: label.into(), statements })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Statements in presentation (file) order.
    pub fn statements(&self) -> &[Statement] {
        &self.statements
    }

    pub fn len(&self) -> usize {
        self.statements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.statements.is_empty()
    }

    pub fn statement(&self, id: u32) -> Option<&Statement> {
        self.statements.iter().find(|s| s.id == id)
    }

    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(&self.statements).expect("statements serialize");
        out.push('\n');
        out
    }

    pub fn from_json(label: impl Into<String>, text: &str) -> Result<Self, CorpusError> {
        let statements: Vec<Statement> =
            serde_json::from_str(text).map_err(|e| CorpusError::Malformed {
                path: PathBuf::from("<memory>"),
                message: e.to_string(),
            })?;
        Self::new(label, statements)
    }
}

/// Reads a corpus file. The label defaults to the file stem.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let text = read(path)?;
    let statements: Vec<Statement> =
        serde_json::from_str(&text).map_err(|e| CorpusError::Malformed {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Corpus::new(label, statements)
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    write(path.as_ref(), &corpus.to_json())
}

/// Normalizes a theme name for matching. The default folds case and trims;
/// `collapse_whitespace` additionally squeezes interior whitespace runs.
pub fn normalize_theme_name(name: &str, collapse_whitespace: bool) -> String {
    if collapse_whitespace {
        name.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
    } else {
        name.trim().to_lowercase()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Codebook {
    version: u64,
    themes: Vec<Theme>,
    /// Set on machine-generated codebooks until a human approves them.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    draft: bool,
}

#[derive(Deserialize)]
struct CodebookFile {
    version: u64,
    themes: Vec<Theme>,
    #[serde(default)]
    draft: bool,
}

impl Codebook {
    pub fn new(version: u64, themes: Vec<Theme>) -> Result<Self, CorpusError> {
        validate_themes(&themes)?;
        Ok(Self { version, themes, draft: false })
    }

    /// A machine-generated codebook awaiting human review.
    pub fn draft(version: u64, themes: Vec<Theme>) -> Result<Self, CorpusError> {
        let mut cb = Self::new(version, themes)?;
        cb.draft = true;
        Ok(cb)
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn themes(&self) -> &[Theme] {
        &self.themes
    }

    pub fn len(&self) -> usize {
        self.themes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.themes.is_empty()
    }

    pub fn is_draft(&self) -> bool {
        self.draft
    }

    pub fn theme(&self, id: u32) -> Option<&Theme> {
        self.themes.iter().find(|t| t.id == id)
    }

    pub fn theme_names(&self) -> Vec<String> {
        self.themes.iter().map(|t| t.name.clone()).collect()
    }

    /// Looks up a theme by name; never fuzzy beyond case and whitespace.
    pub fn find_theme(&self, name: &str, collapse_whitespace: bool) -> Option<&Theme> {
        let wanted = normalize_theme_name(name, collapse_whitespace);
        self.themes
            .iter()
            .find(|t| normalize_theme_name(&t.name, collapse_whitespace) == wanted)
    }

    pub fn rename_theme(&mut self, id: u32, name: impl Into<String>) -> Result<(), CorpusError> {
        let name = name.into();
        let mut themes = self.themes.clone();
        let theme = themes
            .iter_mut()
            .find(|t| t.id == id)
            .ok_or(CorpusError::UnknownTheme(id))?;
        theme.name = name;
        validate_themes(&themes)?;
        self.themes = themes;
        self.version += 1;
        Ok(())
    }

    pub fn set_description(&mut self, id: u32, description: Option<String>) -> Result<(), CorpusError> {
        let theme = self
            .themes
            .iter_mut()
            .find(|t| t.id == id)
            .ok_or(CorpusError::UnknownTheme(id))?;
        theme.description = description;
        self.version += 1;
        Ok(())
    }

    pub fn add_theme(
        &mut self,
        name: impl Into<String>,
        description: Option<String>,
    ) -> Result<u32, CorpusError> {
        let id = self.themes.len() as u32 + 1;
        let mut themes = self.themes.clone();
        themes.push(Theme { id, name: name.into(), description });
        validate_themes(&themes)?;
        self.themes = themes;
        self.version += 1;
        Ok(id)
    }

    /// Clears the draft flag. Counts as a mutation.
    pub fn approve(&mut self) {
        self.draft = false;
        self.version += 1;
    }

    /// Moves the version forward, e.g. to stay above versions already stored.
    pub fn bump_to(&mut self, version: u64) -> Result<(), CorpusError> {
        if version <= self.version {
            return Err(CorpusError::VersionNotIncreasing { current: self.version, requested: version });
        }
        self.version = version;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("codebook serializes");
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<Self, CorpusError> {
        let file: CodebookFile = serde_json::from_str(text).map_err(|e| CorpusError::Malformed {
            path: PathBuf::from("<memory>"),
            message: e.to_string(),
        })?;
        let mut cb = Codebook::new(file.version, file.themes)?;
        cb.draft = file.draft;
        Ok(cb)
    }
}

fn validate_themes(themes: &[Theme]) -> Result<(), CorpusError> {
    if themes.is_empty() {
        return Err(CorpusError::EmptyCodebook);
    }
    let mut ids = HashSet::new();
    let mut names = HashSet::new();
    for t in themes {
        if !ids.insert(t.id) {
            return Err(CorpusError::DuplicateThemeId(t.id));
        }
        if t.name.trim().is_empty() {
            return Err(CorpusError::EmptyThemeName(t.id));
        }
        if !names.insert(normalize_theme_name(&t.name, false)) {
            return Err(CorpusError::DuplicateThemeName(t.name.clone()));
        }
    }
    let n = themes.len() as u32;
    let missing: Vec<u32> = (1..=n).filter(|id| !ids.contains(id)).collect();
    if !missing.is_empty() {
        return Err(CorpusError::ThemeIdGap { expected_max: n, missing });
    }
    Ok(())
}

pub fn load_codebook(path: impl AsRef<Path>) -> Result<Codebook, CorpusError> {
    let path = path.as_ref();
    let text = read(path)?;
    Codebook::from_json(&text).map_err(|e| match e {
        CorpusError::Malformed { message, .. } => CorpusError::Malformed { path: path.to_path_buf(), message },
        other => other,
    })
}

pub fn save_codebook(codebook: &Codebook, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    write(path.as_ref(), &codebook.to_json())
}

/// Dimensions every downstream matrix must have.
pub fn validate_pairing(corpus: &Corpus, codebook: &Codebook) -> Dims {
    Dims::new(corpus.len(), codebook.len())
}

fn read(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })
}

fn write(path: &Path, text: &str) -> Result<(), CorpusError> {
    fs::write(path, text).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })
}
