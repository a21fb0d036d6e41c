//! Deterministic prompt rendering.
//!
//! Rendering is a pure function of its inputs: the same codebook, corpus,
//! spec and template always produce byte-identical text and the same
//! `content_hash`.

mod template;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{Codebook, Corpus, Dims};
use crate::matrix::{Cell, ScoreMatrix};
use crate::payload::render_payload;

pub use template::{PromptTemplate, Slot};

pub const SCEPTICAL_DIRECTIVE: &str = "Be sceptical.";
pub const PARSIMONIOUS_DIRECTIVE: &str = "Be parsimonious.";
pub const TAKE_YOUR_TIME_DIRECTIVE: &str =
    "Take your time to reflect upon your previous scores and, if necessary, revise them. Return the full table again.";
pub const JUSTIFY_DIRECTIVE: &str =
    "Justify why scores were modified: for every score that differs from your previous table, add an entry to \"justifications\".";

pub const DEFAULT_CODING_TEMPLATE: &str = include_str!("../../templates/coding.txt");
pub const DEFAULT_REVISION_TEMPLATE: &str = include_str!("../../templates/revision.txt");
pub const DEFAULT_THEMES_TEMPLATE: &str = include_str!("../../templates/themes.txt");

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("empty codebook")]
    EmptyCodebook,
    #[error("spec.revision_pass must be {expected} for this prompt")]
    WrongPass { expected: bool },
    #[error("revision passes must request justifications")]
    JustificationsRequired,
    #[error("prior matrix is {found} but the project is {expected}; missing {}", .missing.iter().map(Cell::to_string).collect::<Vec<_>>().join(", "))]
    IncompletePrior { expected: Dims, found: Dims, missing: Vec<Cell> },
    #[error("unknown template slot {0:?}")]
    UnknownSlot(String),
    #[error("template is missing the {{{{{0}}}}} slot")]
    MissingSlot(Slot),
    #[error("template: {0}")]
    Template(String),
    #[error("cannot read template {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modifier {
    Sceptical,
    Parsimonious,
}

impl Modifier {
    pub fn directive(self) -> &'static str {
        match self {
            Modifier::Sceptical => SCEPTICAL_DIRECTIVE,
            Modifier::Parsimonious => PARSIMONIOUS_DIRECTIVE,
        }
    }
}

/// How a coding prompt is framed. Scores are always integers in `[0, 100]`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    #[serde(default)]
    pub context_preamble: String,
    #[serde(default)]
    pub modifiers: BTreeSet<Modifier>,
    #[serde(default)]
    pub revision_pass: bool,
    #[serde(default)]
    pub include_justifications: bool,
}

impl PromptSpec {
    pub fn with_modifier(mut self, m: Modifier) -> Self {
        self.modifiers.insert(m);
        self
    }

    /// The matching second-pass spec: same framing, justifications on.
    pub fn revision(&self) -> Self {
        Self { revision_pass: true, include_justifications: true, ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        if self.revision_pass && !self.include_justifications {
            return Err(PromptError::JustificationsRequired);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Coding,
    Revision,
    ThemeGeneration,
}

impl PromptKind {
    fn tag(self) -> &'static str {
        match self {
            PromptKind::Coding => "coding",
            PromptKind::Revision => "revision",
            PromptKind::ThemeGeneration => "theme_generation",
        }
    }
}

/// Structural facts about what a prompt asks for, for downstream parsing.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptManifest {
    pub statement_ids: Vec<u32>,
    pub theme_names: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub codebook_version: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub kind: PromptKind,
    pub system_text: String,
    pub user_text: String,
    /// Hex SHA-256 over kind, codebook version, spec and both texts.
    pub content_hash: String,
    pub manifest: PromptManifest,
}

/// A set of templates, one per prompt kind.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompter {
    coding: PromptTemplate,
    revision: PromptTemplate,
    themes: PromptTemplate,
}

impl Default for Prompter {
    fn default() -> Self {
        Self {
            coding: PromptTemplate::parse(DEFAULT_CODING_TEMPLATE).expect("default coding template"),
            revision: PromptTemplate::parse(DEFAULT_REVISION_TEMPLATE).expect("default revision template"),
            themes: PromptTemplate::parse(DEFAULT_THEMES_TEMPLATE).expect("default themes template"),
        }
    }
}

const CODING_SLOTS: &[Slot] = &[Slot::Themes, Slot::Statements, Slot::OutputContract, Slot::Modifiers];
const REVISION_SLOTS: &[Slot] = &[Slot::Themes, Slot::Statements, Slot::OutputContract, Slot::Modifiers, Slot::PriorTable];
const THEME_SLOTS: &[Slot] = &[Slot::Statements, Slot::OutputContract];

impl Prompter {
    pub fn new(coding: PromptTemplate, revision: PromptTemplate, themes: PromptTemplate) -> Result<Self, PromptError> {
        coding.require(CODING_SLOTS)?;
        revision.require(REVISION_SLOTS)?;
        themes.require(THEME_SLOTS)?;
        Ok(Self { coding, revision, themes })
    }

    /// Loads `coding.txt`, `revision.txt` and `themes.txt` from `dir`,
    /// falling back to the shipped default for any file that is absent.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self, PromptError> {
        let dir = dir.as_ref();
        let load = |name: &str, fallback: &str| -> Result<PromptTemplate, PromptError> {
            let path = dir.join(name);
            match std::fs::read_to_string(&path) {
                Ok(text) => PromptTemplate::parse(&text),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => PromptTemplate::parse(fallback),
                Err(e) => Err(PromptError::Io { path: path.display().to_string(), message: e.to_string() }),
            }
        };
        Self::new(
            load("coding.txt", DEFAULT_CODING_TEMPLATE)?,
            load("revision.txt", DEFAULT_REVISION_TEMPLATE)?,
            load("themes.txt", DEFAULT_THEMES_TEMPLATE)?,
        )
    }

    pub fn build_coding_prompt(
        &self,
        codebook: &Codebook,
        corpus: &Corpus,
        spec: &PromptSpec,
    ) -> Result<RenderedPrompt, PromptError> {
        spec.validate()?;
        if spec.revision_pass {
            return Err(PromptError::WrongPass { expected: false });
        }
        check_inputs(codebook, corpus)?;
        let (system, user) = self.coding.render(|slot| match slot {
            Slot::Context => spec.context_preamble.trim().to_string(),
            Slot::Themes => render_themes(codebook),
            Slot::Statements => render_statements(corpus),
            Slot::OutputContract => coding_contract(false),
            Slot::Modifiers => render_modifiers(spec),
            Slot::PriorTable | Slot::Guidance => String::new(),
        });
        Ok(finish(PromptKind::Coding, Some(codebook), corpus, spec, system, user))
    }

    /// Second-pass prompt embedding the prior table, the statements and the
    /// reflect-and-justify directives.
    pub fn build_revision_prompt(
        &self,
        prior: &ScoreMatrix,
        codebook: &Codebook,
        corpus: &Corpus,
        spec: &PromptSpec,
    ) -> Result<RenderedPrompt, PromptError> {
        spec.validate()?;
        if !spec.revision_pass {
            return Err(PromptError::WrongPass { expected: true });
        }
        check_inputs(codebook, corpus)?;
        let expected = Dims::new(corpus.len(), codebook.len());
        if prior.dims() != expected {
            let found = prior.dims();
            let missing = crate::matrix::cells(expected)
                .filter(|c| c.statement as usize > found.statements || c.theme as usize > found.themes)
                .collect();
            return Err(PromptError::IncompletePrior { expected, found, missing });
        }
        let (system, mut user) = self.revision.render(|slot| match slot {
            Slot::Context => spec.context_preamble.trim().to_string(),
            Slot::Themes => render_themes(codebook),
            Slot::Statements => render_statements(corpus),
            Slot::OutputContract => coding_contract(true),
            Slot::Modifiers => render_modifiers(spec),
            Slot::PriorTable => render_prior(prior, codebook),
            Slot::Guidance => String::new(),
        });
        let _ = write!(user, "\n\n{TAKE_YOUR_TIME_DIRECTIVE}\n{JUSTIFY_DIRECTIVE}");
        Ok(finish(PromptKind::Revision, Some(codebook), corpus, spec, system, user))
    }

    pub fn build_theme_generation_prompt(&self, corpus: &Corpus, guidance: &str) -> Result<RenderedPrompt, PromptError> {
        if corpus.is_empty() {
            return Err(PromptError::EmptyCorpus);
        }
        let guidance = guidance.trim();
        let (system, user) = self.themes.render(|slot| match slot {
            Slot::Guidance if !guidance.is_empty() => format!("Methodological guidance:\n{guidance}"),
            Slot::Statements => render_statements(corpus),
            Slot::OutputContract => THEME_LIST_CONTRACT.to_string(),
            _ => String::new(),
        });
        let spec = PromptSpec { context_preamble: guidance.to_string(), ..PromptSpec::default() };
        Ok(finish(PromptKind::ThemeGeneration, None, corpus, &spec, system, user))
    }
}

pub fn build_coding_prompt(codebook: &Codebook, corpus: &Corpus, spec: &PromptSpec) -> Result<RenderedPrompt, PromptError> {
    Prompter::default().build_coding_prompt(codebook, corpus, spec)
}

pub fn build_revision_prompt(
    prior: &ScoreMatrix,
    codebook: &Codebook,
    corpus: &Corpus,
    spec: &PromptSpec,
) -> Result<RenderedPrompt, PromptError> {
    Prompter::default().build_revision_prompt(prior, codebook, corpus, spec)
}

pub fn build_theme_generation_prompt(corpus: &Corpus, guidance: &str) -> Result<RenderedPrompt, PromptError> {
    Prompter::default().build_theme_generation_prompt(corpus, guidance)
}

/// Marker that introduces statement `id` in rendered user text.
pub fn statement_marker(id: u32) -> String {
    format!("[S{id}]")
}

pub const PRIOR_TABLE_OPEN: &str = "```json";
pub const PRIOR_TABLE_CLOSE: &str = "```";

pub const THEME_LIST_CONTRACT: &str = "Respond with a numbered list of themes, one per line, in the form \
`1. Theme name - one-line description`. Do not add any other text.";

fn check_inputs(codebook: &Codebook, corpus: &Corpus) -> Result<(), PromptError> {
    if corpus.is_empty() {
        return Err(PromptError::EmptyCorpus);
    }
    if codebook.is_empty() {
        return Err(PromptError::EmptyCodebook);
    }
    Ok(())
}

fn render_themes(codebook: &Codebook) -> String {
    codebook
        .themes()
        .iter()
        .map(|t| match t.description.as_deref().map(str::trim).filter(|d| !d.is_empty()) {
            Some(d) => format!("{}. {}: {}", t.id, t.name, d),
            None => format!("{}. {}", t.id, t.name),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn render_statements(corpus: &Corpus) -> String {
    corpus
        .statements()
        .iter()
        .map(|s| format!("{} {}", statement_marker(s.id), s.text.trim()))
        .collect::<Vec<_>>()
        .join("\n")
}

fn render_modifiers(spec: &PromptSpec) -> String {
    spec.modifiers.iter().map(|m| m.directive()).collect::<Vec<_>>().join("\n")
}

fn render_prior(prior: &ScoreMatrix, codebook: &Codebook) -> String {
    let mut bare = prior.clone();
    bare.set_justifications(Vec::new()).expect("clearing notes cannot fail");
    format!("{PRIOR_TABLE_OPEN}\n{}\n{PRIOR_TABLE_CLOSE}", render_payload(&bare, codebook))
}

fn coding_contract(revision: bool) -> String {
    let mut s = String::from(
        "Respond with a single JSON object and nothing else. Use each statement id, as a string, for a key. \
Each value is an object mapping every theme name, spelled exactly as listed, to an integer score from 0 to 100. \
Shape: {\"1\": {\"<theme name>\": <score>, ...}, \"2\": {...}, ...}",
    );
    if revision {
        s.push_str(
            "\nAlso include a \"justifications\" array with one entry \
{\"statement\": <id>, \"theme\": \"<theme name>\", \"reason\": \"<why the score changed>\"} \
for every score that differs from your previous table.",
        );
    }
    s
}

fn finish(
    kind: PromptKind,
    codebook: Option<&Codebook>,
    corpus: &Corpus,
    spec: &PromptSpec,
    system_text: String,
    user_text: String,
) -> RenderedPrompt {
    let spec_json = serde_json::to_string(spec).expect("spec serializes");
    let version = codebook.map_or_else(|| "-".to_string(), |c| c.version().to_string());
    let mut h = Sha256::new();
    for part in [kind.tag(), &version, &spec_json, &system_text, &user_text] {
        h.update(part.as_bytes());
        h.update([0u8]);
    }
    let content_hash = hex::encode(h.finalize());
    RenderedPrompt {
        kind,
        system_text,
        user_text,
        content_hash,
        manifest: PromptManifest {
            statement_ids: corpus.statements().iter().map(|s| s.id).collect(),
            theme_names: codebook.map(Codebook::theme_names).unwrap_or_default(),
            codebook_version: codebook.map(Codebook::version),
        },
    }
}

/// Extracts the embedded prior table from a revision prompt's user text.
pub fn extract_prior_table(user_text: &str) -> Option<&str> {
    let start = user_text.find(PRIOR_TABLE_OPEN)? + PRIOR_TABLE_OPEN.len();
    let rest = &user_text[start..];
    let end = rest.find(PRIOR_TABLE_CLOSE)?;
    Some(rest[..end].trim())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Source, Statement};
    use crate::fixtures;

    fn spec() -> PromptSpec {
        PromptSpec {
            context_preamble: "The statements concern a public controversy.".into(),
            ..PromptSpec::default()
        }
    }

    fn count(haystack: &str, needle: &str) -> usize {
        haystack.matches(needle).count()
    }

    #[test]
    fn coding_prompt_contains_everything() {
        let (cb, corpus) = (fixtures::codebook(), fixtures::corpus());
        let p = build_coding_prompt(&cb, &corpus, &spec()).unwrap();
        for t in cb.themes() {
            assert!(p.system_text.contains(&t.name), "missing theme {}", t.name);
        }
        for s in corpus.statements() {
            assert_eq!(count(&p.user_text, &statement_marker(s.id)), 1);
            assert!(p.user_text.contains(s.text.trim()));
        }
        assert!(p.system_text.contains("integer score from 0 to 100"));
        assert!(!p.system_text.contains(SCEPTICAL_DIRECTIVE));
        assert_eq!(p.manifest.theme_names.len(), 11);
        assert_eq!(p.manifest.statement_ids.len(), 17);
    }

    #[test]
    fn modifiers_are_appended_in_fixed_order() {
        let (cb, corpus) = (fixtures::codebook(), fixtures::corpus());
        let s = spec().with_modifier(Modifier::Parsimonious).with_modifier(Modifier::Sceptical);
        let p = build_coding_prompt(&cb, &corpus, &s).unwrap();
        assert!(p.system_text.ends_with("Be sceptical.\nBe parsimonious."), "{}", p.system_text);
        assert!(p.system_text.contains("Be sceptical"));
        assert!(p.system_text.contains("Be parsimonious"));
    }

    #[test]
    fn rendering_is_stable_and_hash_sensitive() {
        let (cb, corpus) = (fixtures::codebook(), fixtures::corpus());
        let a = build_coding_prompt(&cb, &corpus, &spec()).unwrap();
        let b = build_coding_prompt(&cb, &corpus, &spec()).unwrap();
        assert_eq!(a, b);
        let c = build_coding_prompt(&cb, &corpus, &spec().with_modifier(Modifier::Sceptical)).unwrap();
        assert_ne!(a.content_hash, c.content_hash);
        let mut renamed = cb.clone();
        renamed.rename_theme(11, "Something else").unwrap();
        let d = build_coding_prompt(&renamed, &corpus, &spec()).unwrap();
        assert_ne!(a.content_hash, d.content_hash);
    }

    #[test]
    fn pass_flags_are_enforced() {
        let (cb, corpus) = (fixtures::codebook(), fixtures::corpus());
        let rev = spec().revision();
        assert_eq!(build_coding_prompt(&cb, &corpus, &rev).unwrap_err(), PromptError::WrongPass { expected: false });
        let bad = PromptSpec { revision_pass: true, ..spec() };
        assert_eq!(build_coding_prompt(&cb, &corpus, &bad).unwrap_err(), PromptError::JustificationsRequired);
    }

    #[test]
    fn revision_prompt_embeds_prior_and_directives() {
        let (cb, corpus) = (fixtures::codebook(), fixtures::corpus());
        let prior = ScoreMatrix::from_fn("m", 1, Dims::new(17, 11), |c| (c.statement + c.theme * 5) as u8).unwrap();
        let p = build_revision_prompt(&prior, &cb, &corpus, &spec().revision()).unwrap();
        assert!(p.user_text.contains("Take your time"));
        assert!(p.user_text.contains(JUSTIFY_DIRECTIVE));
        let table = extract_prior_table(&p.user_text).unwrap();
        let back = crate::payload::parse_payload(table, "m", &cb, &corpus, Default::default()).unwrap();
        assert_eq!(back.scores().len(), 187);
        assert_eq!(back, prior);
        for s in corpus.statements() {
            assert_eq!(count(&p.user_text, &statement_marker(s.id)), 1);
        }
        let again = build_revision_prompt(&prior, &cb, &corpus, &spec().revision()).unwrap();
        assert_eq!(p.content_hash, again.content_hash);
    }

    #[test]
    fn revision_prompt_rejects_short_prior() {
        let (cb, corpus) = (fixtures::codebook(), fixtures::corpus());
        let prior = ScoreMatrix::from_fn("m", 1, Dims::new(16, 11), |_| 50).unwrap();
        match build_revision_prompt(&prior, &cb, &corpus, &spec().revision()).unwrap_err() {
            PromptError::IncompletePrior { missing, .. } => {
                assert_eq!(missing, (1..=11).map(|t| Cell::new(17, t)).collect::<Vec<_>>());
            }
            other => panic!("unexpected {other}"),
        }
        assert!(matches!(
            build_revision_prompt(&prior, &cb, &corpus, &spec()),
            Err(PromptError::WrongPass { expected: true })
        ));
    }

    #[test]
    fn theme_generation_prompt() {
        let corpus = fixtures::corpus();
        let p = build_theme_generation_prompt(&corpus, "Follow a six-phase reflexive approach.").unwrap();
        assert!(p.system_text.contains("Methodological guidance:\nFollow a six-phase reflexive approach."));
        assert!(p.system_text.contains("numbered list"));
        for s in corpus.statements() {
            assert!(p.user_text.contains(s.text.trim()));
        }
        let bare = build_theme_generation_prompt(&corpus, "  ").unwrap();
        assert!(!bare.system_text.contains("Methodological guidance"));
        assert!(!bare.system_text.contains("\n\n\n"));
    }

    #[test]
    fn custom_templates_must_keep_required_slots() {
        let broken = PromptTemplate::parse("[system]\n{{themes}}\n[user]\n{{statements}}\n").unwrap();
        let ok = PromptTemplate::parse(DEFAULT_REVISION_TEMPLATE).unwrap();
        let themes = PromptTemplate::parse(DEFAULT_THEMES_TEMPLATE).unwrap();
        assert_eq!(
            Prompter::new(broken, ok, themes).unwrap_err(),
            PromptError::MissingSlot(Slot::OutputContract)
        );
    }

    #[test]
    fn statement_text_with_braces_is_verbatim() {
        let corpus = Corpus::new(
            "c",
            vec![Statement { id: 1, source: Source::Other, text: "uses {{themes}} literally".into(), selection_notes: None }],
        )
        .unwrap();
        let p = build_coding_prompt(&fixtures::codebook(), &corpus, &spec()).unwrap();
        assert!(p.user_text.contains("[S1] uses {{themes}} literally"));
    }
}
