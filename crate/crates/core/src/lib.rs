//! Core data model and numeric kernel for LLM-aided thematic analysis.
//!
//! * [`corpus`] owns statements and the theme codebook.
//! * [`matrix`] holds per-coder score and binary matrices plus their CSV form.
//! * [`analysis`] thresholds, counts, agreement and correlation statistics.
//! * [`prompting`] renders coding, revision and theme-generation prompts.
//! * [`payload`] is the machine-readable score contract shared by prompts and parsers.
//! * [`cards`] is the reflexivity card deck.
//!
//! Data-parallel loops in [`analysis::batch`] run on rayon when the `parallel`
//! feature is enabled (the default) and fall back to plain iterators otherwise.

pub mod analysis;
pub mod cards;
pub mod corpus;
pub mod fixtures;
pub mod matrix;
pub mod payload;
pub mod prompting;

pub use analysis::{AgreementReport, Coding, Exec, SweepPoint};
pub use cards::{Card, Category, Deck, Reflection};
pub use corpus::{Codebook, Corpus, Dims, Source, Statement, Theme};
pub use matrix::{BinaryMatrix, Cell, CellNote, ScoreMatrix, Threshold};
pub use prompting::{Modifier, PromptKind, PromptSpec, RenderedPrompt};
