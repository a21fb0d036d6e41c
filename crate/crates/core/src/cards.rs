//! Reflexivity card deck: provocations for interrogating prompt design.
//!
//! Deck file: a JSON array of `{id, category, text}` with `category` one of
//! `Structure`, `Consequences`, `Output`.

use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DeckError {
    #[error("cannot read deck {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed deck: {0}")]
    Malformed(String),
    #[error("deck has no cards")]
    Empty,
    #[error("duplicate card id {0}")]
    DuplicateId(u32),
    #[error("card {id}: unknown category {category:?} (expected Structure, Consequences or Output)")]
    UnknownCategory { id: u32, category: String },
    #[error("no cards in category {0}")]
    NoEligibleCards(Category),
    #[error("reflection note is empty")]
    EmptyNote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    Structure,
    Consequences,
    Output,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Structure, Category::Consequences, Category::Output];

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Structure => "Structure",
            Category::Consequences => "Consequences",
            Category::Output => "Output",
        }
    }
}

impl std::fmt::Display for Category {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Card {
    pub id: u32,
    pub category: Category,
    pub text: String,
}

#[derive(Deserialize)]
struct RawCard {
    id: u32,
    category: String,
    text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Deck {
    cards: Vec<Card>,
    source_file: Option<PathBuf>,
}

impl Deck {
    pub fn new(cards: Vec<Card>, source_file: Option<PathBuf>) -> Result<Self, DeckError> {
        if cards.is_empty() {
            return Err(DeckError::Empty);
        }
        let mut seen = std::collections::HashSet::new();
        for c in &cards {
            if !seen.insert(c.id) {
                return Err(DeckError::DuplicateId(c.id));
            }
        }
        Ok(Self { cards, source_file })
    }

    pub fn from_json(text: &str, source_file: Option<PathBuf>) -> Result<Self, DeckError> {
        if text.trim().is_empty() {
            return Err(DeckError::Empty);
        }
        let raw: Vec<RawCard> = serde_json::from_str(text).map_err(|e| DeckError::Malformed(e.to_string()))?;
        let cards = raw
            .into_iter()
            .map(|r| {
                let category = Category::parse(&r.category)
                    .filter(|c| c.as_str() == r.category)
                    .ok_or(DeckError::UnknownCategory { id: r.id, category: r.category })?;
                Ok(Card { id: r.id, category, text: r.text })
            })
            .collect::<Result<Vec<_>, DeckError>>()?;
        Self::new(cards, source_file)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.cards).expect("cards serialize");
        s.push('\n');
        s
    }

    pub fn cards(&self) -> &[Card] {
        &self.cards
    }

    pub fn len(&self) -> usize {
        self.cards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cards.is_empty()
    }

    pub fn source_file(&self) -> Option<&Path> {
        self.source_file.as_deref()
    }

    pub fn card(&self, id: u32) -> Option<&Card> {
        self.cards.iter().find(|c| c.id == id)
    }

    pub fn count(&self, category: Category) -> usize {
        self.cards.iter().filter(|c| c.category == category).count()
    }

    /// Uniform draw over the eligible cards, fully determined by `seed`.
    pub fn draw(&self, seed: u64, category: Option<Category>) -> Result<&Card, DeckError> {
        let eligible: Vec<&Card> = self
            .cards
            .iter()
            .filter(|c| category.is_none_or(|want| c.category == want))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        eligible
            .choose(&mut rng)
            .copied()
            .ok_or_else(|| DeckError::NoEligibleCards(category.expect("an unfiltered deck is never empty")))
    }
}

pub fn load_deck(path: impl AsRef<Path>) -> Result<Deck, DeckError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| DeckError::Io { path: path.to_path_buf(), source })?;
    Deck::from_json(&text, Some(path.to_path_buf()))
}

pub fn save_deck(deck: &Deck, path: impl AsRef<Path>) -> Result<(), DeckError> {
    let path = path.as_ref();
    std::fs::write(path, deck.to_json()).map_err(|source| DeckError::Io { path: path.to_path_buf(), source })
}

/// A researcher's note on a card, tied to the prompt version it discusses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reflection {
    pub card_id: u32,
    pub prompt_hash: String,
    pub note: String,
    pub created_at: DateTime<Utc>,
}

impl Reflection {
    pub fn new(card: &Card, prompt_hash: impl Into<String>, note: impl Into<String>) -> Result<Self, DeckError> {
        let note = note.into();
        if note.trim().is_empty() {
            return Err(DeckError::EmptyNote);
        }
        Ok(Self { card_id: card.id, prompt_hash: prompt_hash.into(), note, created_at: Utc::now() })
    }
}
