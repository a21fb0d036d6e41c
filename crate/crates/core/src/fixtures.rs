//! Shipped fixture data: the 17-statement corpus, an 11-theme codebook and
//! the 58-card deck. Theme names 9..=11 and all card texts are placeholders.

use crate::cards::Deck;
use crate::corpus::{Codebook, Corpus};

pub const CORPUS_JSON: &str = include_str!("../fixtures/corpus.json");
pub const CODEBOOK_JSON: &str = include_str!("../fixtures/codebook.json");
pub const CARDS_JSON: &str = include_str!("../fixtures/cards.json");

pub fn corpus() -> Corpus {
    Corpus::from_json("robodebt", CORPUS_JSON).expect("fixture corpus is valid")
}

pub fn codebook() -> Codebook {
    Codebook::from_json(CODEBOOK_JSON).expect("fixture codebook is valid")
}

pub fn deck() -> Deck {
    Deck::from_json(CARDS_JSON, None).expect("fixture deck is valid")
}
