//! Deterministic offline provider.
//!
//! Coding prompts get scores that depend only on `(seed, statement, theme)`.
//! Revision prompts are answered from the prior table embedded in the prompt,
//! and theme-generation prompts from the fixture codebook.

use serde_json::Value;
use themeloom_core::corpus::{Codebook, Dims, Theme};
use themeloom_core::matrix::{Cell, CellNote, ScoreMatrix};
use themeloom_core::payload::render_payload;
use themeloom_core::prompting::extract_prior_table;
use themeloom_core::{fixtures, PromptKind, RenderedPrompt};

use crate::config::{MockBehavior, MockRevision, MockThemes};
use crate::RawResponse;

/// Lowest score the mock emits, so a downward shift of up to this much never clamps.
pub const MOCK_SCORE_MIN: u8 = 10;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Score in `[10, 100]` for one cell.
pub fn mock_score(seed: u64, statement: u32, theme: u32) -> u8 {
    let h = splitmix64(splitmix64(splitmix64(seed) ^ u64::from(statement)) ^ u64::from(theme));
    MOCK_SCORE_MIN + (h % (101 - MOCK_SCORE_MIN as u64)) as u8
}

/// Codebook whose names come from the prompt when it lists `k` of them.
fn shape_codebook(prompt: &RenderedPrompt, k: usize) -> Codebook {
    let names = &prompt.manifest.theme_names;
    let themes = |named: bool| -> Vec<Theme> {
        (1..=k as u32)
            .map(|id| Theme {
                id,
                name: if named { names[id as usize - 1].clone() } else { format!("Theme {id}") },
                description: None,
            })
            .collect()
    };
    if names.len() == k {
        if let Ok(cb) = Codebook::new(1, themes(true)) {
            return cb;
        }
    }
    Codebook::new(1, themes(false)).expect("generic names are distinct")
}

/// Pass-one payload for `shape`, a pure function of `(seed, statement, theme)`.
pub fn mock_complete(seed: u64, prompt: &RenderedPrompt, shape: Dims) -> RawResponse {
    let codebook = shape_codebook(prompt, shape.themes);
    let m = ScoreMatrix::from_fn("mock", 1, shape, |c| mock_score(seed, c.statement, c.theme))
        .expect("mock scores are in range");
    raw(render_payload(&m, &codebook))
}

fn raw(text: String) -> RawResponse {
    RawResponse { text, provider_echo: String::new(), latency_ms: 0, from_cache: false }
}

fn prompt_shape(prompt: &RenderedPrompt) -> Dims {
    Dims::new(prompt.manifest.statement_ids.len(), prompt.manifest.theme_names.len())
}

/// Answers any rendered prompt according to `behavior`.
pub fn respond(behavior: &MockBehavior, prompt: &RenderedPrompt) -> RawResponse {
    match prompt.kind {
        PromptKind::Coding => mock_complete(behavior.seed, prompt, prompt_shape(prompt)),
        PromptKind::Revision => revise(behavior.revision, prompt),
        PromptKind::ThemeGeneration => raw(theme_reply(behavior.themes)),
    }
}

fn revise(style: MockRevision, prompt: &RenderedPrompt) -> RawResponse {
    let shape = prompt_shape(prompt);
    let codebook = shape_codebook(prompt, shape.themes);
    let Some(prior) = read_prior(prompt, &codebook, shape) else {
        return raw("I could not find a previous score table in your message.".into());
    };
    let (delta, justify) = match style {
        MockRevision::Echo => (0, false),
        MockRevision::Shift { delta, justify } => (delta, justify),
    };
    let mut revised = ScoreMatrix::from_fn("mock", 1, shape, |c| {
        let before = prior.get(c).expect("cell in shape") as i16;
        (before + delta).clamp(0, 100) as u8
    })
    .expect("clamped scores are in range");
    if justify {
        let notes = revised
            .iter()
            .filter(|(c, after)| prior.get(*c) != Some(*after))
            .map(|(cell, after)| CellNote { cell, text: reason(prior.get(cell).unwrap_or(0), after) })
            .collect();
        revised.set_justifications(notes).expect("cells come from the matrix");
    }
    raw(render_payload(&revised, &codebook))
}

fn reason(before: u8, after: u8) -> String {
    if after < before {
        format!("On reflection the statement supports this theme less directly; lowered from {before} to {after}.")
    } else {
        format!("On reflection the statement supports this theme more directly; raised from {before} to {after}.")
    }
}

fn read_prior(prompt: &RenderedPrompt, codebook: &Codebook, shape: Dims) -> Option<ScoreMatrix> {
    let table: Value = serde_json::from_str(extract_prior_table(&prompt.user_text)?).ok()?;
    let mut entries = Vec::with_capacity(shape.cells());
    for (key, row) in table.as_object()? {
        let statement: u32 = key.parse().ok()?;
        for (name, score) in row.as_object()? {
            let theme = codebook.find_theme(name, false)?.id;
            entries.push((Cell::new(statement, theme), u8::try_from(score.as_u64()?).ok()?));
        }
    }
    ScoreMatrix::from_cells("prior", 1, shape, entries).ok()
}

fn theme_reply(style: MockThemes) -> String {
    match style {
        MockThemes::Numbered => fixtures::codebook()
            .themes()
            .iter()
            .map(|t| match &t.description {
                Some(d) => format!("{}. {} - {}", t.id, t.name, d),
                None => format!("{}. {}", t.id, t.name),
            })
            .collect::<Vec<_>>()
            .join("\n"),
        MockThemes::Prose => "The statements share a concern with accountability and trust, and the speakers \
return often to how the scheme was administered and explained."
            .into(),
    }
}
