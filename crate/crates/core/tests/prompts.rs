use std::collections::BTreeSet;

use proptest::prelude::*;
use themeloom_core::corpus::Corpus;
use themeloom_core::matrix::Cell;
use themeloom_core::prompting::{
    build_coding_prompt, build_revision_prompt, build_theme_generation_prompt, extract_prior_table, statement_marker,
    PromptError, Prompter,
};
use themeloom_core::{fixtures, Modifier, PromptSpec, ScoreMatrix};

fn prior() -> ScoreMatrix {
    let dims = fixtures::corpus().len();
    ScoreMatrix::from_fn("m", 1, themeloom_core::Dims::new(dims, 11), |c| ((c.statement * 7 + c.theme * 13) % 101) as u8)
        .unwrap()
}

fn occurrences(haystack: &str, needle: &str) -> usize {
    haystack.matches(needle).count()
}

#[test]
fn coding_prompt_contains_every_theme_and_statement() {
    let (corpus, codebook) = (fixtures::corpus(), fixtures::codebook());
    let p = build_coding_prompt(&codebook, &corpus, &PromptSpec::default()).unwrap();
    for name in codebook.theme_names() {
        assert!(p.system_text.contains(&name), "missing theme {name}");
    }
    for s in corpus.statements() {
        assert_eq!(occurrences(&p.user_text, &statement_marker(s.id)), 1);
        assert!(p.user_text.contains(s.text.trim()));
    }
    assert!(p.system_text.contains("integer score from 0 to 100"));
    assert!(!p.system_text.contains("Be sceptical"));
    assert_eq!(p.manifest.statement_ids.len(), 17);
    assert_eq!(p.manifest.theme_names.len(), 11);
}

#[test]
fn modifiers_append_directives_in_fixed_order() {
    let (corpus, codebook) = (fixtures::corpus(), fixtures::codebook());
    let a = PromptSpec::default().with_modifier(Modifier::Parsimonious).with_modifier(Modifier::Sceptical);
    let b = PromptSpec::default().with_modifier(Modifier::Sceptical).with_modifier(Modifier::Parsimonious);
    let pa = build_coding_prompt(&codebook, &corpus, &a).unwrap();
    let pb = build_coding_prompt(&codebook, &corpus, &b).unwrap();
    assert_eq!(pa.content_hash, pb.content_hash);
    assert!(pa.system_text.ends_with("Be sceptical.\nBe parsimonious."));
}

#[test]
fn empty_inputs_are_rejected() {
    let codebook = fixtures::codebook();
    let empty = Corpus::from_json("e", "[]");
    assert!(empty.is_err(), "an empty corpus cannot even be constructed");
    let corpus = fixtures::corpus();
    let spec = PromptSpec::default().revision();
    assert!(matches!(build_coding_prompt(&codebook, &corpus, &spec), Err(PromptError::WrongPass { .. })));
}

#[test]
fn revision_prompt_embeds_prior_and_directives() {
    let (corpus, codebook) = (fixtures::corpus(), fixtures::codebook());
    let spec = PromptSpec::default().revision();
    let prior = prior();
    let p = build_revision_prompt(&prior, &codebook, &corpus, &spec).unwrap();
    assert!(p.user_text.contains("Take your time"));
    assert!(p.user_text.to_lowercase().contains("justif"));
    let table = extract_prior_table(&p.user_text).unwrap();
    let reparsed = themeloom_core::payload::parse_payload(table, "m", &codebook, &corpus, Default::default()).unwrap();
    assert_eq!(reparsed.scores(), prior.scores());
    assert_eq!(reparsed.scores().len(), 187);
    for s in corpus.statements() {
        assert_eq!(occurrences(&p.user_text, &statement_marker(s.id)), 1);
    }
    let again = build_revision_prompt(&prior, &codebook, &corpus, &spec).unwrap();
    assert_eq!(p.content_hash, again.content_hash);
}

#[test]
fn incomplete_prior_names_missing_cells() {
    let (corpus, codebook) = (fixtures::corpus(), fixtures::codebook());
    let full = prior();
    let entries = full.iter().filter(|(c, _)| *c != Cell::new(5, 2));
    let err = ScoreMatrix::from_cells("m", 1, full.dims(), entries).unwrap_err();
    assert!(err.to_string().contains("(statement 5, theme 2)"), "{err}");

    let short = ScoreMatrix::from_fn("m", 1, themeloom_core::Dims::new(17, 10), |_| 50).unwrap();
    match build_revision_prompt(&short, &codebook, &corpus, &PromptSpec::default().revision()) {
        Err(PromptError::IncompletePrior { missing, .. }) => {
            assert_eq!(missing.len(), 17);
            assert!(missing.contains(&Cell::new(5, 11)));
        }
        other => panic!("expected incomplete prior, got {other:?}"),
    }
}

#[test]
fn theme_generation_prompt() {
    let corpus = fixtures::corpus();
    let guidance = "Follow a reflexive approach to thematic analysis.";
    let p = build_theme_generation_prompt(&corpus, guidance).unwrap();
    assert!(p.user_text.contains(guidance) || p.system_text.contains(guidance));
    for s in corpus.statements() {
        assert!(p.user_text.contains(s.text.trim()));
    }
    assert!(p.system_text.contains("numbered list") || p.user_text.contains("numbered list"));
    let bare = build_theme_generation_prompt(&corpus, "  ").unwrap();
    assert!(!bare.system_text.contains("Methodological guidance") && !bare.user_text.contains("Methodological guidance"));
}

#[test]
fn templates_load_from_a_directory_with_fallbacks() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("coding.txt"),
        "[system]\nCODE THESE\n{{themes}}\n{{output_contract}}\n{{modifiers}}\n[user]\n{{statements}}\n",
    )
    .unwrap();
    let prompter = Prompter::from_dir(dir.path()).unwrap();
    let p = prompter.build_coding_prompt(&fixtures::codebook(), &fixtures::corpus(), &PromptSpec::default()).unwrap();
    assert!(p.system_text.starts_with("CODE THESE"));
    std::fs::write(dir.path().join("revision.txt"), "[system]\n{{themes}}\n[user]\n{{statements}}\n").unwrap();
    assert!(matches!(Prompter::from_dir(dir.path()), Err(PromptError::MissingSlot(_))));
}

fn modifier_set() -> impl Strategy<Value = BTreeSet<Modifier>> {
    prop::collection::btree_set(prop_oneof![Just(Modifier::Sceptical), Just(Modifier::Parsimonious)], 0..=2)
}

proptest! {
    #[test]
    fn adding_a_modifier_keeps_all_content(mods in modifier_set(), extra in prop_oneof![Just(Modifier::Sceptical), Just(Modifier::Parsimonious)], preamble in "[a-zA-Z ]{0,40}") {
        let (corpus, codebook) = (fixtures::corpus(), fixtures::codebook());
        let base = PromptSpec { context_preamble: preamble, modifiers: mods, ..PromptSpec::default() };
        let more = base.clone().with_modifier(extra);
        let p0 = build_coding_prompt(&codebook, &corpus, &base).unwrap();
        let p1 = build_coding_prompt(&codebook, &corpus, &more).unwrap();
        for name in codebook.theme_names() {
            prop_assert!(p1.system_text.contains(&name));
        }
        for s in corpus.statements() {
            prop_assert!(p1.user_text.contains(&statement_marker(s.id)));
        }
        prop_assert!(p1.system_text.contains(extra.directive()));
        prop_assert_eq!(&p0.content_hash, &build_coding_prompt(&codebook, &corpus, &base).unwrap().content_hash);
        prop_assert_eq!(p0.content_hash == p1.content_hash, base == more);
    }
}
