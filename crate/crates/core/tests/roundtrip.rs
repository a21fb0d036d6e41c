use proptest::prelude::*;
use themeloom_core::corpus::{load_codebook, load_corpus, save_codebook, save_corpus, validate_pairing, CorpusError};
use themeloom_core::matrix::CellNote;
use themeloom_core::payload::{parse_payload, render_payload, ParseOptions, PayloadError};
use themeloom_core::{fixtures, BinaryMatrix, Cell, Codebook, Corpus, Dims, ScoreMatrix, Source, Statement, Theme};

fn stmt(id: u32) -> Statement {
    Statement { id, source: Source::Other, text: format!("statement {id}"), selection_notes: None }
}

fn theme(id: u32, name: &str) -> Theme {
    Theme { id, name: name.into(), description: None }
}

#[test]
fn fixture_files_load_from_disk() {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let corpus = load_corpus(root.join("corpus.json")).unwrap();
    assert_eq!(corpus.len(), 17);
    let codebook = load_codebook(root.join("codebook.json")).unwrap();
    assert_eq!(codebook.len(), 11);
    let names = codebook.theme_names();
    assert!(names.contains(&"Denial of Personal Responsibility".to_string()));
    assert!(names.contains(&"Mistrust and Skepticism".to_string()));
    assert_eq!(validate_pairing(&corpus, &codebook), Dims::new(17, 11));
}

#[test]
fn corpus_and_codebook_error_cases() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.json");
    std::fs::write(&empty, "[]").unwrap();
    assert_eq!(load_corpus(&empty).unwrap_err().to_string(), "empty corpus");

    let dup = dir.path().join("dup.json");
    std::fs::write(
        &dup,
        r#"[{"id":1,"source":"hansard","text":"a"},{"id":3,"source":"hansard","text":"b"},{"id":3,"source":"other","text":"c"}]"#,
    )
    .unwrap();
    let err = load_corpus(&dup).unwrap_err();
    assert!(matches!(err, CorpusError::DuplicateStatementId(3)), "{err}");
    assert!(err.to_string().contains('3'));

    let cb = Codebook::new(1, vec![theme(1, "Consequences"), theme(2, "consequences")]);
    assert!(matches!(cb, Err(CorpusError::DuplicateThemeName(_))));
    assert!(matches!(Codebook::new(1, vec![]), Err(CorpusError::EmptyCodebook)));
    assert!(load_corpus(dir.path().join("absent.json")).is_err());

    let one = Corpus::new("x", vec![stmt(1)]).unwrap();
    let cb1 = Codebook::new(1, vec![theme(1, "A")]).unwrap();
    assert_eq!(validate_pairing(&one, &cb1), Dims::new(1, 1));
    let three = Corpus::new("x", (1..=3).map(stmt).collect()).unwrap();
    let cb2 = Codebook::new(1, vec![theme(1, "A"), theme(2, "B")]).unwrap();
    assert_eq!(validate_pairing(&three, &cb2), Dims::new(3, 2));
}

#[test]
fn corpus_and_codebook_survive_save_and_load() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = fixtures::corpus();
    let path = dir.path().join("robodebt.json");
    save_corpus(&corpus, &path).unwrap();
    let back = load_corpus(&path).unwrap();
    assert_eq!(back, corpus);
    save_corpus(&back, &path).unwrap();
    assert_eq!(load_corpus(&path).unwrap(), corpus);

    let codebook = fixtures::codebook();
    let cpath = dir.path().join("codebook.json");
    save_codebook(&codebook, &cpath).unwrap();
    assert_eq!(load_codebook(&cpath).unwrap(), codebook);
}

#[test]
fn codebook_version_strictly_increases_under_edits() {
    let mut cb = fixtures::codebook();
    let mut last = cb.version();
    cb.rename_theme(9, "Something Else").unwrap();
    assert!(cb.version() > last);
    last = cb.version();
    cb.set_description(9, Some("d".into())).unwrap();
    assert!(cb.version() > last);
    last = cb.version();
    cb.add_theme("Another", None).unwrap();
    assert!(cb.version() > last);
    assert!(cb.rename_theme(1, "mistrust and skepticism").is_err());
}

#[test]
fn matrix_csv_round_trips_in_any_column_order() {
    let codebook = fixtures::codebook();
    let dims = Dims::new(17, 11);
    let m = ScoreMatrix::from_fn("gpt", 1, dims, |c| ((c.statement * 31 + c.theme * 17) % 101) as u8).unwrap();
    let csv = m.to_csv(&codebook).unwrap();
    assert!(csv.starts_with("statement,Denial of Personal Responsibility,"));
    assert_eq!(ScoreMatrix::from_csv(&csv, "gpt", 1, &codebook, 17).unwrap(), m);

    // Reverse the column order and shuffle the rows.
    let rows: Vec<Vec<String>> =
        csv.lines().map(|l| l.split(',').map(String::from).collect()).collect();
    let mut out = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        let mut cols = vec![r[0].clone()];
        cols.extend(r[1..].iter().rev().cloned());
        if i == 0 {
            out.insert(0, cols.join(","));
        } else {
            out.push(cols.join(","));
        }
    }
    out[1..].reverse();
    let shuffled = out.join("\n");
    assert_eq!(ScoreMatrix::from_csv(&shuffled, "gpt", 1, &codebook, 17).unwrap(), m);

    let b = BinaryMatrix::from_fn("human", dims, |c| (c.statement + c.theme) % 3 == 0).unwrap();
    assert_eq!(BinaryMatrix::from_csv(&b.to_csv(&codebook).unwrap(), "human", &codebook, 17).unwrap(), b);
    let small = Codebook::new(1, vec![theme(1, "A"), theme(2, "B")]).unwrap();
    let err = ScoreMatrix::from_csv("statement,A,B\n1,5,101\n", "x", 1, &small, 1).unwrap_err();
    assert!(err.to_string().contains("101"), "{err}");
}

#[test]
fn payload_errors_are_specific() {
    let (corpus, codebook) = (fixtures::corpus(), fixtures::codebook());
    let full = ScoreMatrix::from_fn("m", 1, Dims::new(17, 11), |_| 40).unwrap();
    let text = render_payload(&full, &codebook);
    let opts = ParseOptions::default();

    let missing = text.replace("\"Mistrust and Skepticism\": 40, ", "");
    match parse_payload(&missing, "m", &codebook, &corpus, opts) {
        Err(PayloadError::MissingCells(cells)) => assert_eq!(cells.len(), 17),
        other => panic!("{other:?}"),
    }
    let drifted = text.replacen("Mistrust and Skepticism", "Mistrust & Skepticism", 1);
    match parse_payload(&drifted, "m", &codebook, &corpus, opts) {
        Err(PayloadError::UnknownThemes { names, candidates }) => {
            assert_eq!(names, vec!["Mistrust & Skepticism".to_string()]);
            assert_eq!(candidates.len(), 11);
        }
        other => panic!("{other:?}"),
    }
    let spaced = text.replace("Mistrust and Skepticism", "mistrust  and   skepticism");
    assert!(matches!(parse_payload(&spaced, "m", &codebook, &corpus, opts), Err(PayloadError::UnknownThemes { .. })));
    assert_eq!(parse_payload(&spaced, "m", &codebook, &corpus, ParseOptions { repair: true }).unwrap(), full);

    let high = text.replacen(": 40", ": 140", 1);
    assert!(matches!(parse_payload(&high, "m", &codebook, &corpus, opts), Err(PayloadError::OutOfRange(v)) if v[0].1 == 140));
    let frac = text.replacen(": 40", ": 40.5", 1);
    assert!(matches!(parse_payload(&frac, "m", &codebook, &corpus, opts), Err(PayloadError::NonIntegerScores(_))));
    let extra = text.replacen("{\n", "{\n  \"18\": {},\n", 1);
    assert!(matches!(parse_payload(&extra, "m", &codebook, &corpus, opts), Err(PayloadError::UnknownStatements(v)) if v == ["18"]));
    assert!(matches!(parse_payload("not json", "m", &codebook, &corpus, opts), Err(PayloadError::Malformed(_))));
    let fenced = format!("```json\n{text}\n```");
    assert_eq!(parse_payload(&fenced, "m", &codebook, &corpus, opts).unwrap(), full);
}

fn matrix_with_notes() -> impl Strategy<Value = ScoreMatrix> {
    (
        prop::collection::vec(0u8..=100, 187),
        prop::collection::btree_map((1u32..=17, 1u32..=11), "[ -~]{1,30}", 0..6),
    )
        .prop_map(|(scores, notes)| {
            let mut m = ScoreMatrix::new("m", 1, Dims::new(17, 11), scores).unwrap();
            let notes = notes
                .into_iter()
                .filter(|(_, t)| !t.trim().is_empty())
                .map(|((s, t), text)| CellNote { cell: Cell::new(s, t), text: text.trim().to_string() })
                .collect();
            m.set_justifications(notes).unwrap();
            m
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]
    #[test]
    fn payload_round_trips(m in matrix_with_notes()) {
        let (corpus, codebook) = (fixtures::corpus(), fixtures::codebook());
        let text = render_payload(&m, &codebook);
        let back = parse_payload(&text, "m", &codebook, &corpus, ParseOptions::default()).unwrap();
        prop_assert_eq!(back, m);
    }
}
