use proptest::prelude::*;

use s2e_coref::c2f::{C2fConfig, C2fParams};
use s2e_coref::corpus::{validate_document, Severity, Token};
use s2e_coref::embedding::{decode_docemb, load_docemb, save_docemb, synthetic_embed, write_docemb};
use s2e_coref::io::{
    insert_speakers, parse_conll, parse_jsonlines, write_conll, write_jsonlines, write_predictions, Format,
};
use s2e_coref::{ClusterSet, Document, EmbeddingMatrix, Genre, Matrix, S2eParams, Span};

/// Documents with laminar gold spans, speaker runs and sentence breaks.
fn document() -> impl Strategy<Value = Document> {
    (2usize..30)
        .prop_flat_map(|n| {
            (
                Just(n),
                prop::collection::vec(prop::option::of(prop::sample::select(vec!["Ann", "Bo Li", "Cy"])), n),
                prop::collection::vec((0..n, 0usize..4), 0..10),
                prop::collection::vec(0usize..3, 0..10),
                prop::collection::vec(1usize..6, 1..8),
                prop::sample::select(vec!["bc", "nw", "tc", "zz"]),
            )
        })
        .prop_map(|(n, speakers, raw_spans, labels, breaks, genre)| {
            let tokens = speakers
                .iter()
                .enumerate()
                .map(|(i, s)| Token::new(i, format!("t{i}"), s.map(str::to_string)))
                .collect();
            let mut spans: Vec<Span> = Vec::new();
            for (start, len) in raw_spans {
                let s = Span::new(start, (start + len).min(n - 1));
                // Mentions stay within one speaker's turn.
                let one_turn = speakers[s.start..=s.end].iter().all(|sp| *sp == speakers[s.start]);
                if one_turn && !spans.iter().any(|t| *t == s || t.crosses(&s)) {
                    spans.push(s);
                }
            }
            let mut clusters: Vec<Vec<Span>> = vec![Vec::new(); 3];
            for (s, l) in spans.iter().zip(labels.iter().chain(std::iter::repeat(&0))) {
                clusters[*l].push(*s);
            }
            let mut gold = ClusterSet::new(clusters);
            gold.drop_singletons();
            let mut sentence_lengths = Vec::new();
            let mut left = n;
            for b in breaks.iter().cycle() {
                if left == 0 {
                    break;
                }
                let len = (*b).min(left);
                sentence_lengths.push(len);
                left -= len;
            }
            let id = format!("{genre}/prop/0001");
            Document {
                doc_key: format!("{id}_3"),
                tokens,
                genre: Genre::from_doc_id(&id),
                gold_clusters: gold.canonical(),
                sentence_lengths,
            }
        })
}

fn canonical(mut docs: Vec<Document>) -> Vec<Document> {
    docs.iter_mut()
        .for_each(|d| d.gold_clusters = d.gold_clusters.canonical());
    docs
}

proptest! {
    #[test]
    fn conll_round_trip(doc in document()) {
        let back = canonical(parse_conll(&write_conll(std::slice::from_ref(&doc))).unwrap());
        let mut expected = doc;
        for t in &mut expected.tokens {
            t.speaker = t.speaker.as_ref().map(|s| s.replace(' ', "_"));
        }
        prop_assert_eq!(back, vec![expected]);
    }

    #[test]
    fn jsonlines_round_trip(doc in document()) {
        let back = canonical(parse_jsonlines(&write_jsonlines(std::slice::from_ref(&doc))).unwrap());
        let mut expected = doc;
        expected.sentence_lengths.clear();
        prop_assert_eq!(back, vec![expected]);
    }

    #[test]
    fn speaker_insertion_keeps_mention_text(doc in document()) {
        let inserted = insert_speakers(&doc);
        for (a, b) in doc.gold_clusters.mentions().zip(inserted.gold_clusters.mentions()) {
            prop_assert_eq!(doc.span_text(a), inserted.span_text(b));
        }
        prop_assert!(validate_document(&inserted).iter().all(|v| v.severity != Severity::Error));
    }

    #[test]
    fn speaker_insertion_idempotent(doc in document()) {
        let once = insert_speakers(&doc);
        prop_assert_eq!(insert_speakers(&once), once);
    }

    #[test]
    fn removing_inserted_tokens_restores_document(doc in document()) {
        prop_assert_eq!(insert_speakers(&doc).without_synthetic().unwrap(), doc);
    }

    #[test]
    fn predictions_map_back_to_original_positions(doc in document()) {
        let inserted = insert_speakers(&doc);
        let text = write_predictions(&inserted, &inserted.gold_clusters, Format::Conll).unwrap();
        let parsed = parse_conll(&text).unwrap();
        prop_assert_eq!(parsed[0].gold_clusters.canonical(), doc.gold_clusters.canonical());
        prop_assert_eq!(parsed[0].len(), doc.len());
    }
}

#[test]
fn speaker_insertion_hand_cases() {
    let mut doc = Document::from_words("a", &["A-said", "hello"], vec![vec![Span::new(0, 0), Span::new(1, 1)]]);
    for t in &mut doc.tokens {
        t.speaker = Some("X".into());
    }
    let out = insert_speakers(&doc);
    let words: Vec<&str> = out.tokens.iter().map(|t| t.text.as_str()).collect();
    assert_eq!(words, ["X", ":", "A-said", "hello"]);
    assert_eq!(out.gold_clusters.clusters[0][0], Span::new(2, 2));

    doc.tokens[1].speaker = Some("Y".into());
    assert_eq!(insert_speakers(&doc).len(), 6);

    let plain = Document::from_words("b", &["x", "y"], vec![]);
    assert_eq!(insert_speakers(&plain), plain);
}

#[test]
fn prediction_on_inserted_token_is_rejected() {
    let mut doc = Document::from_words("a", &["hi", "there"], vec![]);
    doc.tokens[0].speaker = Some("X".into());
    let inserted = insert_speakers(&doc);
    let bad = ClusterSet::new(vec![vec![Span::new(0, 0), Span::new(2, 2)]]);
    assert!(write_predictions(&inserted, &bad, Format::Jsonlines).is_err());
}

#[test]
fn empty_prediction_writes_dashes() {
    let doc = Document::from_words("nw/x_0", &["a", "b"], vec![]);
    let text = write_predictions(&doc, &ClusterSet::default(), Format::Conll).unwrap();
    let tags: Vec<&str> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .map(|l| l.rsplit('\t').next().unwrap())
        .collect();
    assert_eq!(tags, ["-", "-"]);
}

#[test]
fn docemb_files_round_trip_and_detect_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let doc = Document::from_words("bc/cctv/00/cctv_0001_0", &["we", "saw", "it"], vec![]);
    let emb = synthetic_embed(&doc, 6, 2).unwrap();
    let path = save_docemb(dir.path(), &emb).unwrap();
    let loaded = load_docemb(dir.path(), &doc.doc_key).unwrap();
    assert_eq!(loaded.doc_key, emb.doc_key);
    for (a, b) in loaded.values.as_slice().iter().zip(emb.values.as_slice()) {
        assert_eq!(*a, *b as f32 as f64);
    }

    let mut bytes = std::fs::read(&path).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x40;
    assert!(decode_docemb(&bytes).is_err());
    bytes.truncate(bytes.len() - 3);
    assert!(decode_docemb(&bytes).is_err());
}

#[test]
fn docemb_rounds_to_f32() {
    let m = EmbeddingMatrix::new("k", Matrix::from_vec(1, 2, vec![0.1, 1.0 / 3.0]).unwrap()).unwrap();
    let mut buf = Vec::new();
    write_docemb(&m, &mut buf).unwrap();
    let back = decode_docemb(&buf).unwrap();
    assert_eq!(back.values.as_slice(), &[0.1f32 as f64, (1.0f32 / 3.0) as f64]);
}

#[test]
fn synthetic_embeddings_are_deterministic() {
    let doc = Document::from_words("a", &["x", "y", "z", "x"], vec![]);
    assert_eq!(
        synthetic_embed(&doc, 8, 5).unwrap(),
        synthetic_embed(&doc, 8, 5).unwrap()
    );
    assert_ne!(
        synthetic_embed(&doc, 8, 5).unwrap(),
        synthetic_embed(&doc, 8, 6).unwrap()
    );
}

#[test]
fn checkpoints_round_trip() {
    let p = S2eParams::init(7, 5, 1);
    let mut buf = Vec::new();
    p.save(&mut buf).unwrap();
    assert_eq!(S2eParams::load(buf.as_slice()).unwrap(), p);
    buf[10] ^= 1;
    assert!(S2eParams::load(buf.as_slice()).is_err());

    let c = C2fParams::init(6, &C2fConfig::default(), 2);
    let mut buf = Vec::new();
    c.save(&mut buf).unwrap();
    assert_eq!(C2fParams::load(buf.as_slice()).unwrap(), c);
    assert!(S2eParams::load(buf.as_slice()).is_err());
}
