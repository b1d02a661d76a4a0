//! Speaker-name insertion.
//!
//! Wherever the speaker changes, the new speaker's name (split on
//! whitespace) followed by a `:` token is inserted in front of the first
//! token of the turn. Inserted tokens are flagged `synthetic` and carry the
//! new speaker's label, so running the insertion twice is a no-op.

use crate::corpus::{ClusterSet, Document, Span, Token};

pub const SEPARATOR: &str = ":";

pub fn insert_speakers(doc: &Document) -> Document {
    let n = doc.len();
    let mut tokens = Vec::with_capacity(n);
    let mut new_pos = Vec::with_capacity(n);
    let mut inserted_before = vec![0usize; n];

    for (i, tok) in doc.tokens.iter().enumerate() {
        let changed = match i {
            0 => tok.speaker.is_some(),
            _ => tok.speaker != doc.tokens[i - 1].speaker,
        };
        if changed && !tok.synthetic {
            if let Some(name) = &tok.speaker {
                let before = tokens.len();
                for part in name.split_whitespace().chain(std::iter::once(SEPARATOR)) {
                    tokens.push(Token {
                        index: tokens.len(),
                        text: part.to_string(),
                        speaker: Some(name.clone()),
                        synthetic: true,
                    });
                }
                inserted_before[i] = tokens.len() - before;
            }
        }
        new_pos.push(tokens.len());
        tokens.push(Token {
            index: tokens.len(),
            ..tok.clone()
        });
    }

    let gold = ClusterSet::new(
        doc.gold_clusters
            .clusters
            .iter()
            .map(|c| c.iter().map(|s| Span::new(new_pos[s.start], new_pos[s.end])).collect())
            .collect(),
    );

    let mut sentence_lengths = Vec::with_capacity(doc.sentence_lengths.len());
    let mut pos = 0;
    for &len in &doc.sentence_lengths {
        let extra: usize = inserted_before[pos..pos + len].iter().sum();
        sentence_lengths.push(len + extra);
        pos += len;
    }

    Document {
        doc_key: doc.doc_key.clone(),
        tokens,
        genre: doc.genre,
        gold_clusters: gold,
        sentence_lengths,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::validate_document;

    fn doc(words: &[&str], speakers: &[Option<&str>], clusters: Vec<Vec<Span>>) -> Document {
        let mut d = Document::from_words("d", words, clusters);
        for (t, s) in d.tokens.iter_mut().zip(speakers) {
            t.speaker = s.map(str::to_string);
        }
        d
    }

    fn texts(d: &Document) -> Vec<&str> {
        d.tokens.iter().map(|t| t.text.as_str()).collect()
    }

    #[test]
    fn single_speaker() {
        let d = doc(
            &["A-said", "hello"],
            &[Some("X"), Some("X")],
            vec![vec![Span::new(0, 0), Span::new(1, 1)]],
        );
        let out = insert_speakers(&d);
        assert_eq!(texts(&out), vec!["X", ":", "A-said", "hello"]);
        assert_eq!(out.gold_clusters.clusters[0][0], Span::new(2, 2));
        assert!(out.tokens[0].synthetic && out.tokens[1].synthetic && !out.tokens[2].synthetic);
        assert!(validate_document(&out).is_empty());
    }

    #[test]
    fn speaker_change() {
        let d = doc(&["a", "b"], &[Some("X"), Some("Y")], vec![]);
        let out = insert_speakers(&d);
        assert_eq!(texts(&out), vec!["X", ":", "a", "Y", ":", "b"]);
    }

    #[test]
    fn multi_word_name() {
        let d = doc(&["hi"], &[Some("Jane Doe")], vec![]);
        assert_eq!(texts(&insert_speakers(&d)), vec!["Jane", "Doe", ":", "hi"]);
    }

    #[test]
    fn unlabeled_unchanged() {
        let d = doc(&["a", "b"], &[None, None], vec![vec![Span::new(0, 0), Span::new(1, 1)]]);
        assert_eq!(insert_speakers(&d), d);
    }

    #[test]
    fn idempotent_and_reversible() {
        let d = doc(
            &["a", "b", "c", "d"],
            &[Some("X"), Some("Y"), Some("Y"), Some("X")],
            vec![vec![Span::new(0, 0), Span::new(1, 2)]],
        );
        let once = insert_speakers(&d);
        assert_eq!(insert_speakers(&once), once);
        assert_eq!(once.without_synthetic().unwrap(), d);
    }

    #[test]
    fn sentence_lengths_grow() {
        let mut d = doc(&["a", "b", "c"], &[Some("X"), Some("X"), Some("Y")], vec![]);
        d.sentence_lengths = vec![2, 1];
        let out = insert_speakers(&d);
        assert_eq!(out.sentence_lengths, vec![4, 3]);
    }
}
