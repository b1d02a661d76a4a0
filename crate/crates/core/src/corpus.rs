//! Documents, spans and clusters.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An inclusive token span `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub const fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    /// Number of tokens covered. Only meaningful for `start <= end`.
    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_valid(&self, n: usize) -> bool {
        self.start <= self.end && self.end < n
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn intersects(&self, other: &Span) -> bool {
        self.start <= other.end && other.start <= self.end
    }

    /// Intersecting without either span containing the other.
    pub fn crosses(&self, other: &Span) -> bool {
        self.intersects(other) && !self.contains(other) && !other.contains(self)
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub index: usize,
    pub text: String,
    pub speaker: Option<String>,
    /// Inserted speaker-metadata token, not part of the source text.
    pub synthetic: bool,
}

impl Token {
    pub fn new(index: usize, text: impl Into<String>, speaker: Option<String>) -> Self {
        Token {
            index,
            text: text.into(),
            speaker,
            synthetic: false,
        }
    }
}

/// OntoNotes genre, derived from the first two characters of a document id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Genre(pub u8);

impl Genre {
    pub const NAMES: [&'static str; 7] = ["bc", "bn", "mz", "nw", "pt", "tb", "wb"];
    pub const OTHER: Genre = Genre(7);
    pub const COUNT: usize = 8;

    pub fn from_name(name: &str) -> Genre {
        Genre::NAMES
            .iter()
            .position(|g| *g == name)
            .map(|i| Genre(i as u8))
            .unwrap_or(Genre::OTHER)
    }

    pub fn from_doc_id(doc_id: &str) -> Genre {
        Genre::from_name(doc_id.get(..2).unwrap_or(""))
    }

    pub fn name(self) -> &'static str {
        Genre::NAMES.get(self.0 as usize).copied().unwrap_or("other")
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// A partition of mentions into entity clusters.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ClusterSet {
    pub clusters: Vec<Vec<Span>>,
}

impl ClusterSet {
    pub fn new(clusters: Vec<Vec<Span>>) -> Self {
        ClusterSet { clusters }
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn mentions(&self) -> impl Iterator<Item = Span> + '_ {
        self.clusters.iter().flatten().copied()
    }

    /// Mention → cluster index.
    pub fn mention_map(&self) -> HashMap<Span, usize> {
        self.clusters
            .iter()
            .enumerate()
            .flat_map(|(c, spans)| spans.iter().map(move |s| (*s, c)))
            .collect()
    }

    /// Order-independent form: each cluster sorted, clusters sorted by first
    /// member. Two cluster sets describe the same partition iff their
    /// canonical forms are equal.
    pub fn canonical(&self) -> ClusterSet {
        let mut clusters: Vec<Vec<Span>> = self
            .clusters
            .iter()
            .map(|c| {
                let set: BTreeSet<Span> = c.iter().copied().collect();
                set.into_iter().collect()
            })
            .filter(|c: &Vec<Span>| !c.is_empty())
            .collect();
        clusters.sort();
        ClusterSet { clusters }
    }

    /// Drops clusters with fewer than two mentions, returning how many were dropped.
    pub fn drop_singletons(&mut self) -> usize {
        let before = self.clusters.len();
        self.clusters.retain(|c| c.len() >= 2);
        before - self.clusters.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub doc_key: String,
    pub tokens: Vec<Token>,
    pub genre: Genre,
    pub gold_clusters: ClusterSet,
    /// Sentence lengths in tokens; empty means one sentence covering the document.
    pub sentence_lengths: Vec<usize>,
}

impl Document {
    /// Builds a document from plain words, all tokens unlabeled for speaker.
    pub fn from_words<S: AsRef<str>>(doc_key: &str, words: &[S], clusters: Vec<Vec<Span>>) -> Self {
        let tokens = words
            .iter()
            .enumerate()
            .map(|(i, w)| Token::new(i, w.as_ref(), None))
            .collect();
        Document {
            doc_key: doc_key.to_string(),
            tokens,
            genre: Genre::OTHER,
            gold_clusters: ClusterSet::new(clusters),
            sentence_lengths: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn synthetic_mask(&self) -> Vec<bool> {
        self.tokens.iter().map(|t| t.synthetic).collect()
    }

    pub fn span_text(&self, span: Span) -> Vec<&str> {
        self.tokens[span.start..=span.end]
            .iter()
            .map(|t| t.text.as_str())
            .collect()
    }

    /// Maps each position to the index it had before speaker insertion,
    /// `None` for synthetic tokens.
    pub fn original_positions(&self) -> Vec<Option<usize>> {
        let mut next = 0;
        self.tokens
            .iter()
            .map(|t| {
                if t.synthetic {
                    None
                } else {
                    next += 1;
                    Some(next - 1)
                }
            })
            .collect()
    }

    /// Maps clusters over this document's positions back to positions in the
    /// document without synthetic tokens.
    pub fn to_original_clusters(&self, clusters: &ClusterSet) -> Result<ClusterSet> {
        let map = self.original_positions();
        let mut out = Vec::with_capacity(clusters.len());
        for cluster in &clusters.clusters {
            let mut mapped = Vec::with_capacity(cluster.len());
            for span in cluster {
                if !span.is_valid(self.len()) {
                    return Err(Error::OutOfDomain(format!("span {span} for {} tokens", self.len())));
                }
                if self.tokens[span.start..=span.end].iter().any(|t| t.synthetic) {
                    return Err(Error::Internal(format!(
                        "predicted span {span} covers an inserted speaker token"
                    )));
                }
                let (Some(s), Some(e)) = (map[span.start], map[span.end]) else {
                    unreachable!("non-synthetic endpoints always map");
                };
                mapped.push(Span::new(s, e));
            }
            out.push(mapped);
        }
        Ok(ClusterSet::new(out))
    }

    /// Copy of this document with synthetic tokens removed and gold clusters
    /// mapped to the remaining positions.
    pub fn without_synthetic(&self) -> Result<Document> {
        let gold = self.to_original_clusters(&self.gold_clusters)?;
        let mut sentence_lengths = Vec::with_capacity(self.sentence_lengths.len());
        let mut pos = 0;
        for &len in &self.sentence_lengths {
            let kept = self.tokens[pos..pos + len].iter().filter(|t| !t.synthetic).count();
            sentence_lengths.push(kept);
            pos += len;
        }
        let tokens = self
            .tokens
            .iter()
            .filter(|t| !t.synthetic)
            .enumerate()
            .map(|(i, t)| Token { index: i, ..t.clone() })
            .collect();
        Ok(Document {
            doc_key: self.doc_key.clone(),
            tokens,
            genre: self.genre,
            gold_clusters: gold,
            sentence_lengths,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub severity: Severity,
    pub message: String,
}

/// Checks every document invariant; an empty report means the document is well formed.
pub fn validate_document(doc: &Document) -> Vec<Violation> {
    let mut report = Vec::new();
    let n = doc.len();
    let mut error = |message: String| {
        report.push(Violation {
            severity: Severity::Error,
            message,
        })
    };

    for (i, t) in doc.tokens.iter().enumerate() {
        if t.index != i {
            error(format!("token at position {i} has index {}", t.index));
        }
    }
    if !doc.sentence_lengths.is_empty() && doc.sentence_lengths.iter().sum::<usize>() != n {
        error("sentence lengths do not sum to the token count".to_string());
    }

    let mut owner: HashMap<Span, usize> = HashMap::new();
    for (c, cluster) in doc.gold_clusters.clusters.iter().enumerate() {
        if cluster.len() < 2 {
            error(format!("cluster {c} has fewer than two mentions"));
        }
        for span in cluster {
            if span.start > span.end {
                error(format!("span {span}: start > end"));
                continue;
            }
            if span.end >= n {
                error(format!("span {span}: end out of range for {n} tokens"));
                continue;
            }
            if doc.tokens[span.start..=span.end].iter().any(|t| t.synthetic) {
                error(format!("span {span} covers a synthetic token"));
            }
            match owner.insert(*span, c) {
                Some(prev) if prev != c => {
                    error(format!("span {span} in clusters {prev} and {c}: overlapping clusters"))
                }
                Some(_) => error(format!("span {span} repeated in cluster {c}")),
                None => {}
            }
        }
    }
    report
}

/// All spans of length at most `max_len`, ordered by `(start, end)`.
pub fn enumerate_spans(n: usize, max_len: usize) -> Vec<Span> {
    let mut spans = Vec::with_capacity(span_count(n, max_len));
    for start in 0..n {
        let last = (start + max_len).min(n);
        spans.extend((start..last).map(|end| Span::new(start, end)));
    }
    spans
}

/// Number of spans `enumerate_spans(n, max_len)` yields.
pub fn span_count(n: usize, max_len: usize) -> usize {
    (0..n).map(|i| max_len.min(n - i)).sum()
}

/// Position of `span` within `enumerate_spans(n, max_len)`.
pub fn span_order_index(span: Span, n: usize, max_len: usize) -> Result<usize> {
    if !span.is_valid(n) || span.len() > max_len {
        return Err(Error::OutOfDomain(format!(
            "span {span} not enumerable for n={n}, max length {max_len}"
        )));
    }
    // Starts before span.start contribute min(max_len, n - i) spans each.
    let s = span.start;
    let full = s.min((n + 1).saturating_sub(max_len));
    let mut idx = full * max_len;
    idx += (full..s).map(|i| n - i).sum::<usize>();
    Ok(idx + (span.end - span.start))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_force(n: usize, max_len: usize) -> Vec<Span> {
        let mut out = Vec::new();
        for s in 0..n {
            for e in 0..n {
                if s <= e && e - s < max_len {
                    out.push(Span::new(s, e));
                }
            }
        }
        out
    }

    #[test]
    fn enumerate_examples() {
        assert_eq!(enumerate_spans(1, 1), vec![Span::new(0, 0)]);
        assert_eq!(
            enumerate_spans(3, 2),
            vec![
                Span::new(0, 0),
                Span::new(0, 1),
                Span::new(1, 1),
                Span::new(1, 2),
                Span::new(2, 2)
            ]
        );
        assert_eq!(
            enumerate_spans(2, 5),
            vec![Span::new(0, 0), Span::new(0, 1), Span::new(1, 1)]
        );
    }

    #[test]
    fn enumerate_matches_brute_force_and_closed_form() {
        for n in 1..=50 {
            for l in 1..=10 {
                let spans = enumerate_spans(n, l);
                assert_eq!(spans, brute_force(n, l), "n={n} l={l}");
                assert_eq!(spans.len(), span_count(n, l));
                if n >= l {
                    assert_eq!(spans.len(), n * l - l * (l - 1) / 2);
                }
                assert!(spans.windows(2).all(|w| w[0] < w[1]));
            }
        }
    }

    #[test]
    fn order_index_examples() {
        assert_eq!(span_order_index(Span::new(0, 0), 3, 2).unwrap(), 0);
        assert_eq!(span_order_index(Span::new(1, 2), 3, 2).unwrap(), 3);
        assert_eq!(span_order_index(Span::new(2, 2), 3, 2).unwrap(), 4);
        assert!(span_order_index(Span::new(0, 2), 3, 2).is_err());
        assert!(span_order_index(Span::new(2, 3), 3, 2).is_err());
    }

    #[test]
    fn order_index_inverts_enumeration() {
        for n in 1..=30 {
            for l in 1..=8 {
                for (pos, span) in enumerate_spans(n, l).into_iter().enumerate() {
                    assert_eq!(span_order_index(span, n, l).unwrap(), pos);
                }
            }
        }
    }

    #[test]
    fn validation_reports() {
        let words = ["a", "b", "c", "d", "e", "f"];
        let ok = Document::from_words("d", &words, vec![vec![Span::new(0, 0), Span::new(2, 3)]]);
        assert!(validate_document(&ok).is_empty());

        let bad = Document::from_words("d", &words, vec![vec![Span::new(5, 3), Span::new(0, 0)]]);
        let report = validate_document(&bad);
        assert!(report.iter().any(|v| v.message.contains("start > end")));

        let overlap = Document::from_words(
            "d",
            &words,
            vec![
                vec![Span::new(0, 0), Span::new(1, 1)],
                vec![Span::new(1, 1), Span::new(4, 4)],
            ],
        );
        let report = validate_document(&overlap);
        assert!(report.iter().any(|v| v.message.contains("overlapping clusters")));
    }

    #[test]
    fn crossing_vs_nesting() {
        let a = Span::new(0, 2);
        assert!(a.crosses(&Span::new(1, 3)));
        assert!(!a.crosses(&Span::new(1, 1)));
        assert!(!a.crosses(&Span::new(3, 4)));
    }

    #[test]
    fn genre_from_doc_id() {
        assert_eq!(Genre::from_doc_id("nw/wsj/00/wsj_0001").name(), "nw");
        assert_eq!(Genre::from_doc_id("zz/x"), Genre::OTHER);
        assert_eq!(Genre::from_doc_id(""), Genre::OTHER);
    }

    proptest! {
        #[test]
        fn order_index_is_bijective(n in 1usize..40, l in 1usize..12) {
            let spans = enumerate_spans(n, l);
            let mut seen = vec![false; spans.len()];
            for span in &spans {
                let i = span_order_index(*span, n, l).unwrap();
                prop_assert!(!seen[i]);
                seen[i] = true;
            }
        }
    }
}
