//! One JSON object per line:
//! `{"doc_key", "tokens", "speakers", "genre", "clusters"}` with inclusive
//! `[start, end]` spans.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::corpus::{validate_document, ClusterSet, Document, Genre, Severity, Span, Token};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsonlinesDoc {
    pub doc_key: String,
    pub tokens: Vec<String>,
    #[serde(default)]
    pub speakers: Option<Vec<String>>,
    #[serde(default)]
    pub genre: Option<String>,
    #[serde(default)]
    pub clusters: Vec<Vec<[usize; 2]>>,
}

impl JsonlinesDoc {
    pub fn from_document(doc: &Document) -> Self {
        JsonlinesDoc {
            doc_key: doc.doc_key.clone(),
            tokens: doc.tokens.iter().map(|t| t.text.clone()).collect(),
            speakers: Some(
                doc.tokens
                    .iter()
                    .map(|t| t.speaker.clone().unwrap_or_else(|| "-".to_string()))
                    .collect(),
            ),
            genre: Some(doc.genre.name().to_string()),
            clusters: doc
                .gold_clusters
                .clusters
                .iter()
                .map(|c| c.iter().map(|s| [s.start, s.end]).collect())
                .collect(),
        }
    }

    /// Converts to a [`Document`]; `line` is only used for error messages.
    pub fn into_document(self, line: usize) -> Result<Document> {
        let n = self.tokens.len();
        if n == 0 {
            return Err(Error::schema(line, "tokens", "document has no tokens"));
        }
        if let Some(speakers) = &self.speakers {
            if speakers.len() != n {
                return Err(Error::schema(
                    line,
                    "speakers",
                    format!("{} speakers for {n} tokens", speakers.len()),
                ));
            }
        }
        let mut clusters = Vec::with_capacity(self.clusters.len());
        for (c, cluster) in self.clusters.iter().enumerate() {
            let mut spans = Vec::with_capacity(cluster.len());
            for &[start, end] in cluster {
                let span = Span::new(start, end);
                if !span.is_valid(n) {
                    return Err(Error::schema(
                        line,
                        "clusters",
                        format!("span [{start}, {end}] in cluster {c} invalid for {n} tokens"),
                    ));
                }
                spans.push(span);
            }
            clusters.push(spans);
        }
        let mut gold = ClusterSet::new(clusters);
        let dropped = gold.drop_singletons();
        if dropped > 0 {
            warn!("{}: dropped {dropped} singleton cluster(s)", self.doc_key);
        }
        let speakers = self.speakers.unwrap_or_default();
        let tokens = self
            .tokens
            .into_iter()
            .enumerate()
            .map(|(i, text)| {
                let speaker = speakers.get(i).filter(|s| s.as_str() != "-" && !s.is_empty()).cloned();
                Token::new(i, text, speaker)
            })
            .collect();
        let doc = Document {
            doc_key: self.doc_key,
            tokens,
            genre: self.genre.as_deref().map(Genre::from_name).unwrap_or(Genre::OTHER),
            gold_clusters: gold,
            sentence_lengths: Vec::new(),
        };
        if let Some(v) = validate_document(&doc)
            .into_iter()
            .find(|v| v.severity == Severity::Error)
        {
            return Err(Error::schema(line, "clusters", v.message));
        }
        Ok(doc)
    }
}

pub fn parse_jsonlines(text: &str) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let parsed: JsonlinesDoc = serde_json::from_str(raw).map_err(|e| {
            let field = e.to_string().split('`').nth(1).unwrap_or("<document>").to_string();
            Error::schema(line, &field, e.to_string())
        })?;
        docs.push(parsed.into_document(line)?);
    }
    Ok(docs)
}

pub fn write_jsonlines(docs: &[Document]) -> String {
    let mut out = String::new();
    for doc in docs {
        let line = serde_json::to_string(&JsonlinesDoc::from_document(doc)).expect("jsonlines document serializes");
        out.push_str(&line);
        out.push('\n');
    }
    out
}
