//! CoNLL-2012 coreference columns.
//!
//! Only the columns the pipeline needs are interpreted: document id (0),
//! part (1), word index (2), word (3), speaker (9, when the line has at least
//! twelve columns) and the coreference column (last).

use std::collections::HashMap;
use std::fmt::Write as _;

use log::warn;

use super::split_doc_key;
use crate::corpus::{ClusterSet, Document, Genre, Span, Token};
use crate::error::{Error, Result};

struct Builder {
    doc_id: String,
    part: u32,
    tokens: Vec<Token>,
    sentence_lengths: Vec<usize>,
    current_sentence: usize,
    open: HashMap<u64, Vec<usize>>,
    clusters: HashMap<u64, Vec<Span>>,
    cluster_order: Vec<u64>,
}

impl Builder {
    fn new(doc_id: String, part: u32) -> Self {
        Builder {
            doc_id,
            part,
            tokens: Vec::new(),
            sentence_lengths: Vec::new(),
            current_sentence: 0,
            open: HashMap::new(),
            clusters: HashMap::new(),
            cluster_order: Vec::new(),
        }
    }

    fn close_sentence(&mut self) {
        if self.current_sentence > 0 {
            self.sentence_lengths.push(self.current_sentence);
            self.current_sentence = 0;
        }
    }

    fn add_mention(&mut self, id: u64, span: Span) {
        self.clusters
            .entry(id)
            .or_insert_with(|| {
                self.cluster_order.push(id);
                Vec::new()
            })
            .push(span);
    }

    fn finish(mut self, line: usize) -> Result<Document> {
        self.close_sentence();
        if let Some((id, _)) = self.open.iter().find(|(_, starts)| !starts.is_empty()) {
            return Err(Error::parse(line, format!("cluster {id} opened but never closed")));
        }
        let mut clusters = ClusterSet::new(
            self.cluster_order
                .iter()
                .map(|id| self.clusters.remove(id).unwrap_or_default())
                .collect(),
        );
        let key = format!("{}_{}", self.doc_id, self.part);
        let dropped = clusters.drop_singletons();
        if dropped > 0 {
            warn!("{key}: dropped {dropped} singleton cluster(s)");
        }
        Ok(Document {
            doc_key: key,
            genre: Genre::from_doc_id(&self.doc_id),
            tokens: self.tokens,
            gold_clusters: clusters,
            sentence_lengths: self.sentence_lengths,
        })
    }
}

/// Parses one coreference cell, updating open/closed mentions for token `pos`.
fn apply_coref_tags(b: &mut Builder, cell: &str, pos: usize, line: usize) -> Result<()> {
    if cell == "-" || cell == "_" {
        return Ok(());
    }
    for part in cell.split('|') {
        let opens = part.starts_with('(');
        let closes = part.ends_with(')');
        let digits = part.trim_start_matches('(').trim_end_matches(')');
        let id: u64 = digits
            .parse()
            .map_err(|_| Error::parse(line, format!("malformed coreference tag `{part}`")))?;
        match (opens, closes) {
            (true, true) => b.add_mention(id, Span::new(pos, pos)),
            (true, false) => b.open.entry(id).or_default().push(pos),
            (false, true) => {
                let start = b
                    .open
                    .get_mut(&id)
                    .and_then(Vec::pop)
                    .ok_or_else(|| Error::parse(line, format!("cluster {id} closed but not open")))?;
                b.add_mention(id, Span::new(start, pos));
            }
            (false, false) => return Err(Error::parse(line, format!("malformed coreference tag `{part}`"))),
        }
    }
    Ok(())
}

pub fn parse_conll(text: &str) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    let mut current: Option<Builder> = None;

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end();
        if let Some(rest) = line.strip_prefix("#begin document") {
            if current.is_some() {
                return Err(Error::parse(line_no, "nested #begin document"));
            }
            let (doc_id, part) = parse_begin(rest.trim(), line_no)?;
            current = Some(Builder::new(doc_id, part));
            continue;
        }
        if line.starts_with("#end document") {
            let builder = current
                .take()
                .ok_or_else(|| Error::parse(line_no, "#end document without #begin"))?;
            docs.push(builder.finish(line_no)?);
            continue;
        }
        if line.trim().is_empty() {
            if let Some(b) = current.as_mut() {
                b.close_sentence();
            }
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let b = current
            .as_mut()
            .ok_or_else(|| Error::parse(line_no, "token line outside #begin/#end document"))?;
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() < 5 {
            return Err(Error::parse(
                line_no,
                format!("expected at least 5 columns, found {}", cols.len()),
            ));
        }
        let speaker = if cols.len() >= 12 { cols[9] } else { "-" };
        let pos = b.tokens.len();
        b.tokens
            .push(Token::new(pos, cols[3], (speaker != "-").then(|| speaker.to_string())));
        b.current_sentence += 1;
        let cell = cols[cols.len() - 1];
        apply_coref_tags(b, cell, pos, line_no)?;
    }
    if current.is_some() {
        return Err(Error::parse(text.lines().count(), "missing #end document"));
    }
    Ok(docs)
}

fn parse_begin(rest: &str, line: usize) -> Result<(String, u32)> {
    // "(bc/cctv/00/cctv_0000); part 000"
    let (id, part) = rest
        .split_once(';')
        .ok_or_else(|| Error::parse(line, "malformed #begin document header"))?;
    let id = id.trim().trim_start_matches('(').trim_end_matches(')');
    let part = part
        .trim()
        .strip_prefix("part")
        .map(str::trim)
        .and_then(|p| p.parse().ok())
        .ok_or_else(|| Error::parse(line, "malformed part number"))?;
    Ok((id.to_string(), part))
}

/// Coreference cell contents for every token of a document.
fn coref_cells(n: usize, clusters: &ClusterSet) -> Vec<String> {
    let mut tags: Vec<Vec<String>> = vec![Vec::new(); n];
    // Opening tags of longer spans come first so nesting reads outside-in;
    // closing tags of shorter spans come first.
    let mut mentions: Vec<(usize, Span)> = clusters
        .clusters
        .iter()
        .enumerate()
        .flat_map(|(c, spans)| spans.iter().map(move |s| (c, *s)))
        .collect();
    mentions.sort_by_key(|(c, s)| (s.start, std::cmp::Reverse(s.end), *c));
    for (c, s) in &mentions {
        if s.start == s.end {
            continue;
        }
        tags[s.start].push(format!("({c}"));
    }
    for (c, s) in &mentions {
        if s.start == s.end {
            tags[s.start].push(format!("({c})"));
        }
    }
    mentions.sort_by_key(|(c, s)| (s.end, std::cmp::Reverse(s.start), *c));
    for (c, s) in &mentions {
        if s.start != s.end {
            tags[s.end].push(format!("{c})"));
        }
    }
    tags.into_iter()
        .map(|t| if t.is_empty() { "-".to_string() } else { t.join("|") })
        .collect()
}

pub fn write_conll(docs: &[Document]) -> String {
    let mut out = String::new();
    for doc in docs {
        let (doc_id, part) = split_doc_key(&doc.doc_key);
        let _ = writeln!(out, "#begin document ({doc_id}); part {part:03}");
        let cells = coref_cells(doc.len(), &doc.gold_clusters);
        let lengths = if doc.sentence_lengths.is_empty() {
            vec![doc.len()]
        } else {
            doc.sentence_lengths.clone()
        };
        let mut pos = 0;
        for len in lengths {
            for w in 0..len {
                let tok = &doc.tokens[pos];
                // The columns are whitespace-separated, so multi-word speakers are joined with `_`.
                let speaker = tok.speaker.as_deref().map_or_else(
                    || "-".to_string(),
                    |s| s.split_whitespace().collect::<Vec<_>>().join("_"),
                );
                let _ = writeln!(
                    out,
                    "{doc_id}\t{part}\t{w}\t{}\t-\t-\t-\t-\t-\t{speaker}\t*\t{}",
                    tok.text, cells[pos]
                );
                pos += 1;
            }
            out.push('\n');
        }
        out.push_str("#end document\n");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc_text(tags: &[&str]) -> String {
        let mut s = String::from("#begin document (nw/test); part 000\n");
        for (i, t) in tags.iter().enumerate() {
            s.push_str(&format!("nw/test 0 {i} w{i} - - - - - spk * {t}\n"));
        }
        s.push_str("\n#end document\n");
        s
    }

    #[test]
    fn singleton_span_dropped() {
        let docs = parse_conll(&doc_text(&["(0", "0)", "-"])).unwrap();
        assert_eq!(docs.len(), 1);
        assert!(docs[0].gold_clusters.is_empty());
        assert_eq!(docs[0].len(), 3);
        assert_eq!(docs[0].genre.name(), "nw");
        assert_eq!(docs[0].tokens[0].speaker.as_deref(), Some("spk"));
    }

    #[test]
    fn single_token_mentions() {
        let docs = parse_conll(&doc_text(&["(0)", "-", "(0)"])).unwrap();
        assert_eq!(
            docs[0].gold_clusters.clusters,
            vec![vec![Span::new(0, 0), Span::new(2, 2)]]
        );
    }

    #[test]
    fn unclosed_is_error() {
        assert!(matches!(
            parse_conll(&doc_text(&["(0", "-", "-"])),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn close_without_open_reports_line() {
        match parse_conll(&doc_text(&["-", "0)", "-"])) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_sentinel_is_error() {
        let text = "#begin document (a); part 000\na 0 0 w - - - - - - * -\n";
        assert!(parse_conll(text).is_err());
        assert!(parse_conll("a 0 0 w - - - - - - * -\n").is_err());
    }

    #[test]
    fn nested_and_pipe_tags() {
        let docs = parse_conll(&doc_text(&["(0|(1", "(1)", "0)|1)"])).unwrap();
        // cluster 0 is the singleton (0,2) and is dropped
        let canon = docs[0].gold_clusters.canonical();
        assert_eq!(canon.clusters, vec![vec![Span::new(0, 2), Span::new(1, 1)]]);
    }

    #[test]
    fn writes_expected_tags() {
        let clusters = ClusterSet::new(vec![vec![Span::new(0, 0), Span::new(2, 2)]]);
        assert_eq!(coref_cells(3, &clusters), vec!["(0)", "-", "(0)"]);
        assert_eq!(coref_cells(2, &ClusterSet::default()), vec!["-", "-"]);
    }

    #[test]
    fn multi_word_speaker_stays_in_one_column() {
        let mut doc = Document::from_words("nw/x_0", &["a", "b"], vec![]);
        doc.tokens[0].speaker = Some("Bo  Li".into());
        let back = parse_conll(&write_conll(&[doc])).unwrap();
        assert_eq!(back[0].tokens[0].speaker.as_deref(), Some("Bo_Li"));
    }

    #[test]
    fn sentences_round_trip() {
        let text = "#begin document (bc/x); part 002\n\
                    bc/x 2 0 A - - - - - s1 * (0)\n\
                    bc/x 2 1 B - - - - - s1 * -\n\n\
                    bc/x 2 0 C - - - - - s2 * (0)\n\n\
                    #end document\n";
        let docs = parse_conll(text).unwrap();
        assert_eq!(docs[0].doc_key, "bc/x_2");
        assert_eq!(docs[0].sentence_lengths, vec![2, 1]);
        let again = parse_conll(&write_conll(&docs)).unwrap();
        assert_eq!(again, docs);
    }
}
