//! Reading and writing annotated documents.

pub mod conll;
pub mod jsonlines;
pub mod speakers;

pub use conll::{parse_conll, write_conll};
pub use jsonlines::{parse_jsonlines, write_jsonlines, JsonlinesDoc};
pub use speakers::insert_speakers;

use crate::corpus::{ClusterSet, Document};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Conll,
    Jsonlines,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "conll" => Ok(Format::Conll),
            "jsonlines" | "jsonl" => Ok(Format::Jsonlines),
            other => Err(format!("unknown format `{other}`")),
        }
    }
}

/// Renders `doc` with `predicted` as its clusters.
///
/// Predictions over a speaker-inserted document are mapped back to the
/// original token positions first; the emitted text never contains inserted
/// speaker tokens.
pub fn write_predictions(doc: &Document, predicted: &ClusterSet, format: Format) -> Result<String> {
    let original = doc.without_synthetic()?;
    let clusters = doc.to_original_clusters(predicted)?;
    let out = Document {
        gold_clusters: clusters,
        ..original
    };
    Ok(match format {
        Format::Conll => write_conll(std::slice::from_ref(&out)),
        Format::Jsonlines => write_jsonlines(std::slice::from_ref(&out)),
    })
}

/// Doc keys are `<doc id>_<part>`; keys without a numeric suffix are part 0.
pub(crate) fn split_doc_key(key: &str) -> (&str, u32) {
    match key.rsplit_once('_') {
        Some((id, part)) if !id.is_empty() => match part.parse() {
            Ok(p) => (id, p),
            Err(_) => (key, 0),
        },
        _ => (key, 0),
    }
}
