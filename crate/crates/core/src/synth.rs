//! Small generated corpora for tests, demos and overfitting checks.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Document, Span};
use crate::embedding::synthetic_embed;
use crate::error::Result;
use crate::training::Example;

const FILLER: [&str; 16] = [
    "the", "a", "said", "that", "went", "to", "and", "then", "with", "of", "it", "was", "on", "saw", "later", "home",
];
const NAMES: [&str; 8] = ["Ada", "Boris", "Chen", "Dara", "Emil", "Farah", "Goran", "Hana"];
const PRONOUNS: [&str; 4] = ["she", "he", "they", "them"];

/// Shape of a generated corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthConfig {
    pub documents: usize,
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub min_clusters: usize,
    pub max_clusters: usize,
    /// Mentions per cluster, at least 2.
    pub max_mentions: usize,
    /// 1 or 2; the first mention of each entity takes the full length.
    pub max_mention_len: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            documents: 8,
            min_tokens: 28,
            max_tokens: 40,
            min_clusters: 2,
            max_clusters: 3,
            max_mentions: 3,
            max_mention_len: 2,
        }
    }
}

/// Generates one document with disjoint mentions of at most two tokens.
pub fn synthetic_document<R: Rng + ?Sized>(doc_key: &str, cfg: &SynthConfig, rng: &mut R) -> Document {
    let n = rng.random_range(cfg.min_tokens..=cfg.max_tokens);
    let mut words: Vec<String> = (0..n).map(|_| FILLER.choose(rng).unwrap().to_string()).collect();
    let clusters_wanted = rng.random_range(cfg.min_clusters..=cfg.max_clusters);
    let mut taken = vec![false; n];
    let mut clusters = Vec::new();
    let mut names: Vec<&str> = NAMES.to_vec();
    names.shuffle(rng);
    for name in names.into_iter().take(clusters_wanted) {
        let mentions = rng.random_range(2..=cfg.max_mentions.max(2));
        let mut cluster = Vec::new();
        for m in 0..mentions {
            let longest = cfg.max_mention_len.clamp(1, 2);
            let len = if m == 0 { longest } else { rng.random_range(1..=longest) };
            let free: Vec<usize> = (0..=n - len)
                .filter(|&s| (s.saturating_sub(1)..(s + len + 1).min(n)).all(|i| !taken[i]))
                .collect();
            let Some(&start) = free.choose(rng) else { break };
            let span = Span::new(start, start + len - 1);
            taken[span.start..=span.end].iter_mut().for_each(|t| *t = true);
            if len == 2 {
                words[start] = "Mx".to_string();
                words[start + 1] = name.to_string();
            } else if m == 0 {
                words[start] = name.to_string();
            } else {
                words[start] = PRONOUNS.choose(rng).unwrap().to_string();
            }
            cluster.push(span);
        }
        if cluster.len() >= 2 {
            cluster.sort();
            clusters.push(cluster);
        }
    }
    let mut doc = Document::from_words(doc_key, &words, clusters);
    doc.gold_clusters = doc.gold_clusters.canonical();
    doc
}

pub fn synthetic_corpus(cfg: &SynthConfig, seed: u64) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..cfg.documents)
        .map(|i| synthetic_document(&format!("nw/synth/{i:02}_0"), cfg, &mut rng))
        .collect()
}

/// Pairs documents with deterministic synthetic embeddings of width `d`.
pub fn synthetic_examples(docs: Vec<Document>, d: usize, seed: u64) -> Result<Vec<Example>> {
    docs.into_iter()
        .map(|doc| {
            let emb = synthetic_embed(&doc, d, seed)?;
            Example::new(doc, emb)
        })
        .collect()
}
