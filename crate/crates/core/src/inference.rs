//! Mention pruning, antecedent distributions and greedy decoding.

use std::cmp::Ordering;
use std::collections::HashMap;

use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};

use crate::corpus::{ClusterSet, Span};
use crate::counter::FloatBuf;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::s2e::{self, AntecedentScores, S2eParams};

pub const DEFAULT_MAX_SPAN_LEN: usize = 30;
pub const DEFAULT_TOP_LAMBDA: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruneConfig {
    /// Longest span considered, in tokens.
    pub max_span_len: usize,
    /// Retain `max(1, floor(top_lambda · n))` candidates.
    pub top_lambda: f64,
}

impl Default for PruneConfig {
    fn default() -> Self {
        PruneConfig {
            max_span_len: DEFAULT_MAX_SPAN_LEN,
            top_lambda: DEFAULT_TOP_LAMBDA,
        }
    }
}

impl PruneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_span_len == 0 {
            return Err(Error::Config("max_span_len must be at least 1".into()));
        }
        if !(self.top_lambda > 0.0 && self.top_lambda <= 1.0) {
            return Err(Error::Config(format!("top_lambda {} outside (0, 1]", self.top_lambda)));
        }
        Ok(())
    }
}

/// `max(1, floor(lambda · n))`
pub fn retained_count(lambda: f64, n: usize) -> usize {
    ((lambda * n as f64).floor() as usize).max(1)
}

/// Retained mention candidates in canonical order with their mention scores.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub spans: Vec<Span>,
    pub mention_scores: FloatBuf,
}

impl CandidateSet {
    pub fn k(&self) -> usize {
        self.spans.len()
    }

    pub fn position(&self, span: Span) -> Option<usize> {
        self.spans.binary_search(&span).ok()
    }
}

/// Score-descending order, earlier canonical span first on ties.
pub(crate) fn rank_desc(scores: &[f64], a: usize, b: usize, spans: &[Span]) -> Ordering {
    scores[b].total_cmp(&scores[a]).then_with(|| spans[a].cmp(&spans[b]))
}

/// Keeps the top `max(1, floor(λ·n))` spans by mention score.
///
/// Spans covering a token flagged in `synthetic` are never retained. No
/// overlap filtering is applied.
pub fn prune_mentions(
    spans: &[Span],
    scores: &[f64],
    synthetic: &[bool],
    lambda: f64,
    n: usize,
) -> Result<CandidateSet> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::Precondition(format!("lambda {lambda} outside (0, 1]")));
    }
    let mut order: Vec<usize> = (0..spans.len())
        .filter(|&i| !synthetic[spans[i].start..=spans[i].end].iter().any(|&s| s))
        .collect();
    if order.is_empty() {
        return Err(Error::EmptyCandidateSet);
    }
    let k = retained_count(lambda, n).min(order.len());
    order.sort_by(|&a, &b| rank_desc(scores, a, b, spans));
    order.truncate(k);
    order.sort_by_key(|&i| spans[i]);
    Ok(CandidateSet {
        spans: order.iter().map(|&i| spans[i]).collect(),
        mention_scores: order.iter().map(|&i| scores[i]).collect(),
    })
}

/// Retained spans strictly before `q` in canonical order.
pub fn candidate_antecedents(q: Span, candidates: &CandidateSet) -> Result<&[Span]> {
    let pos = candidates
        .position(q)
        .ok_or_else(|| Error::Precondition(format!("query {q} is not a retained candidate")))?;
    Ok(&candidates.spans[..pos])
}

/// Distribution over the null antecedent and the preceding candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct AntecedentDistribution {
    pub query: Span,
    pub candidates: Vec<Span>,
    /// Index 0 is the null antecedent, index `i + 1` is `candidates[i]`.
    pub probabilities: Vec<f64>,
}

impl AntecedentDistribution {
    pub fn null_probability(&self) -> f64 {
        self.probabilities[0]
    }

    pub fn probability(&self, i: usize) -> f64 {
        self.probabilities[i + 1]
    }
}

/// Softmax over `{ε} ∪ candidates` with the null score pinned at 0.
pub fn antecedent_distribution(q: Span, candidates: &[Span], scores: &[f64]) -> AntecedentDistribution {
    debug_assert_eq!(candidates.len(), scores.len());
    AntecedentDistribution {
        query: q,
        candidates: candidates.to_vec(),
        probabilities: softmax_with_null(scores),
    }
}

pub(crate) fn softmax_with_null(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(0.0f64, f64::max);
    let mut probs = Vec::with_capacity(scores.len() + 1);
    probs.push((-max).exp());
    probs.extend(scores.iter().map(|s| (s - max).exp()));
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    probs
}

/// Index of the best-scoring antecedent; `None` when the null antecedent
/// (score 0) is at least as good as every candidate.
pub fn best_antecedent(scores: &[f64]) -> Option<usize> {
    let mut best = None;
    let mut best_score = 0.0;
    for (i, &s) in scores.iter().enumerate() {
        if s > best_score {
            best = Some(i);
            best_score = s;
        }
    }
    best
}

/// Groups queries with their chosen antecedents into clusters.
///
/// Links to the null antecedent are ignored; only clusters of two or more
/// mentions are emitted, each sorted, ordered by smallest member.
pub fn decode_clusters(links: &[(Span, Option<Span>)]) -> ClusterSet {
    let mut ids: HashMap<Span, usize> = HashMap::new();
    let mut spans = Vec::new();
    let mut id_of = |s: Span| {
        *ids.entry(s).or_insert_with(|| {
            spans.push(s);
            spans.len() - 1
        })
    };
    let edges: Vec<(usize, usize)> = links
        .iter()
        .filter_map(|&(q, a)| a.map(|a| (id_of(q), id_of(a))))
        .collect();

    let mut uf = UnionFind::<usize>::new(spans.len());
    for (a, b) in edges {
        uf.union(a, b);
    }
    let mut groups: HashMap<usize, Vec<Span>> = HashMap::new();
    for (i, s) in spans.iter().enumerate() {
        groups.entry(uf.find(i)).or_default().push(*s);
    }
    let mut clusters: Vec<Vec<Span>> = groups
        .into_values()
        .filter(|g| g.len() >= 2)
        .map(|mut g| {
            g.sort();
            g
        })
        .collect();
    clusters.sort();
    ClusterSet::new(clusters)
}

/// Pairwise scores `f(c, q)` for all retained candidates of one document.
#[derive(Debug, Clone)]
pub struct S2eDocumentScores {
    pub candidates: CandidateSet,
    pub antecedents: AntecedentScores,
}

impl S2eDocumentScores {
    pub fn k(&self) -> usize {
        self.candidates.k()
    }

    /// `f(candidates[antecedent], candidates[query])`, `antecedent < query`.
    pub fn pair_score(&self, query: usize, antecedent: usize) -> f64 {
        let fm = &self.candidates.mention_scores;
        fm[antecedent] + fm[query] + self.antecedents.get(query, antecedent)
    }

    pub fn query_scores(&self, query: usize) -> Vec<f64> {
        (0..query).map(|i| self.pair_score(query, i)).collect()
    }

    pub fn distributions(&self) -> Vec<AntecedentDistribution> {
        (0..self.k())
            .map(|j| {
                antecedent_distribution(
                    self.candidates.spans[j],
                    &self.candidates.spans[..j],
                    &self.query_scores(j),
                )
            })
            .collect()
    }

    pub fn links(&self) -> Vec<(Span, Option<Span>)> {
        (0..self.k())
            .map(|j| {
                let best = best_antecedent(&self.query_scores(j));
                (self.candidates.spans[j], best.map(|i| self.candidates.spans[i]))
            })
            .collect()
    }

    pub fn decode(&self) -> ClusterSet {
        decode_clusters(&self.links())
    }
}

/// Scores one document with the s2e head.
///
/// Mention-side representations are released before the antecedent side is
/// projected, and the full antecedent representations are released once the
/// candidate rows are gathered.
pub fn score_document(
    x: &Matrix,
    synthetic: &[bool],
    params: &S2eParams,
    cfg: &PruneConfig,
) -> Result<S2eDocumentScores> {
    cfg.validate()?;
    let n = x.rows();
    if synthetic.len() != n {
        return Err(Error::Dimension(format!(
            "{} embedding rows for {} tokens",
            n,
            synthetic.len()
        )));
    }
    let candidates = {
        let start = s2e::project(x, &params.w_mention_start)?;
        let end = s2e::project(x, &params.w_mention_end)?;
        let table = s2e::mention_scores_all(&start, &end, cfg.max_span_len, params);
        prune_mentions(&table.spans, &table.scores, synthetic, cfg.top_lambda, n)?
    };
    let rows = {
        let start = s2e::project(x, &params.w_antecedent_start)?;
        let end = s2e::project(x, &params.w_antecedent_end)?;
        s2e::gather_candidate_rows(&start, &end, &candidates.spans)
    };
    let antecedents = s2e::antecedent_scores_gathered(&rows, params);
    Ok(S2eDocumentScores {
        candidates,
        antecedents,
    })
}
