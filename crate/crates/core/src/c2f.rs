//! Coarse-to-fine baseline head.
//!
//! Spans are represented explicitly as `[x_start; x_end; pooled; φ(len)]`
//! and pairs as `[v_c; v_q; v_c ∘ v_q; φ(c, q)]`, each scored by a one-layer
//! ReLU network. Candidate antecedents are pre-filtered with a bilinear
//! coarse score. This head exists for comparison; the pair buffer it builds
//! is what the s2e head avoids.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::corpus::{enumerate_spans, ClusterSet, Genre, Span};
use crate::counter::FloatBuf;
use crate::error::{Error, Result};
use crate::inference::{best_antecedent, decode_clusters, rank_desc, retained_count, CandidateSet, PruneConfig};
use crate::matrix::{dot, Matrix};
use crate::params::{glorot_bound, ParamSet};

pub const MAGIC: [u8; 4] = *b"C2FP";
pub const NUM_BUCKETS: usize = 9;

/// Buckets `{0,1}, {2}, {3}, {4}, [5,7], [8,15], [16,31], [32,63], [64,∞)`.
pub fn distance_bucket(gap: usize) -> usize {
    match gap {
        0..=4 => gap.saturating_sub(1),
        5..=63 => (usize::BITS - gap.leading_zeros()) as usize + 1,
        _ => 8,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct C2fConfig {
    /// Width of the length, distance, speaker and genre feature embeddings.
    pub feature_dim: usize,
    /// Hidden width of both scoring networks; `None` means the input width.
    pub hidden_dim: Option<usize>,
    pub num_genres: usize,
    /// Antecedents kept per query after coarse pruning.
    pub max_antecedents: usize,
}

impl Default for C2fConfig {
    fn default() -> Self {
        C2fConfig {
            feature_dim: 4,
            hidden_dim: None,
            num_genres: Genre::COUNT,
            max_antecedents: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct C2fParams {
    /// d×1 pooling scorer.
    pub w_attention: Matrix,
    /// NUM_BUCKETS × d_f
    pub phi_length: Matrix,
    /// hidden × span_dim
    pub w_mention: Matrix,
    pub v_mention: Matrix,
    pub phi_distance: Matrix,
    /// 2 × d_f, row 1 = same speaker.
    pub phi_speaker: Matrix,
    pub phi_genre: Matrix,
    /// hidden × pair_dim
    pub w_antecedent: Matrix,
    pub v_antecedent: Matrix,
    /// span_dim × span_dim coarse bilinear.
    pub w_coarse: Matrix,
}

impl C2fParams {
    pub fn init(d: usize, cfg: &C2fConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_with(d, cfg, &mut rng)
    }

    pub fn init_with<R: Rng + ?Sized>(d: usize, cfg: &C2fConfig, rng: &mut R) -> Self {
        let f = cfg.feature_dim;
        let hidden = cfg.hidden_dim.unwrap_or(d);
        let span = 3 * d + f;
        let pair = 3 * span + 3 * f;
        let emb = glorot_bound(1, f);
        C2fParams {
            w_attention: Matrix::uniform(d, 1, glorot_bound(d, 1), rng),
            phi_length: Matrix::uniform(NUM_BUCKETS, f, emb, rng),
            w_mention: Matrix::uniform(hidden, span, glorot_bound(span, hidden), rng),
            v_mention: Matrix::uniform(hidden, 1, glorot_bound(hidden, 1), rng),
            phi_distance: Matrix::uniform(NUM_BUCKETS, f, emb, rng),
            phi_speaker: Matrix::uniform(2, f, emb, rng),
            phi_genre: Matrix::uniform(cfg.num_genres, f, emb, rng),
            w_antecedent: Matrix::uniform(hidden, pair, glorot_bound(pair, hidden), rng),
            v_antecedent: Matrix::uniform(hidden, 1, glorot_bound(hidden, 1), rng),
            w_coarse: Matrix::uniform(span, span, glorot_bound(span, span), rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_attention.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.phi_length.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_mention.rows()
    }

    pub fn span_dim(&self) -> usize {
        3 * self.input_dim() + self.feature_dim()
    }

    pub fn pair_dim(&self) -> usize {
        3 * self.span_dim() + 3 * self.feature_dim()
    }

    pub fn num_genres(&self) -> usize {
        self.phi_genre.rows()
    }

    fn shapes(d: usize, f: usize, hidden: usize, genres: usize) -> Vec<(usize, usize)> {
        let span = 3 * d + f;
        let pair = 3 * span + 3 * f;
        vec![
            (d, 1),
            (NUM_BUCKETS, f),
            (hidden, span),
            (hidden, 1),
            (NUM_BUCKETS, f),
            (2, f),
            (genres, f),
            (hidden, pair),
            (hidden, 1),
            (span, span),
        ]
    }

    pub fn save<W: Write>(&self, sink: W) -> Result<usize> {
        let tensors: Vec<&Matrix> = self.tensors().into_iter().map(|(_, t)| t).collect();
        let dims = [
            self.input_dim(),
            self.feature_dim(),
            self.hidden_dim(),
            self.num_genres(),
        ]
        .map(|v| v as u32);
        checkpoint::write_checkpoint(sink, MAGIC, &dims, &tensors)
    }

    pub fn load<R: Read>(source: R) -> Result<Self> {
        let (_, tensors) = checkpoint::read_checkpoint(source, MAGIC, 4, |dims| {
            let [d, f, h, g] = [dims[0], dims[1], dims[2], dims[3]].map(|v| v as usize);
            Ok(C2fParams::shapes(d, f, h, g))
        })?;
        let mut it = tensors.into_iter();
        let mut next = || it.next().expect("shape list length");
        Ok(C2fParams {
            w_attention: next(),
            phi_length: next(),
            w_mention: next(),
            v_mention: next(),
            phi_distance: next(),
            phi_speaker: next(),
            phi_genre: next(),
            w_antecedent: next(),
            v_antecedent: next(),
            w_coarse: next(),
        })
    }
}

impl ParamSet for C2fParams {
    fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        vec![
            ("w_attention", &self.w_attention),
            ("phi_length", &self.phi_length),
            ("w_mention", &self.w_mention),
            ("v_mention", &self.v_mention),
            ("phi_distance", &self.phi_distance),
            ("phi_speaker", &self.phi_speaker),
            ("phi_genre", &self.phi_genre),
            ("w_antecedent", &self.w_antecedent),
            ("v_antecedent", &self.v_antecedent),
            ("w_coarse", &self.w_coarse),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        vec![
            ("w_attention", &mut self.w_attention),
            ("phi_length", &mut self.phi_length),
            ("w_mention", &mut self.w_mention),
            ("v_mention", &mut self.v_mention),
            ("phi_distance", &mut self.phi_distance),
            ("phi_speaker", &mut self.phi_speaker),
            ("phi_genre", &mut self.phi_genre),
            ("w_antecedent", &mut self.w_antecedent),
            ("v_antecedent", &mut self.v_antecedent),
            ("w_coarse", &mut self.w_coarse),
        ]
    }
}

/// Softmax-weighted average of the span's token rows, written into `out`.
pub fn self_attentive_pool_into(x: &Matrix, span: Span, w_attention: &[f64], out: &mut [f64]) {
    let logits: Vec<f64> = (span.start..=span.end).map(|i| dot(w_attention, x.row(i))).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    out.iter_mut().for_each(|o| *o = 0.0);
    for (w, i) in weights.iter().zip(span.start..=span.end) {
        for (o, v) in out.iter_mut().zip(x.row(i)) {
            *o += w / total * v;
        }
    }
}

pub fn self_attentive_pool(x: &Matrix, span: Span, w_attention: &[f64]) -> FloatBuf {
    let mut out = FloatBuf::zeros(x.cols());
    self_attentive_pool_into(x, span, w_attention, &mut out);
    out
}

fn span_representation_into(x: &Matrix, q: Span, params: &C2fParams, out: &mut [f64]) {
    let d = x.cols();
    out[..d].copy_from_slice(x.row(q.start));
    out[d..2 * d].copy_from_slice(x.row(q.end));
    self_attentive_pool_into(x, q, params.w_attention.as_slice(), &mut out[2 * d..3 * d]);
    out[3 * d..].copy_from_slice(params.phi_length.row(distance_bucket(q.len())));
}

/// `[x_start; x_end; pooled; φ(length)]`
pub fn span_representation(x: &Matrix, q: Span, params: &C2fParams) -> FloatBuf {
    let mut out = FloatBuf::zeros(params.span_dim());
    span_representation_into(x, q, params, &mut out);
    out
}

/// Span representations for `spans`, one row each.
pub fn span_representations(x: &Matrix, spans: &[Span], params: &C2fParams) -> Matrix {
    let mut out = Matrix::zeros(spans.len(), params.span_dim());
    for (r, s) in spans.iter().enumerate() {
        span_representation_into(x, *s, params, out.row_mut(r));
    }
    out
}

/// `v · ReLU(W · input)` with a caller-provided hidden buffer.
fn relu_score(w: &Matrix, v: &Matrix, input: &[f64], hidden: &mut [f64]) -> f64 {
    w.mul_vec_into(input, hidden);
    hidden.iter().zip(v.as_slice()).map(|(h, v)| h.max(0.0) * v).sum()
}

/// `v_m · ReLU(W_m · v_q)`
pub fn c2f_mention_score(v_q: &[f64], params: &C2fParams) -> f64 {
    let mut hidden = FloatBuf::zeros(params.hidden_dim());
    relu_score(&params.w_mention, &params.v_mention, v_q, &mut hidden)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairFeatures {
    /// Candidate-index distance between query and antecedent.
    pub gap: usize,
    pub same_speaker: bool,
    pub genre: Genre,
}

fn pair_representation_into(v_c: &[f64], v_q: &[f64], features: PairFeatures, params: &C2fParams, out: &mut [f64]) {
    let s = v_c.len();
    let f = params.feature_dim();
    out[..s].copy_from_slice(v_c);
    out[s..2 * s].copy_from_slice(v_q);
    for ((o, a), b) in out[2 * s..3 * s].iter_mut().zip(v_c).zip(v_q) {
        *o = a * b;
    }
    let base = 3 * s;
    out[base..base + f].copy_from_slice(params.phi_distance.row(distance_bucket(features.gap)));
    out[base + f..base + 2 * f].copy_from_slice(params.phi_speaker.row(usize::from(features.same_speaker)));
    let genre = features.genre.index().min(params.num_genres() - 1);
    out[base + 2 * f..base + 3 * f].copy_from_slice(params.phi_genre.row(genre));
}

/// `[v_c; v_q; v_c ∘ v_q; φ_dist; φ_speaker; φ_genre]`
pub fn pair_representation(v_c: &[f64], v_q: &[f64], features: PairFeatures, params: &C2fParams) -> Result<FloatBuf> {
    if v_c.len() != params.span_dim() || v_q.len() != params.span_dim() {
        return Err(Error::Dimension(format!(
            "span vectors of width {} and {}, expected {}",
            v_c.len(),
            v_q.len(),
            params.span_dim()
        )));
    }
    let mut out = FloatBuf::zeros(params.pair_dim());
    pair_representation_into(v_c, v_q, features, params, &mut out);
    Ok(out)
}

/// `v_a · ReLU(W_a · v_(c,q))`
pub fn c2f_antecedent_score(v_pair: &[f64], params: &C2fParams) -> f64 {
    let mut hidden = FloatBuf::zeros(params.hidden_dim());
    relu_score(&params.w_antecedent, &params.v_antecedent, v_pair, &mut hidden)
}

/// Top-`max_antecedents` preceding candidates of `query` by coarse score
/// `f_m(c) + f_m(q) + v_c·W_c·v_q`, highest first, ties to the earlier span.
pub fn coarse_prune(
    reps: &Matrix,
    mention_scores: &[f64],
    spans: &[Span],
    query: usize,
    max_antecedents: usize,
    params: &C2fParams,
) -> Result<Vec<(usize, f64)>> {
    if max_antecedents == 0 {
        return Err(Error::Precondition("max_antecedents must be at least 1".into()));
    }
    let mut projected = FloatBuf::zeros(params.span_dim());
    params.w_coarse.mul_vec_into(reps.row(query), &mut projected);
    let scores: Vec<f64> = (0..query)
        .map(|c| mention_scores[c] + mention_scores[query] + dot(reps.row(c), &projected))
        .collect();
    Ok(top_preceding(&scores, spans, max_antecedents))
}

fn top_preceding(scores: &[f64], spans: &[Span], max_antecedents: usize) -> Vec<(usize, f64)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| rank_desc(scores, a, b, spans));
    order.truncate(max_antecedents);
    order.into_iter().map(|c| (c, scores[c])).collect()
}

/// Greedily accepts spans in rank order, rejecting any span that crosses an
/// accepted one. Nested spans are kept. Stops after `limit` acceptances.
pub fn c2f_overlap_filter(ranked: &[Span], limit: usize) -> Vec<Span> {
    let mut accepted: Vec<Span> = Vec::with_capacity(limit.min(ranked.len()));
    for s in ranked {
        if accepted.len() >= limit {
            break;
        }
        if !accepted.iter().any(|a| a.crosses(s)) {
            accepted.push(*s);
        }
    }
    accepted
}

/// Number of floats in the explicit pair buffer for `k` queries with
/// `max_antecedents` slots each.
pub fn pair_buffer_floats(k: usize, max_antecedents: usize, d: usize, feature_dim: usize) -> usize {
    let span_dim = 3 * d + feature_dim;
    k * max_antecedents * (3 * span_dim + 3 * feature_dim)
}

/// Explicit pair representations, one row per (query, antecedent slot).
/// Slots past a query's available antecedents stay zero and are masked.
pub fn build_pair_buffer(
    reps: &Matrix,
    antecedents: &[Vec<(usize, f64)>],
    max_antecedents: usize,
    speaker_ids: &[usize],
    spans: &[Span],
    genre: Genre,
    params: &C2fParams,
) -> Matrix {
    let k = antecedents.len();
    let mut buffer = Matrix::zeros(k * max_antecedents, params.pair_dim());
    for (q, slots) in antecedents.iter().enumerate() {
        for (slot, &(c, _)) in slots.iter().enumerate() {
            let features = PairFeatures {
                gap: q - c,
                same_speaker: speaker_ids[spans[c].start] == speaker_ids[spans[q].start],
                genre,
            };
            pair_representation_into(
                reps.row(c),
                reps.row(q),
                features,
                params,
                buffer.row_mut(q * max_antecedents + slot),
            );
        }
    }
    buffer
}

/// Per-document c2f scores.
#[derive(Debug, Clone)]
pub struct C2fDocumentScores {
    pub candidates: CandidateSet,
    /// For each query, retained antecedent indices with final scores
    /// `coarse + f_a`, in coarse-rank order.
    pub antecedents: Vec<Vec<(usize, f64)>>,
}

impl C2fDocumentScores {
    pub fn links(&self) -> Vec<(Span, Option<Span>)> {
        self.antecedents
            .iter()
            .enumerate()
            .map(|(q, ants)| {
                let scores: Vec<f64> = ants.iter().map(|a| a.1).collect();
                let best = best_antecedent(&scores).map(|i| self.candidates.spans[ants[i].0]);
                (self.candidates.spans[q], best)
            })
            .collect()
    }

    pub fn decode(&self) -> ClusterSet {
        decode_clusters(&self.links())
    }
}

/// Speaker label per token mapped to small integers; unlabeled tokens share one id.
pub fn speaker_ids(speakers: &[Option<String>]) -> Vec<usize> {
    let mut seen: Vec<&Option<String>> = Vec::new();
    speakers
        .iter()
        .map(|s| match seen.iter().position(|t| *t == s) {
            Some(i) => i,
            None => {
                seen.push(s);
                seen.len() - 1
            }
        })
        .collect()
}

/// Full c2f scoring of one document: representations of every span free of
/// synthetic tokens, mention scores, overlap-filtered top-λn pruning, coarse
/// antecedent pruning, the explicit pair buffer and the fine scores.
pub fn score_document(
    x: &Matrix,
    synthetic: &[bool],
    speaker_ids: &[usize],
    genre: Genre,
    params: &C2fParams,
    prune: &PruneConfig,
    max_antecedents: usize,
) -> Result<C2fDocumentScores> {
    prune.validate()?;
    let n = x.rows();
    if x.cols() != params.input_dim() {
        return Err(Error::Dimension(format!(
            "embedding width {} but head expects {}",
            x.cols(),
            params.input_dim()
        )));
    }
    if speaker_ids.len() != n || synthetic.len() != n {
        return Err(Error::Dimension(format!(
            "{} speaker ids and {} synthetic flags for {n} tokens",
            speaker_ids.len(),
            synthetic.len()
        )));
    }
    if max_antecedents == 0 {
        return Err(Error::Precondition("max_antecedents must be at least 1".into()));
    }

    let (spans, reps, mention_scores) = {
        let all: Vec<Span> = enumerate_spans(n, prune.max_span_len)
            .into_iter()
            .filter(|s| !synthetic[s.start..=s.end].iter().any(|&f| f))
            .collect();
        if all.is_empty() {
            return Err(Error::EmptyCandidateSet);
        }
        let all_reps = span_representations(x, &all, params);
        let mut hidden = FloatBuf::zeros(params.hidden_dim());
        let scores: FloatBuf = (0..all.len())
            .map(|i| relu_score(&params.w_mention, &params.v_mention, all_reps.row(i), &mut hidden))
            .collect();
        let mut order: Vec<usize> = (0..all.len()).collect();
        order.sort_by(|&a, &b| rank_desc(&scores, a, b, &all));
        let ranked: Vec<Span> = order.iter().map(|&i| all[i]).collect();
        let mut kept = c2f_overlap_filter(&ranked, retained_count(prune.top_lambda, n));
        kept.sort();
        let idx: Vec<usize> = kept
            .iter()
            .map(|s| all.binary_search(s).expect("kept span is enumerated"))
            .collect();
        let reps = all_reps.gather_rows(idx.iter().copied());
        let fm: FloatBuf = idx.iter().map(|&i| scores[i]).collect();
        (kept, reps, fm)
    };
    let k = spans.len();

    let coarse = {
        let projected = reps.matmul_t(&params.w_coarse);
        let bilinear = projected.matmul_t(&reps);
        (0..k)
            .map(|q| {
                let scores: Vec<f64> = (0..q)
                    .map(|c| mention_scores[c] + mention_scores[q] + bilinear[(q, c)])
                    .collect();
                top_preceding(&scores, &spans, max_antecedents)
            })
            .collect::<Vec<_>>()
    };

    let buffer = build_pair_buffer(&reps, &coarse, max_antecedents, speaker_ids, &spans, genre, params);
    let mut hidden = FloatBuf::zeros(params.hidden_dim());
    let antecedents = coarse
        .iter()
        .enumerate()
        .map(|(q, slots)| {
            slots
                .iter()
                .enumerate()
                .map(|(slot, &(c, coarse_score))| {
                    let row = buffer.row(q * max_antecedents + slot);
                    let fine = relu_score(&params.w_antecedent, &params.v_antecedent, row, &mut hidden);
                    (c, coarse_score + fine)
                })
                .collect()
        })
        .collect();
    drop(buffer);

    Ok(C2fDocumentScores {
        candidates: CandidateSet { spans, mention_scores },
        antecedents,
    })
}
