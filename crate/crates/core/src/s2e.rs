//! Start-to-end scoring head.
//!
//! Mentions are scored from the representations of their first and last
//! tokens with a biaffine form, antecedent pairs with a sum of four bilinear
//! forms over the boundary tokens of both spans. No span or span-pair
//! vectors are ever built.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::checkpoint;
use crate::corpus::{enumerate_spans, Span};
use crate::counter::FloatBuf;
use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};
use crate::params::{glorot_bound, ParamSet};

pub const MAGIC: [u8; 4] = *b"S2EP";

/// Exact GeLU, `x·Φ(x)`.
pub fn gelu(x: f64) -> f64 {
    // erfc keeps full relative precision in the far negative tail.
    0.5 * x * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// `d/dx x·Φ(x) = Φ(x) + x·φ(x)`
pub fn gelu_derivative(x: f64) -> f64 {
    let cdf = 0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2);
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    cdf + x * pdf
}

#[derive(Debug, Clone, PartialEq)]
pub struct S2eParams {
    /// d′×d start projection for mention scoring.
    pub w_mention_start: Matrix,
    /// d′×d end projection for mention scoring.
    pub w_mention_end: Matrix,
    /// d′×1
    pub v_start: Matrix,
    /// d′×1
    pub v_end: Matrix,
    /// d′×d′ start–end interaction.
    pub b_mention: Matrix,
    pub w_antecedent_start: Matrix,
    pub w_antecedent_end: Matrix,
    /// Antecedent start × query start.
    pub b_start_start: Matrix,
    /// Antecedent start × query end.
    pub b_start_end: Matrix,
    /// Antecedent end × query start.
    pub b_end_start: Matrix,
    /// Antecedent end × query end.
    pub b_end_end: Matrix,
}

impl S2eParams {
    pub fn zeros(d: usize, head: usize) -> Self {
        S2eParams {
            w_mention_start: Matrix::zeros(head, d),
            w_mention_end: Matrix::zeros(head, d),
            v_start: Matrix::zeros(head, 1),
            v_end: Matrix::zeros(head, 1),
            b_mention: Matrix::zeros(head, head),
            w_antecedent_start: Matrix::zeros(head, d),
            w_antecedent_end: Matrix::zeros(head, d),
            b_start_start: Matrix::zeros(head, head),
            b_start_end: Matrix::zeros(head, head),
            b_end_start: Matrix::zeros(head, head),
            b_end_end: Matrix::zeros(head, head),
        }
    }

    /// Glorot-uniform initialization from a seeded generator.
    pub fn init(d: usize, head: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_with(d, head, &mut rng)
    }

    pub fn init_with<R: Rng + ?Sized>(d: usize, head: usize, rng: &mut R) -> Self {
        let proj = glorot_bound(d, head);
        let vec = glorot_bound(head, 1);
        let sq = glorot_bound(head, head);
        S2eParams {
            w_mention_start: Matrix::uniform(head, d, proj, rng),
            w_mention_end: Matrix::uniform(head, d, proj, rng),
            v_start: Matrix::uniform(head, 1, vec, rng),
            v_end: Matrix::uniform(head, 1, vec, rng),
            b_mention: Matrix::uniform(head, head, sq, rng),
            w_antecedent_start: Matrix::uniform(head, d, proj, rng),
            w_antecedent_end: Matrix::uniform(head, d, proj, rng),
            b_start_start: Matrix::uniform(head, head, sq, rng),
            b_start_end: Matrix::uniform(head, head, sq, rng),
            b_end_start: Matrix::uniform(head, head, sq, rng),
            b_end_end: Matrix::uniform(head, head, sq, rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_mention_start.cols()
    }

    pub fn head_dim(&self) -> usize {
        self.w_mention_start.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let (d, h) = (self.input_dim(), self.head_dim());
        for (name, t) in self.tensors() {
            let want = match name {
                "w_mention_start" | "w_mention_end" | "w_antecedent_start" | "w_antecedent_end" => (h, d),
                "v_start" | "v_end" => (h, 1),
                _ => (h, h),
            };
            if t.shape() != want {
                return Err(Error::Dimension(format!(
                    "{name} is {:?}, expected {want:?}",
                    t.shape()
                )));
            }
        }
        self.check_finite()
    }

    pub fn save<W: Write>(&self, sink: W) -> Result<usize> {
        let tensors: Vec<&Matrix> = self.tensors().into_iter().map(|(_, t)| t).collect();
        checkpoint::write_checkpoint(
            sink,
            MAGIC,
            &[self.input_dim() as u32, self.head_dim() as u32],
            &tensors,
        )
    }

    pub fn load<R: Read>(source: R) -> Result<Self> {
        let (dims, mut tensors) = checkpoint::read_checkpoint(source, MAGIC, 2, |dims| {
            let (d, h) = (dims[0] as usize, dims[1] as usize);
            Ok(vec![
                (h, d),
                (h, d),
                (h, 1),
                (h, 1),
                (h, h),
                (h, d),
                (h, d),
                (h, h),
                (h, h),
                (h, h),
                (h, h),
            ])
        })?;
        let mut params = S2eParams::zeros(dims[0] as usize, dims[1] as usize);
        for ((_, slot), t) in params.tensors_mut().into_iter().zip(tensors.drain(..)) {
            *slot = t;
        }
        params.validate()?;
        Ok(params)
    }
}

impl ParamSet for S2eParams {
    fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        vec![
            ("w_mention_start", &self.w_mention_start),
            ("w_mention_end", &self.w_mention_end),
            ("v_start", &self.v_start),
            ("v_end", &self.v_end),
            ("b_mention", &self.b_mention),
            ("w_antecedent_start", &self.w_antecedent_start),
            ("w_antecedent_end", &self.w_antecedent_end),
            ("b_start_start", &self.b_start_start),
            ("b_start_end", &self.b_start_end),
            ("b_end_start", &self.b_end_start),
            ("b_end_end", &self.b_end_end),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        vec![
            ("w_mention_start", &mut self.w_mention_start),
            ("w_mention_end", &mut self.w_mention_end),
            ("v_start", &mut self.v_start),
            ("v_end", &mut self.v_end),
            ("b_mention", &mut self.b_mention),
            ("w_antecedent_start", &mut self.w_antecedent_start),
            ("w_antecedent_end", &mut self.w_antecedent_end),
            ("b_start_start", &mut self.b_start_start),
            ("b_start_end", &mut self.b_start_end),
            ("b_end_start", &mut self.b_end_start),
            ("b_end_end", &mut self.b_end_end),
        ]
    }
}

/// Boundary-token representations, each n×d′.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryReps {
    pub mention_start: Matrix,
    pub mention_end: Matrix,
    pub antecedent_start: Matrix,
    pub antecedent_end: Matrix,
}

/// Mention-side representations only.
#[derive(Debug, Clone, PartialEq)]
pub struct MentionReps {
    pub start: Matrix,
    pub end: Matrix,
}

/// `GeLU(x · Wᵀ)`, computed in place over the pre-activation buffer.
pub fn project(x: &Matrix, w: &Matrix) -> Result<Matrix> {
    if x.cols() != w.cols() {
        return Err(Error::Dimension(format!(
            "embedding width {} but projection expects {}",
            x.cols(),
            w.cols()
        )));
    }
    let mut out = x.matmul_t(w);
    out.as_mut_slice().iter_mut().for_each(|v| *v = gelu(*v));
    Ok(out)
}

pub fn project_boundaries(x: &Matrix, params: &S2eParams) -> Result<BoundaryReps> {
    Ok(BoundaryReps {
        mention_start: project(x, &params.w_mention_start)?,
        mention_end: project(x, &params.w_mention_end)?,
        antecedent_start: project(x, &params.w_antecedent_start)?,
        antecedent_end: project(x, &params.w_antecedent_end)?,
    })
}

impl BoundaryReps {
    pub fn mention_reps(&self) -> (&Matrix, &Matrix) {
        (&self.mention_start, &self.mention_end)
    }

    pub fn len(&self) -> usize {
        self.mention_start.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `v_s·m^s[q.start] + v_e·m^e[q.end] + m^s[q.start]·B_m·m^e[q.end]`
pub fn mention_score(reps: &BoundaryReps, q: Span, params: &S2eParams) -> f64 {
    let s = reps.mention_start.row(q.start);
    let e = reps.mention_end.row(q.end);
    dot(params.v_start.as_slice(), s) + dot(params.v_end.as_slice(), e) + params.b_mention.bilinear(s, e)
}

/// Mention scores of every span of length at most `max_len`, in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct MentionTable {
    pub spans: Vec<Span>,
    pub scores: FloatBuf,
}

impl MentionTable {
    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }
}

/// Scores all spans up to `max_len` tokens.
///
/// The start-side terms `v_s·m^s[i]` and `m^s[i]ᵀ·B_m` are computed once per
/// token, so each span costs one d′-wide dot product.
pub fn mention_scores_all(start: &Matrix, end: &Matrix, max_len: usize, params: &S2eParams) -> MentionTable {
    let n = start.rows();
    let start_term: FloatBuf = (0..n).map(|i| dot(params.v_start.as_slice(), start.row(i))).collect();
    let end_term: FloatBuf = (0..n).map(|j| dot(params.v_end.as_slice(), end.row(j))).collect();
    let left = start.matmul(&params.b_mention);

    let spans = enumerate_spans(n, max_len);
    let scores = spans
        .iter()
        .map(|s| start_term[s.start] + end_term[s.end] + dot(left.row(s.start), end.row(s.end)))
        .collect();
    MentionTable { spans, scores }
}

/// Antecedent-side boundary rows gathered for an ordered candidate list.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateRows {
    /// k×d′, `a^s` at each candidate's start.
    pub starts: Matrix,
    /// k×d′, `a^e` at each candidate's end.
    pub ends: Matrix,
}

pub fn gather_candidate_rows(antecedent_start: &Matrix, antecedent_end: &Matrix, candidates: &[Span]) -> CandidateRows {
    CandidateRows {
        starts: antecedent_start.gather_rows(candidates.iter().map(|s| s.start)),
        ends: antecedent_end.gather_rows(candidates.iter().map(|s| s.end)),
    }
}

/// Sum of the four boundary bilinear factors for antecedent `c` of query `q`.
pub fn antecedent_score_factored(reps: &BoundaryReps, c: Span, q: Span, params: &S2eParams) -> f64 {
    let cs = reps.antecedent_start.row(c.start);
    let ce = reps.antecedent_end.row(c.end);
    let qs = reps.antecedent_start.row(q.start);
    let qe = reps.antecedent_end.row(q.end);
    params.b_start_start.bilinear(cs, qs)
        + params.b_start_end.bilinear(cs, qe)
        + params.b_end_start.bilinear(ce, qs)
        + params.b_end_end.bilinear(ce, qe)
}

/// Reference form: one bilinear product between concatenated boundary
/// vectors and the 2d′×2d′ block matrix of the four factors.
pub fn antecedent_score_concat(reps: &BoundaryReps, c: Span, q: Span, params: &S2eParams) -> f64 {
    let h = params.head_dim();
    let concat = |s: &[f64], e: &[f64]| -> Vec<f64> { s.iter().chain(e).copied().collect() };
    let left = concat(reps.antecedent_start.row(c.start), reps.antecedent_end.row(c.end));
    let right = concat(reps.antecedent_start.row(q.start), reps.antecedent_end.row(q.end));
    let block = Matrix::from_fn(2 * h, 2 * h, |i, j| {
        let b = match (i < h, j < h) {
            (true, true) => &params.b_start_start,
            (true, false) => &params.b_start_end,
            (false, true) => &params.b_end_start,
            (false, false) => &params.b_end_end,
        };
        b[(i % h, j % h)]
    });
    block.bilinear(&left, &right)
}

/// Antecedent scores for all ordered candidate pairs.
///
/// Row `j` holds query `j`; column `i < j` holds antecedent `i`. Entries on
/// and above the diagonal are computed but carry no meaning.
#[derive(Debug, Clone, PartialEq)]
pub struct AntecedentScores {
    pub scores: Matrix,
}

impl AntecedentScores {
    pub fn k(&self) -> usize {
        self.scores.rows()
    }

    /// Score of antecedent `antecedent` for query `query`; requires `antecedent < query`.
    pub fn get(&self, query: usize, antecedent: usize) -> f64 {
        debug_assert!(antecedent < query);
        self.scores[(query, antecedent)]
    }
}

/// The four factors are materialized as separate k×k products and then summed,
/// so the auxiliary footprint is five k×k buffers plus one k×d′ temporary.
pub fn antecedent_scores_gathered(rows: &CandidateRows, params: &S2eParams) -> AntecedentScores {
    let (s, e) = (&rows.starts, &rows.ends);
    let factor = |query: &Matrix, b: &Matrix, antecedent: &Matrix| query.matmul_t(b).matmul_t(antecedent);
    let start_start = factor(s, &params.b_start_start, s);
    let start_end = factor(e, &params.b_start_end, s);
    let end_start = factor(s, &params.b_end_start, e);
    let end_end = factor(e, &params.b_end_end, e);

    let mut scores = Matrix::zeros(s.rows(), s.rows());
    for f in [&start_start, &start_end, &end_start, &end_end] {
        scores.add_assign(f);
    }
    AntecedentScores { scores }
}

pub fn antecedent_scores_batch(reps: &BoundaryReps, candidates: &[Span], params: &S2eParams) -> AntecedentScores {
    let rows = gather_candidate_rows(&reps.antecedent_start, &reps.antecedent_end, candidates);
    antecedent_scores_gathered(&rows, params)
}

/// Candidate antecedent of a query: a preceding span or the null antecedent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Antecedent {
    Null,
    Mention(Span),
}

/// `f_m(c) + f_m(q) + f_a(c, q)`, or 0 for the null antecedent.
pub fn full_score(
    c: Antecedent,
    q: Span,
    mention_score: impl Fn(Span) -> f64,
    antecedent_score: impl Fn(Span, Span) -> f64,
) -> Result<f64> {
    match c {
        Antecedent::Null => Ok(0.0),
        Antecedent::Mention(c) if c < q => Ok(mention_score(c) + mention_score(q) + antecedent_score(c, q)),
        Antecedent::Mention(c) => Err(Error::Precondition(format!("antecedent {c} does not precede {q}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counter;
    use proptest::prelude::*;

    /// erf by its Maclaurin series; accurate to ~1e-15 for |z| ≤ 3.
    fn erf_series(z: f64) -> f64 {
        let mut term = z;
        let mut sum = z;
        let mut n = 0.0;
        loop {
            n += 1.0;
            term *= -z * z / n;
            let add = term / (2.0 * n + 1.0);
            sum += add;
            if add.abs() < 1e-18 {
                break;
            }
        }
        sum * 2.0 / std::f64::consts::PI.sqrt()
    }

    fn gelu_oracle(x: f64) -> f64 {
        0.5 * x * (1.0 + erf_series(x / 2f64.sqrt()))
    }

    #[test]
    fn gelu_reference_points() {
        assert_eq!(gelu(0.0), 0.0);
        assert!((gelu(1.0) - 0.841_344_746_068_542_9).abs() < 1e-12);
        for i in -40..=40 {
            let x = f64::from(i) / 10.0;
            assert!((gelu(x) - gelu_oracle(x)).abs() < 1e-12, "x={x}");
        }
        // Mills-ratio asymptotic series for Φ(-10).
        // Terms shrink until k ≈ 50 at x = 10; twenty terms leave ~1e-16.
        let mut series = 0.0;
        let mut term = 1.0;
        for k in 0..20 {
            series += term;
            term *= -f64::from(2 * k + 1) / 100.0;
        }
        let tail = (-50f64).exp() / (2.0 * std::f64::consts::PI).sqrt() / 10.0 * series;
        let expected = -10.0 * tail;
        assert!(((gelu(-10.0) - expected) / expected).abs() < 1e-9);
        assert!(gelu(-10.0) < 0.0 && gelu(-10.0) > -1e-22);
    }

    #[test]
    fn gelu_monotone_above_minimum() {
        let xs: Vec<f64> = (-70..=400).map(|i| f64::from(i) / 100.0).collect();
        assert!(xs.windows(2).all(|w| gelu(w[0]) < gelu(w[1])));
    }

    #[test]
    fn gelu_derivative_matches_differences() {
        for i in -30..=30 {
            let x = f64::from(i) / 7.0;
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_derivative(x)).abs() < 1e-8, "x={x}");
        }
    }

    fn random_setup(n: usize, d: usize, h: usize, seed: u64) -> (Matrix, S2eParams, BoundaryReps) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Matrix::uniform(n, d, 1.0, &mut rng);
        let p = S2eParams::init_with(d, h, &mut rng);
        let reps = project_boundaries(&x, &p).unwrap();
        (x, p, reps)
    }

    #[test]
    fn projection_zero_input() {
        let p = S2eParams::init(4, 3, 1);
        let reps = project_boundaries(&Matrix::zeros(5, 4), &p).unwrap();
        assert_eq!(reps.mention_start.max_abs(), 0.0);
        assert_eq!(reps.antecedent_end.max_abs(), 0.0);
    }

    #[test]
    fn projection_identity() {
        let mut p = S2eParams::zeros(3, 3);
        p.w_mention_start = Matrix::identity(3);
        let x = Matrix::from_vec(2, 3, vec![1.0; 6]).unwrap();
        let reps = project_boundaries(&x, &p).unwrap();
        assert!(reps
            .mention_start
            .as_slice()
            .iter()
            .all(|v| (v - gelu(1.0)).abs() < 1e-15));
    }

    #[test]
    fn projection_matches_naive() {
        let (x, p, reps) = random_setup(7, 5, 4, 11);
        for i in 0..7 {
            for r in 0..4 {
                let mut z = 0.0;
                for c in 0..5 {
                    z += p.w_antecedent_end[(r, c)] * x[(i, c)];
                }
                assert!((reps.antecedent_end[(i, r)] - gelu(z)).abs() < 1e-12);
            }
        }
        assert!(project_boundaries(&Matrix::zeros(2, 4), &p).is_err());
    }

    #[test]
    fn mention_score_cases() {
        let (_, p, reps) = random_setup(4, 3, 2, 1);
        let zero = S2eParams::zeros(3, 2);
        assert_eq!(mention_score(&reps, Span::new(0, 1), &zero), 0.0);

        let mut only_start = S2eParams::zeros(3, 2);
        only_start.v_start = Matrix::column(vec![1.0, 0.0]);
        let mut r = reps.clone();
        r.mention_start.row_mut(1).copy_from_slice(&[2.0, 0.0]);
        assert_eq!(mention_score(&r, Span::new(1, 3), &only_start), 2.0);

        // scalar loop oracle
        let q = Span::new(1, 2);
        let (s, e) = (reps.mention_start.row(1), reps.mention_end.row(2));
        let mut want = 0.0;
        for a in 0..2 {
            want += p.v_start[(a, 0)] * s[a] + p.v_end[(a, 0)] * e[a];
            for b in 0..2 {
                want += s[a] * p.b_mention[(a, b)] * e[b];
            }
        }
        assert!((mention_score(&reps, q, &p) - want).abs() < 1e-12);
    }

    #[test]
    fn table_matches_pointwise() {
        let (_, p, reps) = random_setup(3, 4, 3, 2);
        let table = mention_scores_all(&reps.mention_start, &reps.mention_end, 2, &p);
        assert_eq!(table.len(), 5);
        assert!(table.spans.iter().all(|s| s.len() <= 2));
        for (s, v) in table.spans.iter().zip(table.scores.iter()) {
            assert!((mention_score(&reps, *s, &p) - v).abs() < 1e-12);
        }
    }

    #[test]
    fn antecedent_special_cases() {
        let (_, mut p, mut reps) = random_setup(4, 3, 2, 3);
        let (c, q) = (Span::new(0, 1), Span::new(2, 3));
        let mut zero_b = p.clone();
        for b in [
            &mut zero_b.b_start_start,
            &mut zero_b.b_start_end,
            &mut zero_b.b_end_start,
            &mut zero_b.b_end_end,
        ] {
            b.scale(0.0);
        }
        assert_eq!(antecedent_score_factored(&reps, c, q, &zero_b), 0.0);
        assert_eq!(antecedent_score_concat(&reps, c, q, &zero_b), 0.0);

        let mut ident = zero_b.clone();
        ident.b_start_start = Matrix::identity(2);
        reps.antecedent_start.row_mut(0).copy_from_slice(&[1.0, 1.0]);
        reps.antecedent_start.row_mut(2).copy_from_slice(&[1.0, 1.0]);
        assert_eq!(antecedent_score_factored(&reps, c, q, &ident), 2.0);

        // off-diagonal blocks zeroed leave only the ss + ee terms
        p.b_start_end.scale(0.0);
        p.b_end_start.scale(0.0);
        let cs = reps.antecedent_start.row(c.start);
        let ce = reps.antecedent_end.row(c.end);
        let qs = reps.antecedent_start.row(q.start);
        let qe = reps.antecedent_end.row(q.end);
        let want = p.b_start_start.bilinear(cs, qs) + p.b_end_end.bilinear(ce, qe);
        assert!((antecedent_score_concat(&reps, c, q, &p) - want).abs() < 1e-12);
    }

    #[test]
    fn batch_matches_pairwise() {
        let (_, p, reps) = random_setup(10, 5, 4, 8);
        let cands = vec![
            Span::new(0, 1),
            Span::new(2, 2),
            Span::new(3, 6),
            Span::new(3, 7),
            Span::new(9, 9),
        ];
        let batch = antecedent_scores_batch(&reps, &cands, &p);
        for j in 0..cands.len() {
            for i in 0..j {
                let want = antecedent_score_factored(&reps, cands[i], cands[j], &p);
                assert!((batch.get(j, i) - want).abs() < 1e-12);
            }
        }
        assert_eq!(antecedent_scores_batch(&reps, &[], &p).k(), 0);
        assert_eq!(antecedent_scores_batch(&reps, &cands[..1], &p).k(), 1);
    }

    #[test]
    fn batch_memory_is_quadratic_in_k_only() {
        let (_, p, reps) = random_setup(300, 8, 32, 4);
        let cands: Vec<Span> = (0..200).map(|i| Span::new(i, i)).collect();
        let rows = gather_candidate_rows(&reps.antecedent_start, &reps.antecedent_end, &cands);
        let (_, stats) = counter::measure(|| antecedent_scores_gathered(&rows, &p));
        let (k, h) = (200, 32);
        assert!(stats.peak_live <= 5 * k * k + 2 * k * h, "{stats:?}");
    }

    #[test]
    fn full_score_cases() {
        let q = Span::new(3, 4);
        let fm = |s: Span| if s == q { 2.0 } else { 1.0 };
        let fa = |_: Span, _: Span| 0.5;
        assert_eq!(full_score(Antecedent::Null, q, fm, fa).unwrap(), 0.0);
        assert_eq!(
            full_score(Antecedent::Mention(Span::new(0, 1)), q, fm, fa).unwrap(),
            3.5
        );
        assert!(full_score(Antecedent::Mention(Span::new(5, 5)), q, fm, fa).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let p = S2eParams::init(5, 3, 42);
        let mut buf = Vec::new();
        p.save(&mut buf).unwrap();
        assert_eq!(S2eParams::load(&buf[..]).unwrap(), p);
        let last = buf.len() - 5;
        buf[last] ^= 1;
        assert!(matches!(S2eParams::load(&buf[..]), Err(Error::Checksum { .. })));
    }

    proptest! {
        #[test]
        fn factored_equals_concat(seed in any::<u64>(), c0 in 0usize..6, cl in 0usize..3, q0 in 0usize..6, ql in 0usize..3) {
            let (_, p, reps) = random_setup(9, 6, 5, seed);
            let c = Span::new(c0, c0 + cl);
            let q = Span::new(q0, q0 + ql);
            let a = antecedent_score_factored(&reps, c, q, &p);
            let b = antecedent_score_concat(&reps, c, q, &p);
            prop_assert!((a - b).abs() <= 1e-9);
        }

        #[test]
        fn bilinear_blocks_are_linear(seed in any::<u64>(), t in 0u32..3) {
            let (_, p, reps) = random_setup(6, 4, 3, seed);
            let mut scaled = p.clone();
            for b in [&mut scaled.b_start_start, &mut scaled.b_start_end, &mut scaled.b_end_start, &mut scaled.b_end_end] {
                b.scale(f64::from(t));
            }
            let (c, q) = (Span::new(0, 2), Span::new(3, 5));
            let base = antecedent_score_factored(&reps, c, q, &p);
            let got = antecedent_score_factored(&reps, c, q, &scaled);
            prop_assert!((got - f64::from(t) * base).abs() < 1e-12);
        }
    }
}
