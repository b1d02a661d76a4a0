//! Cached forward pass and hand-derived gradients for the s2e head.

use crate::corpus::{ClusterSet, Span};
use crate::error::{Error, Result};
use crate::inference::{prune_mentions, CandidateSet, PruneConfig};
use crate::matrix::{dot, Matrix};
use crate::params::ParamSet;
use crate::s2e::{self, gelu, gelu_derivative, S2eParams};

use super::loss::{marginal_nll, query_probabilities, GoldTargets, LossBreakdown};

/// Pre-activation and GeLU output of one boundary projection.
#[derive(Debug, Clone)]
struct Projection {
    pre: Matrix,
    out: Matrix,
}

impl Projection {
    fn new(x: &Matrix, w: &Matrix) -> Projection {
        let pre = x.matmul_t(w);
        let mut out = pre.clone();
        out.as_mut_slice().iter_mut().for_each(|v| *v = gelu(*v));
        Projection { pre, out }
    }

    /// `dZ = dA ⊙ GeLU′(Z)`, then `dW = dZᵀ·X`.
    fn weight_grad(&self, d_out: &Matrix, x: &Matrix) -> Matrix {
        let mut dz = d_out.clone();
        for (g, z) in dz.as_mut_slice().iter_mut().zip(self.pre.as_slice()) {
            *g *= gelu_derivative(*z);
        }
        dz.t_matmul(x)
    }
}

/// Everything the backward pass needs from one forward pass over a document.
#[derive(Debug, Clone)]
pub struct S2eForward {
    mention_start: Projection,
    mention_end: Projection,
    antecedent_start: Projection,
    antecedent_end: Projection,
    pub candidates: CandidateSet,
    pub targets: GoldTargets,
    /// `scores[j]` holds `f(c_i, c_j)` for `i < j`.
    pub scores: Vec<Vec<f64>>,
}

fn check_input(x: &Matrix, params: &S2eParams) -> Result<()> {
    if x.cols() != params.input_dim() {
        return Err(Error::Dimension(format!(
            "embedding width {} but head expects {}",
            x.cols(),
            params.input_dim()
        )));
    }
    Ok(())
}

impl S2eForward {
    /// Forward pass with pruning.
    pub fn run(
        x: &Matrix,
        synthetic: &[bool],
        gold: &ClusterSet,
        params: &S2eParams,
        cfg: &PruneConfig,
    ) -> Result<S2eForward> {
        cfg.validate()?;
        check_input(x, params)?;
        if synthetic.len() != x.rows() {
            return Err(Error::Dimension(format!(
                "{} embedding rows for {} tokens",
                x.rows(),
                synthetic.len()
            )));
        }
        let ms = Projection::new(x, &params.w_mention_start);
        let me = Projection::new(x, &params.w_mention_end);
        let table = s2e::mention_scores_all(&ms.out, &me.out, cfg.max_span_len, params);
        let candidates = prune_mentions(&table.spans, &table.scores, synthetic, cfg.top_lambda, x.rows())?;
        Ok(Self::finish(x, ms, me, candidates.spans, gold, params))
    }

    /// Forward pass over a fixed candidate list (canonical order). The loss
    /// is then a smooth function of the parameters.
    pub fn with_candidates(x: &Matrix, spans: &[Span], gold: &ClusterSet, params: &S2eParams) -> Result<S2eForward> {
        check_input(x, params)?;
        if spans.windows(2).any(|w| w[0] >= w[1]) || spans.iter().any(|s| !s.is_valid(x.rows())) {
            return Err(Error::Precondition(
                "candidates must be valid and strictly ascending".into(),
            ));
        }
        let ms = Projection::new(x, &params.w_mention_start);
        let me = Projection::new(x, &params.w_mention_end);
        Ok(Self::finish(x, ms, me, spans.to_vec(), gold, params))
    }

    fn finish(
        x: &Matrix,
        ms: Projection,
        me: Projection,
        spans: Vec<Span>,
        gold: &ClusterSet,
        params: &S2eParams,
    ) -> S2eForward {
        let mention_scores = spans
            .iter()
            .map(|s| {
                let u = ms.out.row(s.start);
                let w = me.out.row(s.end);
                dot(params.v_start.as_slice(), u) + dot(params.v_end.as_slice(), w) + params.b_mention.bilinear(u, w)
            })
            .collect();
        let candidates = CandidateSet { spans, mention_scores };
        let a_s = Projection::new(x, &params.w_antecedent_start);
        let a_e = Projection::new(x, &params.w_antecedent_end);
        let rows = s2e::gather_candidate_rows(&a_s.out, &a_e.out, &candidates.spans);
        let fa = s2e::antecedent_scores_gathered(&rows, params);
        let fm = &candidates.mention_scores;
        let scores = (0..candidates.k())
            .map(|j| (0..j).map(|i| fm[i] + fm[j] + fa.get(j, i)).collect())
            .collect();
        let targets = GoldTargets::new(&candidates.spans, gold);
        S2eForward {
            mention_start: ms,
            mention_end: me,
            antecedent_start: a_s,
            antecedent_end: a_e,
            candidates,
            targets,
            scores,
        }
    }

    pub fn loss(&self) -> LossBreakdown {
        marginal_nll(&self.candidates.spans, &self.scores, &self.targets)
    }

    /// Adds `weight · ∂loss/∂θ` into `grads`.
    pub fn backward_into(&self, x: &Matrix, params: &S2eParams, weight: f64, grads: &mut S2eParams) {
        let k = self.candidates.k();
        if k == 0 {
            return;
        }
        let spans = &self.candidates.spans;
        let scale = weight / k as f64;

        // ∂loss/∂f(c_i, c_j), stored with the antecedent as row: h[i][j].
        let mut h = Matrix::zeros(k, k);
        for j in 0..k {
            let (p, q) = query_probabilities(&self.scores[j], &self.targets.antecedents[j]);
            for i in 0..j {
                h.row_mut(i)[j] = scale * (p[i + 1] - q[i + 1]);
            }
        }
        let d_mention: Vec<f64> = (0..k)
            .map(|t| h.row(t).iter().sum::<f64>() + (0..k).map(|i| h[(i, t)]).sum::<f64>())
            .collect();

        // mention scores
        let n = x.rows();
        let head = params.head_dim();
        let mut d_ms = Matrix::zeros(n, head);
        let mut d_me = Matrix::zeros(n, head);
        let mut buf = vec![0.0; head];
        for (t, s) in spans.iter().enumerate() {
            let g = d_mention[t];
            let u = self.mention_start.out.row(s.start);
            let w = self.mention_end.out.row(s.end);
            for (a, b) in grads.v_start.as_mut_slice().iter_mut().zip(u) {
                *a += g * b;
            }
            for (a, b) in grads.v_end.as_mut_slice().iter_mut().zip(w) {
                *a += g * b;
            }
            for r in 0..head {
                let row = grads.b_mention.row_mut(r);
                for (c, wc) in w.iter().enumerate() {
                    row[c] += g * u[r] * wc;
                }
            }
            params.b_mention.mul_vec_into(w, &mut buf);
            for ((a, v), bw) in d_ms
                .row_mut(s.start)
                .iter_mut()
                .zip(params.v_start.as_slice())
                .zip(&buf)
            {
                *a += g * (v + bw);
            }
            params.b_mention.t_mul_vec_into(u, &mut buf);
            for ((a, v), bu) in d_me.row_mut(s.end).iter_mut().zip(params.v_end.as_slice()).zip(&buf) {
                *a += g * (v + bu);
            }
        }
        grads
            .w_mention_start
            .add_assign(&self.mention_start.weight_grad(&d_ms, x));
        grads.w_mention_end.add_assign(&self.mention_end.weight_grad(&d_me, x));

        // antecedent factors: f_a(i, j) = Σ X_i · B · Y_j over the four (X, Y) pairs
        let sc = self.antecedent_start.out.gather_rows(spans.iter().map(|s| s.start));
        let ec = self.antecedent_end.out.gather_rows(spans.iter().map(|s| s.end));
        let hs = h.matmul(&sc);
        let he = h.matmul(&ec);
        let hts = h.t_matmul(&sc);
        let hte = h.t_matmul(&ec);
        grads.b_start_start.add_assign(&sc.t_matmul(&hs));
        grads.b_start_end.add_assign(&sc.t_matmul(&he));
        grads.b_end_start.add_assign(&ec.t_matmul(&hs));
        grads.b_end_end.add_assign(&ec.t_matmul(&he));

        // antecedent side: H·Y·Bᵀ; query side: Hᵀ·X·B
        let mut d_sc = hs.matmul_t(&params.b_start_start);
        d_sc.add_assign(&he.matmul_t(&params.b_start_end));
        d_sc.add_assign(&hts.matmul(&params.b_start_start));
        d_sc.add_assign(&hte.matmul(&params.b_end_start));
        let mut d_ec = hs.matmul_t(&params.b_end_start);
        d_ec.add_assign(&he.matmul_t(&params.b_end_end));
        d_ec.add_assign(&hts.matmul(&params.b_start_end));
        d_ec.add_assign(&hte.matmul(&params.b_end_end));

        let mut d_as = Matrix::zeros(n, head);
        let mut d_ae = Matrix::zeros(n, head);
        for (t, s) in spans.iter().enumerate() {
            for (a, b) in d_as.row_mut(s.start).iter_mut().zip(d_sc.row(t)) {
                *a += b;
            }
            for (a, b) in d_ae.row_mut(s.end).iter_mut().zip(d_ec.row(t)) {
                *a += b;
            }
        }
        grads
            .w_antecedent_start
            .add_assign(&self.antecedent_start.weight_grad(&d_as, x));
        grads
            .w_antecedent_end
            .add_assign(&self.antecedent_end.weight_grad(&d_ae, x));
    }

    pub fn backward(&self, x: &Matrix, params: &S2eParams) -> S2eParams {
        let mut grads = params.zeros_like();
        self.backward_into(x, params, 1.0, &mut grads);
        grads
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(seed: u64) -> (Matrix, S2eParams, Vec<Span>, ClusterSet) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Matrix::uniform(8, 5, 1.0, &mut rng);
        let p = S2eParams::init_with(5, 4, &mut rng);
        let spans = vec![
            Span::new(0, 0),
            Span::new(1, 2),
            Span::new(3, 3),
            Span::new(5, 6),
            Span::new(7, 7),
        ];
        let gold = ClusterSet::new(vec![vec![spans[0], spans[2], spans[4]]]);
        (x, p, spans, gold)
    }

    #[test]
    fn forward_matches_inference_scores() {
        let (x, p, _, gold) = setup(1);
        let cfg = PruneConfig {
            max_span_len: 3,
            top_lambda: 0.5,
        };
        let fwd = S2eForward::run(&x, &[false; 8], &gold, &p, &cfg).unwrap();
        let inf = crate::inference::score_document(&x, &[false; 8], &p, &cfg).unwrap();
        assert_eq!(fwd.candidates.spans, inf.candidates.spans);
        for j in 0..fwd.candidates.k() {
            for i in 0..j {
                assert!((fwd.scores[j][i] - inf.pair_score(j, i)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn directional_derivative_matches() {
        let (x, p, spans, gold) = setup(2);
        let fwd = S2eForward::with_candidates(&x, &spans, &gold, &p).unwrap();
        let grads = fwd.backward(&x, &p);
        let mut dir = p.zeros_like();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (_, t) in dir.tensors_mut() {
            *t = Matrix::uniform(t.rows(), t.cols(), 1.0, &mut rng);
        }
        let h = 1e-5;
        let loss_at = |t: f64| {
            let mut q = p.clone();
            q.add_scaled(&dir, t);
            S2eForward::with_candidates(&x, &spans, &gold, &q).unwrap().loss().total
        };
        let numeric = (loss_at(h) - loss_at(-h)) / (2.0 * h);
        let analytic: f64 = grads
            .tensors()
            .iter()
            .zip(dir.tensors())
            .map(|((_, g), (_, d))| dot(g.as_slice(), d.as_slice()))
            .sum();
        assert!(
            (numeric - analytic).abs() < 1e-7 * analytic.abs().max(1.0),
            "{numeric} vs {analytic}"
        );
    }

    #[test]
    fn weight_scales_gradient() {
        let (x, p, spans, gold) = setup(4);
        let fwd = S2eForward::with_candidates(&x, &spans, &gold, &p).unwrap();
        let one = fwd.backward(&x, &p);
        let mut twice = p.zeros_like();
        fwd.backward_into(&x, &p, 1.0, &mut twice);
        fwd.backward_into(&x, &p, 1.0, &mut twice);
        let mut diff = twice.clone();
        diff.add_scaled(&one, -2.0);
        assert!(diff.max_abs() < 1e-15);
    }
}
