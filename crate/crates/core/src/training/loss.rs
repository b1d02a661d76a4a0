//! Marginal log-likelihood over gold antecedents.

use crate::corpus::{ClusterSet, Span};

/// Gold antecedents of each retained query, as indices into the candidate
/// list. An empty list stands for `{ε}`: the query is not a gold mention or
/// none of its gold antecedents survived pruning.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldTargets {
    pub antecedents: Vec<Vec<usize>>,
}

impl GoldTargets {
    /// Targets for candidates in canonical order.
    pub fn new(candidates: &[Span], gold: &ClusterSet) -> Self {
        let cluster = gold.mention_map();
        let ids: Vec<Option<usize>> = candidates.iter().map(|s| cluster.get(s).copied()).collect();
        let antecedents = (0..candidates.len())
            .map(|j| match ids[j] {
                Some(id) => (0..j).filter(|&i| ids[i] == Some(id)).collect(),
                None => Vec::new(),
            })
            .collect();
        GoldTargets { antecedents }
    }

    pub fn len(&self) -> usize {
        self.antecedents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.antecedents.is_empty()
    }

    pub fn includes_null(&self, query: usize) -> bool {
        self.antecedents[query].is_empty()
    }

    /// Gold antecedents of one query chosen among an explicit antecedent
    /// list (used when antecedents are pruned per query).
    pub fn restricted(&self, query: usize, allowed: &[usize]) -> Vec<usize> {
        allowed
            .iter()
            .enumerate()
            .filter(|(_, c)| self.antecedents[query].contains(c))
            .map(|(slot, _)| slot)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    /// Mean of the per-query terms; 0 when there are no queries.
    pub total: f64,
    pub per_query: Vec<(Span, f64)>,
    pub num_queries: usize,
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `−log Σ_{c ∈ gold} P(c)` where `P` is the softmax over `{ε} ∪ scores`
/// with the null score fixed at 0. `gold` indexes `scores`; empty means `{ε}`.
pub fn query_nll(scores: &[f64], gold: &[usize]) -> f64 {
    let all = log_sum_exp(std::iter::once(0.0).chain(scores.iter().copied()));
    let positive = if gold.is_empty() {
        0.0
    } else {
        log_sum_exp(gold.iter().map(|&i| scores[i]))
    };
    (all - positive).max(0.0)
}

/// Softmax over `{ε} ∪ scores` and its restriction to the gold set, both
/// with the null entry at index 0.
pub(crate) fn query_probabilities(scores: &[f64], gold: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let p = crate::inference::softmax_with_null(scores);
    let mut q = vec![0.0; p.len()];
    if gold.is_empty() {
        q[0] = 1.0;
    } else {
        let mass: f64 = gold.iter().map(|&i| p[i + 1]).sum();
        if mass > 0.0 {
            for &i in gold {
                q[i + 1] = p[i + 1] / mass;
            }
        } else {
            // every gold probability underflowed; fall back to the scores directly
            let max = gold.iter().map(|&i| scores[i]).fold(f64::NEG_INFINITY, f64::max);
            let total: f64 = gold.iter().map(|&i| (scores[i] - max).exp()).sum();
            for &i in gold {
                q[i + 1] = (scores[i] - max).exp() / total;
            }
        }
    }
    (p, q)
}

/// Mean per-query NLL. `scores[j]` holds the antecedent scores of query `j`.
pub fn marginal_nll(queries: &[Span], scores: &[Vec<f64>], targets: &GoldTargets) -> LossBreakdown {
    let per_query: Vec<(Span, f64)> = queries
        .iter()
        .zip(scores)
        .zip(&targets.antecedents)
        .map(|((q, s), g)| (*q, query_nll(s, g)))
        .collect();
    let num_queries = per_query.len();
    let total = if num_queries == 0 {
        0.0
    } else {
        per_query.iter().map(|(_, l)| l).sum::<f64>() / num_queries as f64
    };
    LossBreakdown {
        total,
        per_query,
        num_queries,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn targets_from_clusters() {
        let spans: Vec<Span> = (0..5).map(|i| Span::new(i, i)).collect();
        let gold = ClusterSet::new(vec![
            vec![spans[0], spans[2], spans[4]],
            vec![spans[1], Span::new(9, 9)],
        ]);
        let t = GoldTargets::new(&spans, &gold);
        assert_eq!(t.antecedents, vec![vec![], vec![], vec![0], vec![], vec![0, 2]]);
        assert!(t.includes_null(1));
        assert_eq!(t.restricted(4, &[2, 3]), vec![0]);
    }

    #[test]
    fn nll_cases() {
        assert_eq!(query_nll(&[], &[]), 0.0);
        assert!((query_nll(&[0.0], &[0]) - std::f64::consts::LN_2).abs() < 1e-15);
        // independent oracle: explicit softmax
        let s = [0.3, -1.2, 2.5];
        let z = 1.0 + s.iter().map(|v: &f64| v.exp()).sum::<f64>();
        let want = -((s[0].exp() + s[2].exp()) / z).ln();
        assert!((query_nll(&s, &[0, 2]) - want).abs() < 1e-14);
        assert!((query_nll(&s, &[]) - z.ln()).abs() < 1e-14);
        assert!(query_nll(&[800.0], &[]) > 799.0);
    }

    #[test]
    fn breakdown_mean() {
        let q = [Span::new(0, 0), Span::new(1, 1)];
        let t = GoldTargets {
            antecedents: vec![vec![], vec![0]],
        };
        let l = marginal_nll(&q, &[vec![], vec![0.0]], &t);
        assert_eq!(l.num_queries, 2);
        assert!((l.total - std::f64::consts::LN_2 / 2.0).abs() < 1e-15);
        assert!(marginal_nll(&[], &[], &GoldTargets { antecedents: vec![] }).total == 0.0);
    }
}
