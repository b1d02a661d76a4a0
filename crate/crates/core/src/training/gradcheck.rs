//! Central finite-difference gradient checking.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::corpus::{ClusterSet, Span};
use crate::error::Result;
use crate::inference::{score_document, PruneConfig};
use crate::matrix::Matrix;
use crate::params::ParamSet;
use crate::s2e::S2eParams;

use super::backward::S2eForward;
use super::precise::precise_numeric_gradient;

/// Central differences `(L(θ + h·e_i) − L(θ − h·e_i)) / 2h` for every coordinate.
pub fn numeric_gradient<P: ParamSet>(params: &P, h: f64, mut loss: impl FnMut(&P) -> f64) -> P {
    let mut grads = params.zeros_like();
    let mut probe = params.clone();
    let count = params.tensors().len();
    for t in 0..count {
        let len = params.tensors()[t].1.len();
        for i in 0..len {
            let original = params.tensors()[t].1.as_slice()[i];
            probe.tensors_mut()[t].1.as_mut_slice()[i] = original + h;
            let up = loss(&probe);
            probe.tensors_mut()[t].1.as_mut_slice()[i] = original - h;
            let down = loss(&probe);
            probe.tensors_mut()[t].1.as_mut_slice()[i] = original;
            grads.tensors_mut()[t].1.as_mut_slice()[i] = (up - down) / (2.0 * h);
        }
    }
    grads
}

/// `|a − b| / max(|a|, |b|, 1e-12)`
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TensorCheck {
    pub name: &'static str,
    pub max_relative_error: f64,
    /// Flat index of the worst coordinate.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub h: f64,
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn max_relative_error(&self) -> f64 {
        self.tensors.iter().fold(0.0, |m, t| m.max(t.max_relative_error))
    }

    pub fn failing(&self, tolerance: f64) -> Vec<&'static str> {
        self.tensors
            .iter()
            .filter(|t| t.max_relative_error > tolerance)
            .map(|t| t.name)
            .collect()
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.failing(tolerance).is_empty()
    }
}

pub fn compare<P: ParamSet>(analytic: &P, numeric: &P, h: f64) -> GradCheckReport {
    let tensors = analytic
        .tensors()
        .into_iter()
        .zip(numeric.tensors())
        .map(|((name, a), (_, n))| {
            let mut worst = TensorCheck {
                name,
                max_relative_error: 0.0,
                worst_index: 0,
                analytic: 0.0,
                numeric: 0.0,
            };
            for (i, (&av, &nv)) in a.as_slice().iter().zip(n.as_slice()).enumerate() {
                let err = relative_error(av, nv);
                if err > worst.max_relative_error {
                    worst = TensorCheck {
                        name,
                        max_relative_error: err,
                        worst_index: i,
                        analytic: av,
                        numeric: nv,
                    };
                }
            }
            worst
        })
        .collect();
    GradCheckReport { h, tensors }
}

/// Checks `analytic` against 128-bit central differences of the s2e loss
/// with the candidate list held fixed.
pub fn grad_check_with(
    x: &Matrix,
    candidates: &[Span],
    gold: &ClusterSet,
    params: &S2eParams,
    h: f64,
    analytic: impl FnOnce(&S2eForward) -> S2eParams,
) -> Result<GradCheckReport> {
    let fwd = S2eForward::with_candidates(x, candidates, gold, params)?;
    let analytic = analytic(&fwd);
    let numeric = precise_numeric_gradient(x, candidates, gold, params, h)?;
    Ok(compare(&analytic, &numeric, h))
}

/// Checks the hand-derived backward pass.
pub fn grad_check(
    x: &Matrix,
    candidates: &[Span],
    gold: &ClusterSet,
    params: &S2eParams,
    h: f64,
) -> Result<GradCheckReport> {
    grad_check_with(x, candidates, gold, params, h, |fwd| fwd.backward(x, params))
}

/// Random document for a gradient check: uniform embeddings, fresh
/// parameters, the candidates pruning retains, and gold clusters of two to
/// four mentions drawn from those candidates.
#[derive(Debug, Clone)]
pub struct GradCheckCase {
    pub x: Matrix,
    pub params: S2eParams,
    pub candidates: Vec<Span>,
    pub gold: ClusterSet,
}

impl GradCheckCase {
    pub fn random(seed: u64, n: usize, d: usize, head_dim: usize, prune: &PruneConfig) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Matrix::uniform(n, d, 1.0, &mut rng);
        let params = S2eParams::init_with(d, head_dim, &mut rng);
        let candidates = score_document(&x, &vec![false; n], &params, prune)?.candidates.spans;
        let mut pool = candidates.clone();
        pool.shuffle(&mut rng);
        let mut clusters = Vec::new();
        while pool.len() >= 2 {
            let size = rng.random_range(2..=pool.len().min(4));
            let rest = pool.split_off(size);
            clusters.push(std::mem::replace(&mut pool, rest));
        }
        Ok(GradCheckCase {
            x,
            params,
            candidates,
            gold: ClusterSet::new(clusters).canonical(),
        })
    }

    pub fn check(&self, h: f64) -> Result<GradCheckReport> {
        grad_check(&self.x, &self.candidates, &self.gold, &self.params, h)
    }
}
