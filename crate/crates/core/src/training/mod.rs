//! Loss, gradients, optimizer and the training loop.

mod adam;
mod backward;
mod config;
mod gradcheck;
mod loss;
mod precise;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::c2f::{self, C2fParams};
use crate::corpus::{ClusterSet, Document};
use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::inference::{self, PruneConfig};
use crate::matrix::Matrix;
use crate::metrics::{EvalReport, Evaluator};
use crate::params::ParamSet;
use crate::s2e::S2eParams;

pub use adam::{adam_step, AdamConfig, OptimizerState};
pub use backward::S2eForward;
pub use config::{HeadKind, TrainConfig};
pub use gradcheck::{
    compare, grad_check, grad_check_with, numeric_gradient, relative_error, GradCheckCase, GradCheckReport, TensorCheck,
};
pub use loss::{marginal_nll, query_nll, GoldTargets, LossBreakdown};
pub use precise::{precise_numeric_gradient, PRECISION};

/// A document paired with its token embeddings.
#[derive(Debug, Clone)]
pub struct Example {
    pub document: Document,
    pub embeddings: Matrix,
}

impl Example {
    pub fn new(document: Document, embeddings: EmbeddingMatrix) -> Result<Self> {
        if embeddings.values.rows() != document.len() {
            return Err(Error::Dimension(format!(
                "document {} has {} tokens but its embeddings have {} rows",
                document.doc_key,
                document.len(),
                embeddings.values.rows()
            )));
        }
        Ok(Example {
            document,
            embeddings: embeddings.values,
        })
    }

    pub fn len(&self) -> usize {
        self.document.len()
    }

    pub fn is_empty(&self) -> bool {
        self.document.is_empty()
    }

    pub fn speaker_ids(&self) -> Vec<usize> {
        let labels: Vec<Option<String>> = self.document.tokens.iter().map(|t| t.speaker.clone()).collect();
        c2f::speaker_ids(&labels)
    }
}

/// Greedy grouping in order: a batch is closed when the next document would
/// push its token count over `budget`. A document longer than the budget
/// forms its own batch.
pub fn token_batches(lengths: &[usize], budget: usize) -> Vec<Vec<usize>> {
    let mut batches: Vec<Vec<usize>> = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    let mut used = 0;
    for (i, &len) in lengths.iter().enumerate() {
        if !current.is_empty() && used + len > budget {
            batches.push(std::mem::take(&mut current));
            used = 0;
        }
        if len > budget {
            warn!("document {i} has {len} tokens, over the batch budget of {budget}; processing it alone");
        }
        current.push(i);
        used += len;
    }
    if !current.is_empty() {
        batches.push(current);
    }
    batches
}

/// s2e loss and gradient of one document.
pub fn s2e_document_gradient(example: &Example, params: &S2eParams, prune: &PruneConfig) -> Result<(f64, S2eParams)> {
    let doc = &example.document;
    let fwd = S2eForward::run(
        &example.embeddings,
        &doc.synthetic_mask(),
        &doc.gold_clusters,
        params,
        prune,
    )?;
    let loss = fwd.loss().total;
    Ok((loss, fwd.backward(&example.embeddings, params)))
}

/// Mean loss and mean gradient over a batch.
pub fn s2e_batch_gradient(batch: &[&Example], params: &S2eParams, prune: &PruneConfig) -> Result<(f64, S2eParams)> {
    let parts: Vec<(f64, S2eParams)> = batch
        .par_iter()
        .map(|ex| s2e_document_gradient(ex, params, prune))
        .collect::<Result<_>>()?;
    reduce_mean(parts, params)
}

fn reduce_mean<P: ParamSet>(parts: Vec<(f64, P)>, params: &P) -> Result<(f64, P)> {
    let count = parts.len().max(1) as f64;
    let mut grads = params.zeros_like();
    let mut loss = 0.0;
    for (l, g) in &parts {
        loss += l;
        grads.add_scaled(g, 1.0);
    }
    grads.scale(1.0 / count);
    Ok((loss / count, grads))
}

pub fn predict_s2e(example: &Example, params: &S2eParams, prune: &PruneConfig) -> Result<ClusterSet> {
    let scores = inference::score_document(&example.embeddings, &example.document.synthetic_mask(), params, prune)?;
    Ok(scores.decode())
}

fn c2f_scores(
    example: &Example,
    params: &C2fParams,
    prune: &PruneConfig,
    max_antecedents: usize,
) -> Result<c2f::C2fDocumentScores> {
    let doc = &example.document;
    c2f::score_document(
        &example.embeddings,
        &doc.synthetic_mask(),
        &example.speaker_ids(),
        doc.genre,
        params,
        prune,
        max_antecedents,
    )
}

pub fn predict_c2f(
    example: &Example,
    params: &C2fParams,
    prune: &PruneConfig,
    max_antecedents: usize,
) -> Result<ClusterSet> {
    Ok(c2f_scores(example, params, prune, max_antecedents)?.decode())
}

/// Mean per-query NLL of the c2f head on one document, including its
/// pruning decisions.
pub fn c2f_document_loss(
    example: &Example,
    params: &C2fParams,
    prune: &PruneConfig,
    max_antecedents: usize,
) -> Result<f64> {
    let scores = c2f_scores(example, params, prune, max_antecedents)?;
    let targets = GoldTargets::new(&scores.candidates.spans, &example.document.gold_clusters);
    let k = scores.candidates.k();
    let total: f64 = scores
        .antecedents
        .iter()
        .enumerate()
        .map(|(q, ants)| {
            let ids: Vec<usize> = ants.iter().map(|a| a.0).collect();
            let values: Vec<f64> = ants.iter().map(|a| a.1).collect();
            query_nll(&values, &targets.restricted(q, &ids))
        })
        .sum();
    Ok(if k == 0 { 0.0 } else { total / k as f64 })
}

pub fn c2f_batch_gradient(
    batch: &[&Example],
    params: &C2fParams,
    prune: &PruneConfig,
    max_antecedents: usize,
    h: f64,
) -> Result<(f64, C2fParams)> {
    let parts: Vec<(f64, C2fParams)> = batch
        .par_iter()
        .map(|ex| {
            let loss = c2f_document_loss(ex, params, prune, max_antecedents)?;
            let grads = numeric_gradient(params, h, |p| {
                c2f_document_loss(ex, p, prune, max_antecedents).unwrap_or(f64::NAN)
            });
            Ok((loss, grads))
        })
        .collect::<Result<_>>()?;
    reduce_mean(parts, params)
}

pub fn evaluate_s2e(examples: &[Example], params: &S2eParams, prune: &PruneConfig) -> Result<EvalReport> {
    let predictions: Vec<ClusterSet> = examples
        .par_iter()
        .map(|ex| predict_s2e(ex, params, prune))
        .collect::<Result<_>>()?;
    let mut ev = Evaluator::new();
    for (ex, pred) in examples.iter().zip(&predictions) {
        ev.add(&ex.document.gold_clusters, pred);
    }
    Ok(ev.report())
}

pub fn evaluate_c2f(
    examples: &[Example],
    params: &C2fParams,
    prune: &PruneConfig,
    max_antecedents: usize,
) -> Result<EvalReport> {
    let mut ev = Evaluator::new();
    for ex in examples {
        ev.add(
            &ex.document.gold_clusters,
            &predict_c2f(ex, params, prune, max_antecedents)?,
        );
    }
    Ok(ev.report())
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Optimizer steps taken so far.
    pub steps: usize,
    /// Mean batch loss over the epoch.
    pub train_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dev_conll_f1: Option<f64>,
}

impl EpochMetrics {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("metrics serialize")
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<P> {
    pub params: P,
    pub log: Vec<EpochMetrics>,
    pub steps: usize,
}

fn train_loop<P: ParamSet + Send + Sync>(
    train: &[Example],
    dev: Option<&[Example]>,
    config: &TrainConfig,
    init: P,
    batch_gradient: impl Fn(&[&Example], &P) -> Result<(f64, P)>,
    evaluate: impl Fn(&[Example], &P) -> Result<EvalReport>,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome<P>> {
    config.validate()?;
    let mut params = init;
    let mut state = OptimizerState::new(&params, config.adam());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = Vec::new();
    let mut steps = 0;
    let limit = config.max_steps.unwrap_or(usize::MAX);

    for epoch in 1..=config.epochs {
        if steps >= limit {
            break;
        }
        order.shuffle(&mut rng);
        let lengths: Vec<usize> = order.iter().map(|&i| train[i].len()).collect();
        let mut losses = Vec::new();
        for batch in token_batches(&lengths, config.token_budget) {
            if steps >= limit {
                break;
            }
            let docs: Vec<&Example> = batch.iter().map(|&b| &train[order[b]]).collect();
            let (loss, grads) = batch_gradient(&docs, &params)?;
            adam_step(&mut params, &grads, &mut state)?;
            losses.push(loss);
            steps += 1;
        }
        let dev_conll_f1 = match dev {
            Some(dev) if !dev.is_empty() => Some(evaluate(dev, &params)?.conll_f1),
            _ => None,
        };
        let metrics = EpochMetrics {
            epoch,
            steps,
            train_loss: losses.iter().sum::<f64>() / losses.len().max(1) as f64,
            dev_conll_f1,
        };
        on_epoch(&metrics);
        log.push(metrics);
    }
    Ok(TrainOutcome { params, log, steps })
}

/// Trains the s2e head from `init` on frozen embeddings.
pub fn train_s2e(
    train: &[Example],
    dev: Option<&[Example]>,
    config: &TrainConfig,
    init: S2eParams,
    on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome<S2eParams>> {
    let prune = config.prune();
    train_loop(
        train,
        dev,
        config,
        init,
        |batch, p| s2e_batch_gradient(batch, p, &prune),
        |dev, p| evaluate_s2e(dev, p, &prune),
        on_epoch,
    )
}

/// Finite-difference step used for c2f training gradients.
pub const C2F_NUMERIC_STEP: f64 = 1e-5;

/// Trains the c2f head with central-difference gradients. Slow; meant for
/// small comparisons only.
pub fn train_c2f(
    train: &[Example],
    dev: Option<&[Example]>,
    config: &TrainConfig,
    init: C2fParams,
    on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome<C2fParams>> {
    if !config.c2f_numeric_gradients {
        return Err(Error::Config(
            "training the c2f head needs c2f_numeric_gradients = true".into(),
        ));
    }
    let prune = config.prune();
    let k = config.c2f_max_antecedents;
    train_loop(
        train,
        dev,
        config,
        init,
        |batch, p| c2f_batch_gradient(batch, p, &prune, k, C2F_NUMERIC_STEP),
        |dev, p| evaluate_c2f(dev, p, &prune, k),
        on_epoch,
    )
}
