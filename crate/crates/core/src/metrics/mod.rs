//! Coreference evaluation: MUC, B³, CEAF-e, CoNLL F1 and mention F1.
//!
//! Every metric is computed from four counts so that a corpus score can be
//! micro-averaged by summing counts over documents. A ratio with a zero
//! denominator is taken to be 1.

mod hungarian;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{ClusterSet, Span};
use crate::matrix::Matrix;

pub use hungarian::{hungarian, Assignment};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn new(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Prf { precision, recall, f1 }
    }
}

/// Numerators and denominators of precision and recall.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Counts {
    pub precision_num: f64,
    pub precision_den: f64,
    pub recall_num: f64,
    pub recall_den: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        1.0
    } else {
        num / den
    }
}

impl Counts {
    pub fn prf(&self) -> Prf {
        Prf::new(
            ratio(self.precision_num, self.precision_den),
            ratio(self.recall_num, self.recall_den),
        )
    }

    pub fn add(&mut self, other: &Counts) {
        self.precision_num += other.precision_num;
        self.precision_den += other.precision_den;
        self.recall_num += other.recall_num;
        self.recall_den += other.recall_den;
    }
}

/// Recall-side MUC counts: `Σ(|k| − |partition of k by other|)`, `Σ(|k| − 1)`.
fn muc_side(keys: &ClusterSet, other: &ClusterSet) -> (f64, f64) {
    let owner = other.mention_map();
    let mut num = 0.0;
    let mut den = 0.0;
    for cluster in &keys.clusters {
        let mut parts = HashSet::new();
        let mut unmatched = 0;
        for m in cluster {
            match owner.get(m) {
                Some(id) => {
                    parts.insert(*id);
                }
                None => unmatched += 1,
            }
        }
        num += (cluster.len() - parts.len() - unmatched) as f64;
        den += (cluster.len() - 1) as f64;
    }
    (num, den)
}

pub fn muc_counts(gold: &ClusterSet, pred: &ClusterSet) -> Counts {
    let (recall_num, recall_den) = muc_side(gold, pred);
    let (precision_num, precision_den) = muc_side(pred, gold);
    Counts {
        precision_num,
        precision_den,
        recall_num,
        recall_den,
    }
}

pub fn muc(gold: &ClusterSet, pred: &ClusterSet) -> Prf {
    muc_counts(gold, pred).prf()
}

/// Recall-side B³ counts. A mention missing from `other` is compared
/// against its own singleton, except that an empty `other` earns nothing.
fn b_cubed_side(keys: &ClusterSet, other: &ClusterSet) -> (f64, f64) {
    if other.is_empty() {
        let mentions = keys.clusters.iter().map(Vec::len).sum::<usize>();
        return (0.0, mentions as f64);
    }
    let owner = other.mention_map();
    let other_sets: Vec<HashSet<Span>> = other.clusters.iter().map(|c| c.iter().copied().collect()).collect();
    let mut num = 0.0;
    let mut den = 0.0;
    for cluster in &keys.clusters {
        for m in cluster {
            let overlap = match owner.get(m) {
                Some(&id) => cluster.iter().filter(|s| other_sets[id].contains(s)).count(),
                None => 1,
            };
            num += overlap as f64 / cluster.len() as f64;
            den += 1.0;
        }
    }
    (num, den)
}

pub fn b_cubed_counts(gold: &ClusterSet, pred: &ClusterSet) -> Counts {
    let (recall_num, recall_den) = b_cubed_side(gold, pred);
    let (precision_num, precision_den) = b_cubed_side(pred, gold);
    Counts {
        precision_num,
        precision_den,
        recall_num,
        recall_den,
    }
}

pub fn b_cubed(gold: &ClusterSet, pred: &ClusterSet) -> Prf {
    b_cubed_counts(gold, pred).prf()
}

/// `φ4(K, R) = 2|K ∩ R| / (|K| + |R|)`
pub fn entity_similarity(key: &[Span], response: &[Span]) -> f64 {
    let key: HashSet<&Span> = key.iter().collect();
    let common = response.iter().filter(|s| key.contains(s)).count();
    2.0 * common as f64 / (key.len() + response.len()) as f64
}

pub fn ceaf_e_counts(gold: &ClusterSet, pred: &ClusterSet) -> Counts {
    let similarity = Matrix::from_fn(gold.len(), pred.len(), |i, j| {
        entity_similarity(&gold.clusters[i], &pred.clusters[j])
    });
    let total = hungarian(&similarity).total;
    Counts {
        precision_num: total,
        precision_den: pred.len() as f64,
        recall_num: total,
        recall_den: gold.len() as f64,
    }
}

pub fn ceaf_e(gold: &ClusterSet, pred: &ClusterSet) -> Prf {
    ceaf_e_counts(gold, pred).prf()
}

/// Mean of the MUC, B³ and CEAF-e F1 scores.
pub fn conll_f1(gold: &ClusterSet, pred: &ClusterSet) -> f64 {
    (muc(gold, pred).f1 + b_cubed(gold, pred).f1 + ceaf_e(gold, pred).f1) / 3.0
}

pub fn mention_counts(gold: &[Span], pred: &[Span]) -> Counts {
    let gold: HashSet<&Span> = gold.iter().collect();
    let pred: HashSet<&Span> = pred.iter().collect();
    let hits = pred.intersection(&gold).count() as f64;
    Counts {
        precision_num: hits,
        precision_den: pred.len() as f64,
        recall_num: hits,
        recall_den: gold.len() as f64,
    }
}

/// Exact-boundary mention detection.
pub fn mention_detection_f1(gold: &[Span], pred: &[Span]) -> Prf {
    mention_counts(gold, pred).prf()
}

/// Corpus-level report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub muc: Prf,
    pub b3: Prf,
    pub ceaf_e: Prf,
    pub conll_f1: f64,
    pub mention_f1: Prf,
}

/// Accumulates counts over documents and reports micro-averaged scores.
#[derive(Debug, Clone, Default)]
pub struct Evaluator {
    muc: Counts,
    b3: Counts,
    ceaf_e: Counts,
    mentions: Counts,
    documents: usize,
}

impl Evaluator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, gold: &ClusterSet, pred: &ClusterSet) {
        self.muc.add(&muc_counts(gold, pred));
        self.b3.add(&b_cubed_counts(gold, pred));
        self.ceaf_e.add(&ceaf_e_counts(gold, pred));
        let g: Vec<Span> = gold.mentions().collect();
        let p: Vec<Span> = pred.mentions().collect();
        self.mentions.add(&mention_counts(&g, &p));
        self.documents += 1;
    }

    pub fn documents(&self) -> usize {
        self.documents
    }

    pub fn report(&self) -> EvalReport {
        let muc = self.muc.prf();
        let b3 = self.b3.prf();
        let ceaf_e = self.ceaf_e.prf();
        EvalReport {
            muc,
            b3,
            ceaf_e,
            conll_f1: (muc.f1 + b3.f1 + ceaf_e.f1) / 3.0,
            mention_f1: self.mentions.prf(),
        }
    }
}
