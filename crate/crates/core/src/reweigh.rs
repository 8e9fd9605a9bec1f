//! Class loss weights and reference binary cross-entropy.
//!
//! `w_c = (total instances) / (instances of c)`, counted over non-crowd
//! annotations. The weighted loss scales only the positive term:
//!
//! ```text
//! -(1/N) * sum_i [ w_c * y_i * ln(p_i) + (1 - y_i) * ln(1 - p_i) ]
//! ```
//!
//! [`Weighting::Symmetric`] also scales the negative term.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::coco::{CategoryId, DatasetIndex};
use crate::error::{Error, Result};

/// Probabilities are clamped to `[EPSILON, 1 - EPSILON]` before taking logs.
pub const EPSILON: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub weights: BTreeMap<CategoryId, f64>,
    pub source_counts: BTreeMap<CategoryId, usize>,
}

impl ClassWeights {
    /// Weights straight from instance counts; every count must be positive.
    pub fn from_counts(counts: BTreeMap<CategoryId, usize>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::domain("no categories to weigh"));
        }
        if let Some((c, _)) = counts.iter().find(|(_, &n)| n == 0) {
            return Err(Error::domain(format!("category {c} has no instances")));
        }
        let total: usize = counts.values().sum();
        let weights = counts.iter().map(|(&c, &n)| (c, total as f64 / n as f64)).collect();
        Ok(ClassWeights {
            weights,
            source_counts: counts,
        })
    }

    /// Every category weighted 1.
    pub fn unit(categories: impl IntoIterator<Item = CategoryId>) -> Self {
        let source_counts: BTreeMap<_, _> = categories.into_iter().map(|c| (c, 1)).collect();
        let weights = source_counts.keys().map(|&c| (c, 1.0)).collect();
        ClassWeights { weights, source_counts }
    }

    pub fn get(&self, c: CategoryId) -> Option<f64> {
        self.weights.get(&c).copied()
    }
}

pub fn class_weights(index: &DatasetIndex) -> Result<ClassWeights> {
    ClassWeights::from_counts(index.instance_counts())
}

/// One prediction: the true label, the predicted probability of the
/// positive class, and the category it scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossPair {
    pub positive: bool,
    pub p: f64,
    pub category: CategoryId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossBatch {
    pairs: Vec<LossPair>,
}

impl LossBatch {
    /// Rejects empty batches and probabilities outside `[0, 1]`.
    pub fn new(pairs: Vec<LossPair>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::domain("a loss batch needs at least one pair"));
        }
        if let Some(bad) = pairs.iter().find(|q| !(0.0..=1.0).contains(&q.p)) {
            return Err(Error::domain(format!("probability {} outside [0, 1]", bad.p)));
        }
        Ok(LossBatch { pairs })
    }

    pub fn pairs(&self) -> &[LossPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Weight on the positive term only.
    #[default]
    PositiveOnly,
    /// Weight on both terms.
    Symmetric,
}

fn clamp(p: f64) -> f64 {
    p.clamp(EPSILON, 1.0 - EPSILON)
}

fn weighted_mean(batch: &LossBatch, mut weight: impl FnMut(&LossPair) -> Result<(f64, f64)>) -> Result<f64> {
    let mut sum = 0.0;
    for pair in &batch.pairs {
        let (pos, neg) = weight(pair)?;
        let p = clamp(pair.p);
        sum += if pair.positive {
            pos * p.ln()
        } else {
            neg * (1.0 - p).ln()
        };
    }
    Ok(-sum / batch.pairs.len() as f64)
}

pub fn bce(batch: &LossBatch) -> f64 {
    weighted_mean(batch, |_| Ok((1.0, 1.0))).expect("unweighted loss has no failure path")
}

pub fn weighted_bce(batch: &LossBatch, weights: &ClassWeights, weighting: Weighting) -> Result<f64> {
    weighted_mean(batch, |pair| {
        let w = weights
            .get(pair.category)
            .ok_or_else(|| Error::domain(format!("no weight for category {}", pair.category)))?;
        Ok(match weighting {
            Weighting::PositiveOnly => (w, 1.0),
            Weighting::Symmetric => (w, w),
        })
    })
}
