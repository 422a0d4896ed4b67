//! Differentiable relation classifiers.
//!
//! Everything downstream (attacks, attribution) talks to a model through the
//! [`Victim`] trait: embedding lookup, logits from an embedding matrix, and the
//! analytic gradient of one logit with respect to every input row.

mod classifier;
mod linear;

pub use classifier::{train, Classifier, TrainConfig};
pub use linear::LinearBagModel;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::corpus::{insert_markers, Instance, MarkedSequence, Marker, Vocabulary};
use crate::error::{Error, Result};

/// Per-position input vectors for one marked sequence, plus the positions of
/// the two entity-open markers the encoder reads from.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub rows: Array2<f64>,
    pub head_marker: usize,
    pub tail_marker: usize,
}

impl EmbeddingMatrix {
    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    /// Same marker positions, rows scaled by `alpha` (path from the zero baseline).
    pub fn scaled(&self, alpha: f64) -> EmbeddingMatrix {
        EmbeddingMatrix {
            rows: &self.rows * alpha,
            head_marker: self.head_marker,
            tail_marker: self.tail_marker,
        }
    }

    /// All-zero matrix with the same shape and marker positions.
    pub fn zeros_like(&self) -> EmbeddingMatrix {
        self.scaled(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: String,
    pub label_index: usize,
    pub probabilities: Vec<f64>,
    pub confidence: f64,
}

impl Prediction {
    /// Argmax with ties going to the lower label index.
    pub fn from_probabilities(labels: &[String], probabilities: Vec<f64>) -> Self {
        let mut best = 0;
        for (i, &p) in probabilities.iter().enumerate() {
            if p > probabilities[best] {
                best = i;
            }
        }
        Prediction {
            label: labels[best].clone(),
            label_index: best,
            confidence: probabilities[best],
            probabilities,
        }
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &Array1<f64>) -> Array1<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp = logits.mapv(|z| (z - max).exp());
    let total = exp.sum();
    exp / total
}

/// A classifier that attacks and attribution can query.
pub trait Victim: Sync {
    fn vocab(&self) -> &Vocabulary;

    fn labels(&self) -> &[String];

    /// Embedding table, one row per vocabulary id.
    fn embedding_table(&self) -> &Array2<f64>;

    /// Pre-softmax scores for an embedded sequence.
    fn logits_from_embeddings(&self, e: &EmbeddingMatrix) -> Result<Array1<f64>>;

    /// ∂ logit[target] / ∂ rows, same shape as `e.rows`.
    fn input_gradient(&self, e: &EmbeddingMatrix, target: usize) -> Result<Array2<f64>>;

    fn dim(&self) -> usize {
        self.embedding_table().ncols()
    }

    fn label_index(&self, label: &str) -> Option<usize> {
        self.labels().iter().position(|l| l == label)
    }

    fn embed(&self, seq: &MarkedSequence) -> EmbeddingMatrix {
        let table = self.embedding_table();
        let ids = self.vocab().encode(seq);
        let mut rows = Array2::zeros((ids.len(), table.ncols()));
        for (mut row, id) in rows.rows_mut().into_iter().zip(&ids) {
            row.assign(&table.row(id.index()));
        }
        EmbeddingMatrix {
            rows,
            head_marker: seq.marker_position(Marker::HeadOpen),
            tail_marker: seq.marker_position(Marker::TailOpen),
        }
    }

    fn forward_from_embeddings(&self, e: &EmbeddingMatrix) -> Result<Array1<f64>> {
        Ok(softmax(&self.logits_from_embeddings(e)?))
    }

    fn predict(&self, seq: &MarkedSequence) -> Prediction {
        let probs = self
            .forward_from_embeddings(&self.embed(seq))
            .expect("embedding width always matches the table");
        Prediction::from_probabilities(self.labels(), probs.to_vec())
    }

    fn predict_instance(&self, inst: &Instance) -> Prediction {
        self.predict(&insert_markers(inst))
    }

    /// Gradient of the logit of a label given by name.
    fn input_gradient_for(&self, e: &EmbeddingMatrix, label: &str) -> Result<Array2<f64>> {
        let target = self
            .label_index(label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))?;
        self.input_gradient(e, target)
    }
}

pub(crate) fn check_width(e: &EmbeddingMatrix, dim: usize) -> Result<()> {
    if e.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: e.dim(),
        });
    }
    if e.is_empty() || e.head_marker >= e.len() || e.tail_marker >= e.len() {
        return Err(Error::DimensionMismatch {
            expected: e.head_marker.max(e.tail_marker) + 1,
            found: e.len(),
        });
    }
    Ok(())
}
