use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{check_width, EmbeddingMatrix, Victim};
use crate::corpus::Vocabulary;
use crate::error::{Error, Result};

/// `logits = W · mean(x) + b`.
///
/// Linear in every input row, so first-order attack scores and integrated
/// gradients are exact on it. Used as a reference victim.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearBagModel {
    vocab: Vocabulary,
    labels: Vec<String>,
    embeddings: Array2<f64>,
    weights: Array2<f64>,
    bias: Array1<f64>,
}

impl LinearBagModel {
    pub fn new(
        vocab: Vocabulary,
        labels: Vec<String>,
        embeddings: Array2<f64>,
        weights: Array2<f64>,
        bias: Array1<f64>,
    ) -> Result<Self> {
        if embeddings.nrows() != vocab.len() {
            return Err(Error::DimensionMismatch {
                expected: vocab.len(),
                found: embeddings.nrows(),
            });
        }
        if weights.dim() != (labels.len(), embeddings.ncols()) || bias.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: embeddings.ncols(),
                found: weights.ncols(),
            });
        }
        Ok(LinearBagModel {
            vocab,
            labels,
            embeddings,
            weights,
            bias,
        })
    }

    /// Standard-normal embeddings and weights, zero bias.
    pub fn random(vocab: Vocabulary, labels: Vec<String>, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let embeddings = Array2::from_shape_simple_fn((vocab.len(), dim), || normal.sample(&mut rng));
        let weights = Array2::from_shape_simple_fn((labels.len(), dim), || normal.sample(&mut rng));
        let bias = Array1::zeros(labels.len());
        LinearBagModel::new(vocab, labels, embeddings, weights, bias).expect("shapes agree by construction")
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }
}

impl Victim for LinearBagModel {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn labels(&self) -> &[String] {
        &self.labels
    }

    fn embedding_table(&self) -> &Array2<f64> {
        &self.embeddings
    }

    fn logits_from_embeddings(&self, e: &EmbeddingMatrix) -> Result<Array1<f64>> {
        check_width(e, self.embeddings.ncols())?;
        let mean = e.rows.mean_axis(Axis(0)).expect("non-empty");
        Ok(self.weights.dot(&mean) + &self.bias)
    }

    fn input_gradient(&self, e: &EmbeddingMatrix, target: usize) -> Result<Array2<f64>> {
        check_width(e, self.embeddings.ncols())?;
        let row = self.weights.row(target).mapv(|w| w / e.len() as f64);
        let mut grad = Array2::zeros(e.rows.raw_dim());
        for mut r in grad.rows_mut() {
            r.assign(&row);
        }
        Ok(grad)
    }
}
