use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use ndarray::{s, Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{check_width, softmax, EmbeddingMatrix, Victim};
use crate::corpus::{insert_markers, Instance, Marker, TokenId, Vocabulary};
use crate::error::{Error, Result};

const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub dim: usize,
    pub hidden: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub min_freq: u64,
    /// Standard deviation of the initial embedding entries.
    pub embedding_std: f64,
    /// L2 penalty on the two dense layers.
    pub l2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 64,
            hidden: 64,
            learning_rate: 0.1,
            epochs: 30,
            batch_size: 16,
            min_freq: 1,
            embedding_std: 0.5,
            l2: 0.0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.epochs == 0 || self.dim == 0 || self.hidden == 0 || self.batch_size == 0 {
            return bad("epochs, dim, hidden and batch size must be positive");
        }
        if self.l2 < 0.0 || self.embedding_std < 0.0 {
            return bad("l2 and embedding_std must be non-negative");
        }
        Ok(())
    }
}

/// Mean-pool plus entity-marker readout, one tanh layer, softmax head.
///
/// The encoder input is `[mean(x); x[E1]; x[E2]]`, where `E1`/`E2` are the
/// positions of the head- and tail-open markers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    vocab: Vocabulary,
    labels: Vec<String>,
    config: TrainConfig,
    embeddings: Array2<f64>,
    w_hidden: Array2<f64>,
    b_hidden: Array1<f64>,
    w_out: Array2<f64>,
    b_out: Array1<f64>,
}

struct Forward {
    z: Array1<f64>,
    h: Array1<f64>,
    logits: Array1<f64>,
}

#[derive(Debug, Clone)]
struct Gradients {
    embeddings: Array2<f64>,
    w_hidden: Array2<f64>,
    b_hidden: Array1<f64>,
    w_out: Array2<f64>,
    b_out: Array1<f64>,
}

#[derive(Debug, Clone)]
struct Encoded {
    ids: Vec<TokenId>,
    head: usize,
    tail: usize,
    label: usize,
}

impl Classifier {
    /// All parameters zero; every input maps to the uniform distribution.
    pub fn zeros(vocab: Vocabulary, labels: Vec<String>, config: TrainConfig) -> Self {
        let (v, d, h, k) = (vocab.len(), config.dim, config.hidden, labels.len());
        Classifier {
            embeddings: Array2::zeros((v, d)),
            w_hidden: Array2::zeros((h, 3 * d)),
            b_hidden: Array1::zeros(h),
            w_out: Array2::zeros((k, h)),
            b_out: Array1::zeros(k),
            vocab,
            labels,
            config,
        }
    }

    /// Random initial parameters drawn from `seed`.
    pub fn initialized(vocab: Vocabulary, labels: Vec<String>, config: TrainConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c = Classifier::zeros(vocab, labels, config);
        let mut fill = |m: &mut Array2<f64>, std: f64| {
            let dist = Normal::new(0.0, std).expect("finite std");
            m.iter_mut().for_each(|x| *x = dist.sample(&mut rng));
        };
        let d = c.config.dim as f64;
        let h = c.config.hidden as f64;
        fill(&mut c.embeddings, c.config.embedding_std);
        fill(&mut c.w_hidden, (1.0 / (3.0 * d)).sqrt());
        fill(&mut c.w_out, (1.0 / h).sqrt());
        // padding row stays zero
        c.embeddings.row_mut(Vocabulary::PAD.index()).fill(0.0);
        c
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn vocab_fingerprint(&self) -> String {
        self.vocab.fingerprint()
    }

    /// Zeroes the output layer; used to probe degenerate gradients.
    pub fn clear_output_layer(&mut self) {
        self.w_out.fill(0.0);
        self.b_out.fill(0.0);
    }

    /// Every parameter matrix is finite.
    pub fn is_finite(&self) -> bool {
        self.embeddings.iter().all(|x| x.is_finite())
            && self.w_hidden.iter().all(|x| x.is_finite())
            && self.b_hidden.iter().all(|x| x.is_finite())
            && self.w_out.iter().all(|x| x.is_finite())
            && self.b_out.iter().all(|x| x.is_finite())
    }

    fn forward(&self, e: &EmbeddingMatrix) -> Forward {
        let d = self.config.dim;
        let mean = e.rows.mean_axis(Axis(0)).expect("non-empty sequence");
        let mut z = Array1::zeros(3 * d);
        z.slice_mut(s![..d]).assign(&mean);
        z.slice_mut(s![d..2 * d]).assign(&e.rows.row(e.head_marker));
        z.slice_mut(s![2 * d..]).assign(&e.rows.row(e.tail_marker));
        let h = (self.w_hidden.dot(&z) + &self.b_hidden).mapv(f64::tanh);
        let logits = self.w_out.dot(&h) + &self.b_out;
        Forward { z, h, logits }
    }

    /// Back-propagates `dlogits` to the encoder input `z`, returning the
    /// pre-activation gradient as well.
    fn backprop_hidden(&self, f: &Forward, dlogits: &Array1<f64>) -> (Array1<f64>, Array1<f64>) {
        let dh = self.w_out.t().dot(dlogits);
        let da = dh * f.h.mapv(|v| 1.0 - v * v);
        let dz = self.w_hidden.t().dot(&da);
        (da, dz)
    }

    fn encode(&self, inst: &Instance) -> Result<Encoded> {
        let seq = insert_markers(inst);
        let label = self
            .labels
            .iter()
            .position(|l| *l == inst.label)
            .ok_or_else(|| Error::UnknownLabel(inst.label.clone()))?;
        Ok(Encoded {
            ids: self.vocab.encode(&seq),
            head: seq.marker_position(Marker::HeadOpen),
            tail: seq.marker_position(Marker::TailOpen),
            label,
        })
    }

    fn embed_ids(&self, ex: &Encoded) -> EmbeddingMatrix {
        let mut rows = Array2::zeros((ex.ids.len(), self.config.dim));
        for (mut row, id) in rows.rows_mut().into_iter().zip(&ex.ids) {
            row.assign(&self.embeddings.row(id.index()));
        }
        EmbeddingMatrix {
            rows,
            head_marker: ex.head,
            tail_marker: ex.tail,
        }
    }

    /// Mean cross-entropy (plus L2 penalty) over `batch` and its gradient.
    fn loss_and_gradients(&self, batch: &[&Encoded]) -> (f64, Gradients) {
        let d = self.config.dim;
        let mut g = Gradients {
            embeddings: Array2::zeros(self.embeddings.raw_dim()),
            w_hidden: Array2::zeros(self.w_hidden.raw_dim()),
            b_hidden: Array1::zeros(self.b_hidden.len()),
            w_out: Array2::zeros(self.w_out.raw_dim()),
            b_out: Array1::zeros(self.b_out.len()),
        };
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        for ex in batch {
            let f = self.forward(&self.embed_ids(ex));
            let mut dl = softmax(&f.logits);
            loss -= dl[ex.label].ln();
            dl[ex.label] -= 1.0;
            dl *= scale;

            for (k, &dk) in dl.iter().enumerate() {
                g.w_out.row_mut(k).scaled_add(dk, &f.h);
            }
            g.b_out += &dl;
            let (da, dz) = self.backprop_hidden(&f, &dl);
            for (j, &dj) in da.iter().enumerate() {
                g.w_hidden.row_mut(j).scaled_add(dj, &f.z);
            }
            g.b_hidden += &da;

            let n = ex.ids.len() as f64;
            let dmean = dz.slice(s![..d]);
            for id in &ex.ids {
                g.embeddings.row_mut(id.index()).scaled_add(1.0 / n, &dmean);
            }
            g.embeddings
                .row_mut(ex.ids[ex.head].index())
                .scaled_add(1.0, &dz.slice(s![d..2 * d]));
            g.embeddings
                .row_mut(ex.ids[ex.tail].index())
                .scaled_add(1.0, &dz.slice(s![2 * d..]));
        }
        loss *= scale;
        let l2 = self.config.l2;
        if l2 > 0.0 {
            loss += 0.5 * l2 * (self.w_hidden.mapv(|x| x * x).sum() + self.w_out.mapv(|x| x * x).sum());
            g.w_hidden.scaled_add(l2, &self.w_hidden);
            g.w_out.scaled_add(l2, &self.w_out);
        }
        (loss, g)
    }

    fn apply(&mut self, g: &Gradients, lr: f64) {
        self.embeddings.scaled_add(-lr, &g.embeddings);
        self.w_hidden.scaled_add(-lr, &g.w_hidden);
        self.b_hidden.scaled_add(-lr, &g.b_hidden);
        self.w_out.scaled_add(-lr, &g.w_out);
        self.b_out.scaled_add(-lr, &g.b_out);
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = ModelFileRef {
            format_version: FORMAT_VERSION,
            vocab_hash: self.vocab.fingerprint(),
            model: self,
        };
        let json = serde_json::to_vec(&file)?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    /// Loads a model file and checks its embedded vocabulary against the
    /// recorded hash.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let file: ModelFile = serde_json::from_slice(&bytes)?;
        if file.format_version != FORMAT_VERSION {
            return Err(Error::FormatVersion(file.format_version));
        }
        let found = file.model.vocab.fingerprint();
        if found != file.vocab_hash {
            return Err(Error::VocabMismatch {
                expected: file.vocab_hash,
                found,
            });
        }
        if !file.model.shapes_consistent() {
            return Err(Error::Config("parameter shapes disagree with vocabulary/config".into()));
        }
        Ok(file.model)
    }

    /// Like [`Classifier::load`], additionally requiring `vocab` to match.
    pub fn load_with_vocab(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<Self> {
        let model = Self::load(path)?;
        let expected = model.vocab.fingerprint();
        let found = vocab.fingerprint();
        if expected != found {
            return Err(Error::VocabMismatch { expected, found });
        }
        Ok(model)
    }

    fn shapes_consistent(&self) -> bool {
        let (v, d, h, k) = (self.vocab.len(), self.config.dim, self.config.hidden, self.labels.len());
        self.embeddings.dim() == (v, d)
            && self.w_hidden.dim() == (h, 3 * d)
            && self.b_hidden.len() == h
            && self.w_out.dim() == (k, h)
            && self.b_out.len() == k
    }
}

#[derive(Serialize)]
struct ModelFileRef<'a> {
    format_version: u32,
    vocab_hash: String,
    model: &'a Classifier,
}

#[derive(Deserialize)]
struct ModelFile {
    format_version: u32,
    vocab_hash: String,
    model: Classifier,
}

impl Victim for Classifier {
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
        check_width(e, self.config.dim)?;
        Ok(self.forward(e).logits)
    }

    fn input_gradient(&self, e: &EmbeddingMatrix, target: usize) -> Result<Array2<f64>> {
        check_width(e, self.config.dim)?;
        if target >= self.labels.len() {
            return Err(Error::UnknownLabel(format!("#{target}")));
        }
        let d = self.config.dim;
        let f = self.forward(e);
        let mut onehot = Array1::zeros(self.labels.len());
        onehot[target] = 1.0;
        let (_, dz) = self.backprop_hidden(&f, &onehot);
        let n = e.len() as f64;
        let dmean = dz.slice(s![..d]).mapv(|v| v / n);
        let mut grad = Array2::zeros(e.rows.raw_dim());
        for mut row in grad.rows_mut() {
            row.assign(&dmean);
        }
        grad.row_mut(e.head_marker).scaled_add(1.0, &dz.slice(s![d..2 * d]));
        grad.row_mut(e.tail_marker).scaled_add(1.0, &dz.slice(s![2 * d..]));
        Ok(grad)
    }
}

/// Trains a classifier with plain minibatch gradient descent.
///
/// Labels are the sorted distinct labels of `train_set`. The run is fully
/// determined by `seed`: initialisation and per-epoch shuffling both draw
/// from one ChaCha8 stream.
pub fn train(train_set: &[Instance], config: &TrainConfig, seed: u64) -> Result<Classifier> {
    if train_set.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    config.validate()?;
    let vocab = Vocabulary::build(train_set, config.min_freq)?;
    let labels: Vec<String> = train_set
        .iter()
        .map(|i| i.label.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut model = Classifier::initialized(vocab, labels, config.clone(), seed);
    let examples = train_set.iter().map(|i| model.encode(i)).collect::<Result<Vec<_>>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed_5eed_5eed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for (batch_no, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&Encoded> = chunk.iter().map(|&i| &examples[i]).collect();
            let (loss, grads) = model.loss_and_gradients(&batch);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: batch_no });
            }
            model.apply(&grads, config.learning_rate);
        }
    }
    if !model.is_finite() {
        return Err(Error::NonFiniteLoss {
            epoch: config.epochs,
            batch: 0,
        });
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Span;

    fn inst(words: &[&str], label: &str) -> Instance {
        let n = words.len();
        Instance::new(
            words.iter().map(|w| w.to_string()).collect(),
            Span::new(0, 0),
            Span::new(n - 1, n - 1),
            label,
        )
        .unwrap()
    }

    fn tiny_set() -> Vec<Instance> {
        vec![
            inst(&["ann", "was", "born", "in", "paris"], "born_in"),
            inst(&["bob", "works", "for", "acme"], "works_for"),
            inst(&["cy", "born", "at", "rome"], "born_in"),
            inst(&["dee", "is", "employed", "by", "ibm"], "works_for"),
        ]
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            dim: 5,
            hidden: 4,
            l2: 0.01,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let data = tiny_set();
        let vocab = Vocabulary::build(&data, 1).unwrap();
        let labels = vec!["born_in".to_string(), "works_for".to_string()];
        let model = Classifier::initialized(vocab, labels, small_config(), 3);
        let examples: Vec<Encoded> = data.iter().map(|i| model.encode(i).unwrap()).collect();
        let batch: Vec<&Encoded> = examples.iter().collect();
        let (_, g) = model.loss_and_gradients(&batch);

        let h = 1e-5;
        let loss_at = |m: &Classifier| m.loss_and_gradients(&batch).0;
        let mut max_rel: f64 = 0.0;
        let mut check = |analytic: f64, perturb: &dyn Fn(&mut Classifier, f64)| {
            let mut plus = model.clone();
            perturb(&mut plus, h);
            let mut minus = model.clone();
            perturb(&mut minus, -h);
            let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
            let rel = (analytic - numeric).abs() / (analytic.abs().max(numeric.abs()).max(1e-6));
            max_rel = max_rel.max(rel);
        };
        for i in 0..model.w_hidden.nrows() {
            for j in 0..model.w_hidden.ncols() {
                check(g.w_hidden[[i, j]], &|m, dx| m.w_hidden[[i, j]] += dx);
            }
            check(g.b_hidden[i], &|m, dx| m.b_hidden[i] += dx);
        }
        for i in 0..model.w_out.nrows() {
            for j in 0..model.w_out.ncols() {
                check(g.w_out[[i, j]], &|m, dx| m.w_out[[i, j]] += dx);
            }
            check(g.b_out[i], &|m, dx| m.b_out[i] += dx);
        }
        for id in [2usize, 3, 5, 7, 9] {
            for j in 0..model.config.dim {
                check(g.embeddings[[id, j]], &|m, dx| m.embeddings[[id, j]] += dx);
            }
        }
        assert!(max_rel < 1e-5, "max relative error {max_rel}");
    }

    #[test]
    fn zero_model_is_uniform() {
        let vocab = Vocabulary::build(&tiny_set(), 1).unwrap();
        let labels: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let model = Classifier::zeros(vocab, labels, small_config());
        let p = model.predict_instance(&tiny_set()[0]);
        for v in &p.probabilities {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_train_set_is_an_error() {
        assert!(matches!(
            train(&[], &TrainConfig::default(), 0),
            Err(Error::EmptyTrainingSet)
        ));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&tiny_set(), &cfg, 0), Err(Error::Config(_))));
    }

    #[test]
    fn divergent_training_reports_non_finite_loss() {
        let cfg = TrainConfig {
            learning_rate: 1e300,
            embedding_std: 1e3,
            ..small_config()
        };
        assert!(matches!(train(&tiny_set(), &cfg, 0), Err(Error::NonFiniteLoss { .. })));
    }

    #[test]
    fn same_seed_gives_identical_parameters() {
        let a = train(&tiny_set(), &small_config(), 11).unwrap();
        let b = train(&tiny_set(), &small_config(), 11).unwrap();
        assert_eq!(a, b);
        let c = train(&tiny_set(), &small_config(), 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn save_load_round_trip_and_vocab_check() {
        let model = train(&tiny_set(), &small_config(), 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        model.save(&path).unwrap();
        let back = Classifier::load_with_vocab(&path, model.vocab()).unwrap();
        assert_eq!(back, model);

        let other = Vocabulary::build(&[inst(&["x", "y"], "z")], 1).unwrap();
        assert!(matches!(
            Classifier::load_with_vocab(&path, &other),
            Err(Error::VocabMismatch { .. })
        ));
    }

    #[test]
    fn tampered_vocab_hash_fails_to_load() {
        let model = train(&tiny_set(), &small_config(), 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        model.save(&path).unwrap();
        let mut v: serde_json::Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
        v["vocab_hash"] = serde_json::Value::String("00".into());
        std::fs::write(&path, serde_json::to_vec(&v).unwrap()).unwrap();
        assert!(matches!(Classifier::load(&path), Err(Error::VocabMismatch { .. })));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let model = train(&tiny_set(), &small_config(), 1).unwrap();
        let e = EmbeddingMatrix {
            rows: Array2::zeros((7, 3)),
            head_marker: 1,
            tail_marker: 4,
        };
        assert!(matches!(
            model.forward_from_embeddings(&e),
            Err(Error::DimensionMismatch { expected: 5, found: 3 })
        ));
    }
}
