//! Entity-aware adversarial attacks.
//!
//! An adversarial sample must change the predicted relation while keeping
//! its similarity to the original at or above `epsilon`, and it may never
//! touch a token inside the head or tail entity span. All attacks substitute
//! words in place on the unmarked sentence; markers are re-inserted before
//! every model query.

mod campaign;
mod hotflip;
mod pwws;
mod textfooler;

pub use campaign::{attack_instance, run_attack_campaign, success_rate, CampaignSummary};
pub use hotflip::hotflip;
pub use pwws::{pwws, pwws_ranking, PwwsCandidate};
pub use textfooler::{textfooler, textfooler_importance};

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::corpus::{insert_markers, Instance};
use crate::diagnosis::{align_tokens, EditScript};
use crate::error::{Error, Result};
use crate::model::{EmbeddingMatrix, Prediction, Victim};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    HotFlip,
    Pwws,
    TextFooler,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::HotFlip, Method::Pwws, Method::TextFooler];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::HotFlip => "hotflip",
            Method::Pwws => "pwws",
            Method::TextFooler => "textfooler",
        }
    }

    /// Display name used in report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            Method::HotFlip => "HotFlip",
            Method::Pwws => "PWWS",
            Method::TextFooler => "TextFooler",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "hotflip" => Ok(Method::HotFlip),
            "pwws" => Ok(Method::Pwws),
            "textfooler" => Ok(Method::TextFooler),
            other => Err(format!("unknown attack method {other:?}")),
        }
    }
}

/// Limits shared by every attack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackBudget {
    /// Largest fraction of non-entity tokens that may be edited, in (0, 1].
    pub max_perturb: f64,
    pub max_queries: usize,
    /// Minimum similarity between original and adversarial sentence.
    pub epsilon: f64,
    /// Lexicon weight floor for TextFooler candidates.
    pub min_synonym_weight: f64,
}

impl Default for AttackBudget {
    fn default() -> Self {
        AttackBudget {
            max_perturb: 0.4,
            max_queries: 5000,
            epsilon: 0.85,
            min_synonym_weight: 0.5,
        }
    }
}

impl AttackBudget {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_perturb > 0.0 && self.max_perturb <= 1.0) {
            return Err(Error::Config(format!(
                "max perturbation {} outside (0, 1]",
                self.max_perturb
            )));
        }
        if self.max_queries == 0 {
            return Err(Error::Config("query budget must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::Config(format!("epsilon {} outside [0, 1]", self.epsilon)));
        }
        if !(0.0..=1.0).contains(&self.min_synonym_weight) {
            return Err(Error::Config("synonym weight floor outside [0, 1]".into()));
        }
        Ok(())
    }

    /// `ceil(max_perturb × permitted)`.
    pub fn max_edits(&self, permitted: usize) -> usize {
        (self.max_perturb * permitted as f64 - 1e-9).ceil().max(0.0) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialRecord {
    pub id: usize,
    pub method: Method,
    pub original: Instance,
    pub adversarial: Vec<String>,
    pub edits: EditScript,
    pub original_prediction: Prediction,
    pub adversarial_prediction: Prediction,
    pub similarity: f64,
    pub queries: usize,
    pub success: bool,
}

impl AdversarialRecord {
    /// The adversarial sentence with the original entity spans and label.
    pub fn adversarial_instance(&self) -> Instance {
        self.original.with_tokens(self.adversarial.clone())
    }

    /// Every token inside the head and tail spans is unchanged.
    pub fn entities_intact(&self) -> bool {
        let o = &self.original;
        self.adversarial.len() == o.tokens.len()
            && [o.head, o.tail]
                .iter()
                .all(|s| (s.start..=s.end).all(|p| self.adversarial[p] == o.tokens[p]))
    }

    pub fn label_changed(&self) -> bool {
        self.adversarial_prediction.label != self.original_prediction.label
    }
}

/// Cosine similarity of the mean input embeddings of two sentences, clamped
/// to `[0, 1]`. Identical lists score exactly 1.
pub fn similarity<V: Victim + ?Sized>(victim: &V, original: &[String], adversarial: &[String]) -> f64 {
    if original == adversarial {
        return 1.0;
    }
    let a = mean_embedding(victim, original);
    let b = mean_embedding(victim, adversarial);
    let denom = (a.dot(&a) * b.dot(&b)).sqrt();
    if denom == 0.0 {
        return 0.0;
    }
    (a.dot(&b) / denom).clamp(0.0, 1.0)
}

fn mean_embedding<V: Victim + ?Sized>(victim: &V, tokens: &[String]) -> Array1<f64> {
    let table = victim.embedding_table();
    let vocab = victim.vocab();
    let mut acc = Array1::zeros(table.ncols());
    for t in tokens {
        acc += &table.row(vocab.id_of(t).index());
    }
    if !tokens.is_empty() {
        acc /= tokens.len() as f64;
    }
    acc
}

/// Query budget ran out.
#[derive(Debug)]
pub(crate) struct Exhausted;

/// Counts model calls against the budget.
pub(crate) struct Oracle<'a, V: ?Sized> {
    pub victim: &'a V,
    used: usize,
    limit: usize,
}

impl<'a, V: Victim + ?Sized> Oracle<'a, V> {
    pub fn new(victim: &'a V, limit: usize) -> Self {
        Oracle { victim, used: 0, limit }
    }

    pub fn unlimited(victim: &'a V) -> Self {
        Self::new(victim, usize::MAX)
    }

    pub fn used(&self) -> usize {
        self.used
    }

    fn charge(&mut self) -> std::result::Result<(), Exhausted> {
        if self.used >= self.limit {
            return Err(Exhausted);
        }
        self.used += 1;
        Ok(())
    }

    pub fn predict(&mut self, inst: &Instance) -> std::result::Result<Prediction, Exhausted> {
        self.charge()?;
        Ok(self.victim.predict_instance(inst))
    }

    pub fn gradient(
        &mut self,
        inst: &Instance,
        target: usize,
    ) -> std::result::Result<(EmbeddingMatrix, Array2<f64>), Exhausted> {
        self.charge()?;
        let seq = insert_markers(inst);
        let e = self.victim.embed(&seq);
        let g = self
            .victim
            .input_gradient(&e, target)
            .expect("embedding shape matches the victim");
        Ok((e, g))
    }
}

/// Assembles the record once an attack loop has stopped.
pub(crate) struct Outcome {
    pub tokens: Vec<String>,
    pub prediction: Prediction,
    pub queries: usize,
}

pub(crate) fn finish<V: Victim + ?Sized>(
    victim: &V,
    method: Method,
    inst: &Instance,
    original_prediction: Prediction,
    outcome: Outcome,
    budget: &AttackBudget,
) -> AdversarialRecord {
    let sim = similarity(victim, &inst.tokens, &outcome.tokens);
    let mut record = AdversarialRecord {
        id: 0,
        method,
        original: inst.clone(),
        edits: align_tokens(&inst.tokens, &outcome.tokens),
        adversarial: outcome.tokens,
        adversarial_prediction: outcome.prediction,
        original_prediction,
        similarity: sim,
        queries: outcome.queries,
        success: false,
    };
    record.success = record.label_changed() && sim >= budget.epsilon && record.entities_intact();
    record
}

/// Record with no edits, used when an attack cannot start.
pub(crate) fn unchanged<V: Victim + ?Sized>(
    victim: &V,
    method: Method,
    inst: &Instance,
    prediction: Prediction,
    queries: usize,
    budget: &AttackBudget,
) -> AdversarialRecord {
    let outcome = Outcome {
        tokens: inst.tokens.clone(),
        prediction: prediction.clone(),
        queries,
    };
    finish(victim, method, inst, prediction, outcome, budget)
}

pub fn write_records(path: impl AsRef<Path>, records: &[AdversarialRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<AdversarialRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
