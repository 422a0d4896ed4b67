//! Relating adversarial edits to salience, vocabulary and label statistics.
//!
//! - sample type: did the attack touch one of the `n` most salient context
//!   tokens of the original sentence?
//! - salience pairs: scores of each edited position before and after.
//! - salience histogram: token counts and edit ratios per salience bin.
//! - OOD tokens: introduced words with zero training frequency.
//! - spurious tokens: introduced words with high PMI toward the new label.

mod align;
mod cooccur;

pub use align::{align_tokens, EditOp, EditScript};
pub use cooccur::{spurious_score, CooccurrenceTable};

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::{AdversarialRecord, Method};
use crate::attribution::{integrated_gradients, salience_scores_with, Norm, SalienceProfile, DEFAULT_STEPS};
use crate::corpus::{insert_markers, Instance, MarkedSequence, Vocabulary};
use crate::error::{Error, Result};
use crate::model::Victim;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleType {
    /// At least one top-n salient context token was edited.
    Type1,
    Type2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    Substitute,
    Insert,
    Delete,
}

/// Salience at one edited position, original side and adversarial side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaliencePair {
    pub kind: PairKind,
    pub original: f64,
    pub adversarial: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpuriousToken {
    pub token: String,
    pub pmi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleDiagnosis {
    pub id: usize,
    pub method: Method,
    pub sample_type: SampleType,
    pub edit_count: usize,
    pub salience_pairs: Vec<SaliencePair>,
    pub ood_tokens: Vec<String>,
    /// Introduced in-vocabulary tokens with their PMI toward the adversarial label.
    pub spurious: Vec<SpuriousToken>,
    pub spurious_flag: bool,
    pub confidence_drop: f64,
}

impl SampleDiagnosis {
    pub fn is_ood(&self) -> bool {
        !self.ood_tokens.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisConfig {
    pub steps: usize,
    pub top_n: usize,
    pub pmi_threshold: f64,
    pub norm: Norm,
}

impl Default for DiagnosisConfig {
    fn default() -> Self {
        DiagnosisConfig {
            steps: DEFAULT_STEPS,
            top_n: 3,
            pmi_threshold: 2.0,
            norm: Norm::L2,
        }
    }
}

/// The `n` most salient context positions (source indices), highest first.
/// Markers and entity tokens never rank; ties go to the earlier position.
pub fn top_salient_positions(
    inst: &Instance,
    seq: &MarkedSequence,
    salience: &SalienceProfile,
    n: usize,
) -> Vec<usize> {
    let mut ranked: Vec<(usize, f64)> = seq
        .origins
        .iter()
        .enumerate()
        .filter_map(|(marked, o)| o.word().map(|p| (p, salience.scores[marked])))
        .filter(|(p, _)| !inst.is_entity(*p))
        .collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
    ranked.into_iter().take(n).map(|(p, _)| p).collect()
}

/// Type 1 iff an edited original position is among the top-`n` salient
/// context positions of the original sentence.
pub fn classify_sample(record: &AdversarialRecord, original_salience: &SalienceProfile, n: usize) -> SampleType {
    let seq = insert_markers(&record.original);
    let top: BTreeSet<usize> = top_salient_positions(&record.original, &seq, original_salience, n)
        .into_iter()
        .collect();
    if record.edits.touched_original().any(|p| top.contains(&p)) {
        SampleType::Type1
    } else {
        SampleType::Type2
    }
}

/// One pair per edit. Insertions read `(0, adv)`, deletions `(orig, 0)`.
pub fn perturbed_salience_pairs(
    record: &AdversarialRecord,
    original_salience: &SalienceProfile,
    adversarial_salience: &SalienceProfile,
) -> Vec<SaliencePair> {
    let orig_seq = insert_markers(&record.original);
    let adv_seq = insert_markers(&record.adversarial_instance());
    let orig_score = |p: usize| original_salience.scores[orig_seq.position_of_word(p).expect("source position")];
    let adv_score = |p: usize| adversarial_salience.scores[adv_seq.position_of_word(p).expect("adversarial position")];
    record
        .edits
        .ops
        .iter()
        .map(|op| match op {
            EditOp::Substitute { orig, adv, .. } => SaliencePair {
                kind: PairKind::Substitute,
                original: orig_score(*orig),
                adversarial: adv_score(*adv),
            },
            EditOp::Insert { adv, .. } => SaliencePair {
                kind: PairKind::Insert,
                original: 0.0,
                adversarial: adv_score(*adv),
            },
            EditOp::Delete { orig, .. } => SaliencePair {
                kind: PairKind::Delete,
                original: orig_score(*orig),
                adversarial: 0.0,
            },
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub index: usize,
    pub lower: f64,
    pub upper: f64,
    pub tokens: usize,
    pub perturbed: usize,
    /// `perturbed / tokens`, zero for an empty bin.
    pub ratio: f64,
}

/// Equal-width bins over normalised salience of original context tokens.
/// `items` pairs each record with the salience of its original sentence.
pub fn salience_histogram(items: &[(&AdversarialRecord, &SalienceProfile)], bins: usize) -> Result<Vec<HistogramBin>> {
    if bins < 2 {
        return Err(Error::Config("histogram needs at least two bins".into()));
    }
    let mut tokens = vec![0usize; bins];
    let mut perturbed = vec![0usize; bins];
    for (record, salience) in items {
        let seq = insert_markers(&record.original);
        let edited: BTreeSet<usize> = record.edits.touched_original().collect();
        for (marked, origin) in seq.origins.iter().enumerate() {
            let Some(p) = origin.word() else { continue };
            if record.original.is_entity(p) {
                continue;
            }
            let s = salience.scores[marked].clamp(0.0, 1.0);
            let b = ((s * bins as f64) as usize).min(bins - 1);
            tokens[b] += 1;
            if edited.contains(&p) {
                perturbed[b] += 1;
            }
        }
    }
    Ok((0..bins)
        .map(|b| HistogramBin {
            index: b,
            lower: b as f64 / bins as f64,
            upper: (b + 1) as f64 / bins as f64,
            tokens: tokens[b],
            perturbed: perturbed[b],
            ratio: if tokens[b] == 0 {
                0.0
            } else {
                perturbed[b] as f64 / tokens[b] as f64
            },
        })
        .collect())
}

/// Spearman rank correlation between bin index and perturbation ratio over
/// non-empty bins.
pub fn histogram_trend(bins: &[HistogramBin]) -> Option<f64> {
    let (x, y): (Vec<f64>, Vec<f64>) = bins
        .iter()
        .filter(|b| b.tokens > 0)
        .map(|b| (b.index as f64, b.ratio))
        .unzip();
    spearman(&x, &y)
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[idx[k]] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's rho with average ranks for ties; `None` when undefined.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Introduced tokens that never occurred in the training split.
pub fn detect_ood(record: &AdversarialRecord, vocab: &Vocabulary) -> Vec<String> {
    record
        .edits
        .introduced_tokens()
        .filter(|t| vocab.frequency(t) == 0)
        .map(str::to_string)
        .collect()
}

/// Adversarial confidence minus original confidence.
pub fn confidence_drop(record: &AdversarialRecord) -> f64 {
    record.adversarial_prediction.confidence - record.original_prediction.confidence
}

/// Introduced in-vocabulary tokens scored against the adversarial label.
pub fn spurious_tokens(record: &AdversarialRecord, table: &CooccurrenceTable) -> Vec<SpuriousToken> {
    let label = &record.adversarial_prediction.label;
    record
        .edits
        .introduced_tokens()
        .filter_map(|t| {
            spurious_score(table, t, label).map(|pmi| SpuriousToken {
                token: t.to_string(),
                pmi,
            })
        })
        .collect()
}

/// Full diagnosis of one record with the salience profiles it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnosed {
    pub diagnosis: SampleDiagnosis,
    pub original_salience: SalienceProfile,
    pub adversarial_salience: SalienceProfile,
}

/// Salience of each side is taken toward that side's predicted label.
pub fn diagnose_record<V: Victim + ?Sized>(
    victim: &V,
    record: &AdversarialRecord,
    table: &CooccurrenceTable,
    config: &DiagnosisConfig,
) -> Result<Diagnosed> {
    let orig_seq = insert_markers(&record.original);
    let adv_seq = insert_markers(&record.adversarial_instance());
    let orig_attr = integrated_gradients(victim, &orig_seq, record.original_prediction.label_index, config.steps)?;
    let adv_attr = integrated_gradients(
        victim,
        &adv_seq,
        record.adversarial_prediction.label_index,
        config.steps,
    )?;
    let original_salience = salience_scores_with(&orig_attr, true, config.norm);
    let adversarial_salience = salience_scores_with(&adv_attr, true, config.norm);

    let spurious = spurious_tokens(record, table);
    let diagnosis = SampleDiagnosis {
        id: record.id,
        method: record.method,
        sample_type: classify_sample(record, &original_salience, config.top_n),
        edit_count: record.edits.len(),
        salience_pairs: perturbed_salience_pairs(record, &original_salience, &adversarial_salience),
        ood_tokens: detect_ood(record, victim.vocab()),
        spurious_flag: spurious.iter().any(|s| s.pmi >= config.pmi_threshold),
        spurious,
        confidence_drop: confidence_drop(record),
    };
    Ok(Diagnosed {
        diagnosis,
        original_salience,
        adversarial_salience,
    })
}

/// Diagnoses every successful record, in input order.
pub fn diagnose_campaign<V: Victim + ?Sized>(
    victim: &V,
    records: &[AdversarialRecord],
    table: &CooccurrenceTable,
    config: &DiagnosisConfig,
) -> Result<Vec<Diagnosed>> {
    records
        .par_iter()
        .filter(|r| r.success)
        .map(|r| diagnose_record(victim, r, table, config))
        .collect()
}

pub fn write_diagnoses(path: impl AsRef<Path>, diagnoses: &[SampleDiagnosis]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for d in diagnoses {
        serde_json::to_writer(&mut w, d)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_diagnoses(path: impl AsRef<Path>) -> Result<Vec<SampleDiagnosis>> {
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
