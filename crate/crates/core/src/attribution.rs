//! Integrated-gradients attribution over input embeddings.
//!
//! For a zero baseline the attribution of position `i` is
//!
//! ```text
//! IG(x_i) = (1/m) Σ_{j=1..m} ∇_{x_i} F((j/m)·x) ⊙ x_i
//! ```
//!
//! a right-endpoint Riemann sum along the straight path from the baseline to
//! the input. `F` is the pre-softmax score of the target label. A token's
//! salience is the norm of its IG vector.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::corpus::{MarkedSequence, Origin};
use crate::error::{Error, Result};
use crate::model::{EmbeddingMatrix, Prediction, Victim};

/// Default number of Riemann steps for the pipeline.
pub const DEFAULT_STEPS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    Zeros,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionSet {
    /// One IG vector per marked position.
    pub vectors: Array2<f64>,
    pub target: usize,
    pub steps: usize,
    pub baseline: Baseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    #[default]
    L2,
    L1,
}

/// Per-position salience for one marked sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SalienceProfile {
    /// Vector norms before normalisation.
    pub raw: Vec<f64>,
    /// `raw` divided by its maximum when `normalized`, otherwise `raw`.
    pub scores: Vec<f64>,
    pub normalized: bool,
    pub norm: Norm,
}

impl SalienceProfile {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Riemann-sum IG for an arbitrary differentiable scorer with a zero
/// baseline. `gradient` receives the scaled input `(j/m)·x`.
pub fn integrate_path<G>(x: &EmbeddingMatrix, steps: usize, mut gradient: G) -> Result<Array2<f64>>
where
    G: FnMut(&EmbeddingMatrix) -> Result<Array2<f64>>,
{
    if steps == 0 {
        return Err(Error::Config("integrated gradients needs at least one step".into()));
    }
    // Neumaier-compensated running sum, so a constant gradient averages back
    // to itself within a couple of ulp for any step count.
    let mut total = Array2::<f64>::zeros(x.rows.raw_dim());
    let mut carry = Array2::<f64>::zeros(x.rows.raw_dim());
    for j in 1..=steps {
        let alpha = j as f64 / steps as f64;
        let g = gradient(&x.scaled(alpha))?;
        Zip::from(&mut total).and(&mut carry).and(&g).for_each(|sum, c, &v| {
            let next = *sum + v;
            *c += if sum.abs() >= v.abs() {
                (*sum - next) + v
            } else {
                (v - next) + *sum
            };
            *sum = next;
        });
    }
    total += &carry;
    total /= steps as f64;
    Ok(total * &x.rows)
}

pub fn integrated_gradients<V: Victim + ?Sized>(
    victim: &V,
    seq: &MarkedSequence,
    target: usize,
    steps: usize,
) -> Result<AttributionSet> {
    if target >= victim.labels().len() {
        return Err(Error::UnknownLabel(format!("#{target}")));
    }
    let x = victim.embed(seq);
    let vectors = integrate_path(&x, steps, |xs| victim.input_gradient(xs, target))?;
    Ok(AttributionSet {
        vectors,
        target,
        steps,
        baseline: Baseline::Zeros,
    })
}

/// `|Σ IG − (F(x) − F(0))|` for the target logit.
pub fn completeness_gap<V: Victim + ?Sized>(
    victim: &V,
    seq: &MarkedSequence,
    target: usize,
    steps: usize,
) -> Result<f64> {
    let attr = integrated_gradients(victim, seq, target, steps)?;
    let x = victim.embed(seq);
    let fx = victim.logits_from_embeddings(&x)?[target];
    let fb = victim.logits_from_embeddings(&x.zeros_like())?[target];
    Ok((attr.vectors.sum() - (fx - fb)).abs())
}

pub fn salience_scores(attr: &AttributionSet, normalize: bool) -> SalienceProfile {
    salience_scores_with(attr, normalize, Norm::L2)
}

/// Norm of each IG vector, optionally divided by the sequence maximum.
/// An all-zero attribution stays all-zero.
pub fn salience_scores_with(attr: &AttributionSet, normalize: bool, norm: Norm) -> SalienceProfile {
    let raw: Vec<f64> = attr
        .vectors
        .rows()
        .into_iter()
        .map(|row| match norm {
            Norm::L2 => row.dot(&row).sqrt(),
            Norm::L1 => row.iter().map(|v| v.abs()).sum(),
        })
        .collect();
    let scores = if normalize {
        let max = raw.iter().copied().fold(0.0, f64::max);
        if max > 0.0 {
            raw.iter().map(|v| v / max).collect()
        } else {
            raw.clone()
        }
    } else {
        raw.clone()
    };
    SalienceProfile {
        raw,
        scores,
        normalized: normalize,
        norm,
    }
}

/// Prediction plus normalised salience toward the predicted label.
pub fn explain<V: Victim + ?Sized>(
    victim: &V,
    seq: &MarkedSequence,
    steps: usize,
    norm: Norm,
) -> Result<(Prediction, SalienceProfile)> {
    let pred = victim.predict(seq);
    let attr = integrated_gradients(victim, seq, pred.label_index, steps)?;
    Ok((pred, salience_scores_with(&attr, true, norm)))
}

// ---------------------------------------------------------------------------
// JSONL export
// ---------------------------------------------------------------------------

/// One token of an exported salience profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SalienceRow {
    pub sequence_id: String,
    pub position: usize,
    pub token: String,
    pub origin: Origin,
    pub raw: f64,
    pub normalized: f64,
}

pub fn salience_rows(sequence_id: &str, seq: &MarkedSequence, profile: &SalienceProfile) -> Vec<SalienceRow> {
    let max = profile.raw.iter().copied().fold(0.0, f64::max);
    seq.tokens
        .iter()
        .zip(&seq.origins)
        .zip(&profile.raw)
        .enumerate()
        .map(|(position, ((token, origin), &raw))| SalienceRow {
            sequence_id: sequence_id.to_string(),
            position,
            token: token.clone(),
            origin: *origin,
            raw,
            normalized: if max > 0.0 { raw / max } else { 0.0 },
        })
        .collect()
}

pub fn write_salience_jsonl(path: impl AsRef<Path>, rows: &[SalienceRow]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut w, row)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads exported rows back into per-sequence normalised profiles.
pub fn read_salience_jsonl(path: impl AsRef<Path>) -> Result<BTreeMap<String, SalienceProfile>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut grouped: BTreeMap<String, Vec<SalienceRow>> = BTreeMap::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: SalienceRow = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        grouped.entry(row.sequence_id.clone()).or_default().push(row);
    }
    Ok(grouped
        .into_iter()
        .map(|(id, mut rows)| {
            rows.sort_by_key(|r| r.position);
            let profile = SalienceProfile {
                raw: rows.iter().map(|r| r.raw).collect(),
                scores: rows.iter().map(|r| r.normalized).collect(),
                normalized: true,
                norm: Norm::L2,
            };
            (id, profile)
        })
        .collect())
}
