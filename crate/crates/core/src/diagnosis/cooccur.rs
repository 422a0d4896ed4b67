use std::collections::{BTreeMap, BTreeSet};

use crate::corpus::Instance;

/// Sentence-level (token, label) co-occurrence counts over a training split.
///
/// A token counts once per sentence it appears in, so
/// `Σ_label count(token, label) == count(token)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CooccurrenceTable {
    labels: Vec<String>,
    label_counts: Vec<u64>,
    joint: BTreeMap<String, Vec<u64>>,
    total: u64,
}

impl CooccurrenceTable {
    pub fn build(train: &[Instance]) -> Self {
        let labels: Vec<String> = train
            .iter()
            .map(|i| i.label.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut label_counts = vec![0u64; labels.len()];
        let mut joint: BTreeMap<String, Vec<u64>> = BTreeMap::new();
        for inst in train {
            let l = labels.binary_search(&inst.label).expect("label collected above");
            label_counts[l] += 1;
            let distinct: BTreeSet<&String> = inst.tokens.iter().collect();
            for tok in distinct {
                joint.entry(tok.clone()).or_insert_with(|| vec![0; labels.len()])[l] += 1;
            }
        }
        CooccurrenceTable {
            labels,
            label_counts,
            joint,
            total: train.len() as u64,
        }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn label_count(&self, label: &str) -> u64 {
        self.label_index(label).map_or(0, |l| self.label_counts[l])
    }

    pub fn token_count(&self, token: &str) -> u64 {
        self.joint.get(token).map_or(0, |c| c.iter().sum())
    }

    pub fn count(&self, token: &str, label: &str) -> u64 {
        match (self.joint.get(token), self.label_index(label)) {
            (Some(c), Some(l)) => c[l],
            _ => 0,
        }
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> + '_ {
        self.joint.keys().map(String::as_str)
    }

    fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.binary_search_by(|l| l.as_str().cmp(label)).ok()
    }

    /// Add-one smoothed pointwise mutual information in nats:
    ///
    /// `log[ (c(t,l) + 1) · N / ((c(t) + K) · c(l)) ]`
    ///
    /// i.e. the log ratio of the smoothed `P(l | t)` to the label prior, with
    /// `K` the number of labels. `None` for tokens never seen in training or
    /// labels outside the table.
    pub fn pmi(&self, token: &str, label: &str) -> Option<f64> {
        let counts = self.joint.get(token)?;
        let l = self.label_index(label)?;
        let k = self.labels.len() as f64;
        let c_t: u64 = counts.iter().sum();
        let joint = counts[l] as f64 + 1.0;
        let cond = joint / (c_t as f64 + k);
        let prior = self.label_counts[l] as f64 / self.total as f64;
        Some((cond / prior).ln())
    }
}

/// PMI of `token` with `label`; `None` when the token is unseen in training.
pub fn spurious_score(table: &CooccurrenceTable, token: &str, label: &str) -> Option<f64> {
    table.pmi(token, label)
}
