//! Probability-weighted word saliency.
//!
//! For each context position `i`:
//! - saliency `S(i) = P(y|X) − P(y|X with x_i → [UNK])`
//! - best synonym `w*` maximises `ΔP(i) = P(y|X) − P(y|X with x_i → w)`
//!
//! Positions are attacked in decreasing `softmax(S)(i) · ΔP(i)`, one
//! substitution each, until the label flips or the budget runs out.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{finish, similarity, unchanged, AdversarialRecord, AttackBudget, Exhausted, Method, Oracle, Outcome};
use crate::corpus::{Instance, SynonymLexicon, UNK_TOKEN};
use crate::model::Victim;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PwwsCandidate {
    pub position: usize,
    pub saliency: f64,
    pub substitute: String,
    pub delta_p: f64,
    /// `softmax(S)(position) · delta_p`.
    pub score: f64,
}

fn swap(inst: &Instance, pos: usize, word: &str) -> Instance {
    let mut tokens = inst.tokens.clone();
    tokens[pos] = word.to_string();
    inst.with_tokens(tokens)
}

fn rank<V: Victim + ?Sized>(
    oracle: &mut Oracle<'_, V>,
    inst: &Instance,
    target: usize,
    p_orig: f64,
    lex: &SynonymLexicon,
) -> Result<Vec<PwwsCandidate>, Exhausted> {
    let positions = inst.context_positions();
    let mut saliency = Vec::with_capacity(positions.len());
    let mut best: Vec<Option<(String, f64)>> = Vec::with_capacity(positions.len());
    for &pos in &positions {
        let masked = oracle.predict(&swap(inst, pos, UNK_TOKEN))?;
        saliency.push(p_orig - masked.probabilities[target]);
        let mut top: Option<(String, f64)> = None;
        for syn in lex.lookup(&inst.tokens[pos]) {
            let pred = oracle.predict(&swap(inst, pos, &syn.word))?;
            let drop = p_orig - pred.probabilities[target];
            if top.as_ref().is_none_or(|(_, d)| drop > *d) {
                top = Some((syn.word.clone(), drop));
            }
        }
        best.push(top);
    }

    let max = saliency.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = saliency.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exp.iter().sum();

    let mut out: Vec<PwwsCandidate> = positions
        .iter()
        .zip(best)
        .enumerate()
        .filter_map(|(k, (&position, top))| {
            top.map(|(substitute, delta_p)| PwwsCandidate {
                position,
                saliency: saliency[k],
                substitute,
                delta_p,
                score: exp[k] / total * delta_p,
            })
        })
        .collect();
    out.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then(a.position.cmp(&b.position))
    });
    Ok(out)
}

/// Attack order for `inst`, computed against the model's current prediction.
/// Positions without synonyms are omitted.
pub fn pwws_ranking<V: Victim + ?Sized>(victim: &V, inst: &Instance, lex: &SynonymLexicon) -> Vec<PwwsCandidate> {
    let mut oracle = Oracle::unlimited(victim);
    let pred = oracle.predict(inst).expect("unlimited");
    let target = pred.label_index;
    rank(&mut oracle, inst, target, pred.probabilities[target], lex).expect("unlimited")
}

pub fn pwws<V: Victim + ?Sized>(
    victim: &V,
    inst: &Instance,
    lex: &SynonymLexicon,
    budget: &AttackBudget,
) -> AdversarialRecord {
    let mut oracle = Oracle::new(victim, budget.max_queries);
    let Ok(original) = oracle.predict(inst) else {
        let pred = victim.predict_instance(inst);
        return unchanged(victim, Method::Pwws, inst, pred, 0, budget);
    };
    let target = original.label_index;
    let max_edits = budget.max_edits(inst.context_positions().len());
    let order = match rank(&mut oracle, inst, target, original.probabilities[target], lex) {
        Ok(order) => order,
        Err(Exhausted) => {
            let used = oracle.used();
            return unchanged(victim, Method::Pwws, inst, original, used, budget);
        }
    };

    let mut current = inst.clone();
    let mut current_pred = original.clone();
    let mut edits = 0;
    for cand in order {
        if current_pred.label_index != target || edits >= max_edits {
            break;
        }
        if cand.delta_p <= 0.0 {
            continue;
        }
        let next = swap(&current, cand.position, &cand.substitute);
        if similarity(victim, &inst.tokens, &next.tokens) < budget.epsilon {
            continue;
        }
        let Ok(pred) = oracle.predict(&next) else {
            break;
        };
        current = next;
        current_pred = pred;
        edits += 1;
    }

    let outcome = Outcome {
        tokens: current.tokens,
        prediction: current_pred,
        queries: oracle.used(),
    };
    finish(victim, Method::Pwws, inst, original, outcome, budget)
}
