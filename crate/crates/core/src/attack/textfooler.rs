//! TextFooler-style synonym substitution.
//!
//! Importance of a context token is the drop in the original label's
//! probability when the token is deleted. Positions are visited in
//! decreasing importance; at each one the admissible lexicon candidate
//! (weight floor, similarity ≥ epsilon) that minimises the label probability
//! is kept if it lowers that probability.

use std::cmp::Ordering;

use super::{finish, similarity, unchanged, AdversarialRecord, AttackBudget, Exhausted, Method, Oracle, Outcome};
use crate::corpus::{Instance, SynonymLexicon};
use crate::model::Victim;

fn rank<V: Victim + ?Sized>(
    oracle: &mut Oracle<'_, V>,
    inst: &Instance,
    target: usize,
    p_orig: f64,
) -> Result<Vec<(usize, f64)>, Exhausted> {
    let mut out = Vec::new();
    for pos in inst.context_positions() {
        let pred = oracle.predict(&inst.without_token(pos))?;
        out.push((pos, p_orig - pred.probabilities[target]));
    }
    out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
    Ok(out)
}

/// `(position, importance)` in attack order for the model's current prediction.
pub fn textfooler_importance<V: Victim + ?Sized>(victim: &V, inst: &Instance) -> Vec<(usize, f64)> {
    let mut oracle = Oracle::unlimited(victim);
    let pred = oracle.predict(inst).expect("unlimited");
    let target = pred.label_index;
    rank(&mut oracle, inst, target, pred.probabilities[target]).expect("unlimited")
}

pub fn textfooler<V: Victim + ?Sized>(
    victim: &V,
    inst: &Instance,
    lex: &SynonymLexicon,
    budget: &AttackBudget,
) -> AdversarialRecord {
    let mut oracle = Oracle::new(victim, budget.max_queries);
    let Ok(original) = oracle.predict(inst) else {
        let pred = victim.predict_instance(inst);
        return unchanged(victim, Method::TextFooler, inst, pred, 0, budget);
    };
    let target = original.label_index;
    let max_edits = budget.max_edits(inst.context_positions().len());
    let order = match rank(&mut oracle, inst, target, original.probabilities[target]) {
        Ok(order) => order,
        Err(Exhausted) => {
            let used = oracle.used();
            return unchanged(victim, Method::TextFooler, inst, original, used, budget);
        }
    };

    let mut current = inst.clone();
    let mut current_pred = original.clone();
    let mut edits = 0;
    'positions: for (pos, _) in order {
        if current_pred.label_index != target || edits >= max_edits {
            break;
        }
        let mut best = None;
        for syn in lex.lookup(&inst.tokens[pos]) {
            if syn.weight < budget.min_synonym_weight {
                continue;
            }
            let mut tokens = current.tokens.clone();
            tokens[pos] = syn.word.clone();
            if similarity(victim, &inst.tokens, &tokens) < budget.epsilon {
                continue;
            }
            let next = current.with_tokens(tokens);
            let Ok(pred) = oracle.predict(&next) else {
                break 'positions;
            };
            let p = pred.probabilities[target];
            if best.as_ref().is_none_or(|(_, _, bp)| p < *bp) {
                best = Some((next, pred, p));
            }
        }
        if let Some((next, pred, p)) = best {
            if p < current_pred.probabilities[target] {
                current = next;
                current_pred = pred;
                edits += 1;
            }
        }
    }

    let outcome = Outcome {
        tokens: current.tokens,
        prediction: current_pred,
        queries: oracle.used(),
    };
    finish(victim, Method::TextFooler, inst, original, outcome, budget)
}
