//! Word-level HotFlip.
//!
//! Each step takes the gradient of the original label's logit at the current
//! sentence and scores every (position, word) swap by the first-order loss
//! change `-∇_{x_i} F_y · (e_v − e_i)`. The best swap that keeps similarity
//! above `epsilon` is applied; the loop ends on a label flip, when the edit
//! budget is spent, or when no admissible swap remains.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use ndarray::Array1;

use super::{finish, similarity, unchanged, AdversarialRecord, AttackBudget, Method, Oracle, Outcome};
use crate::corpus::{insert_markers, Instance, TokenId};
use crate::model::Victim;

struct Candidate {
    score: f64,
    position: usize,
    word: TokenId,
}

pub fn hotflip<V: Victim + ?Sized>(victim: &V, inst: &Instance, budget: &AttackBudget) -> AdversarialRecord {
    let mut oracle = Oracle::new(victim, budget.max_queries);
    let Ok(original) = oracle.predict(inst) else {
        let pred = victim.predict_instance(inst);
        return unchanged(victim, Method::HotFlip, inst, pred, 0, budget);
    };
    let target = original.label_index;
    let permitted = inst.context_positions();
    let max_edits = budget.max_edits(permitted.len());
    let vocab = victim.vocab();
    let table = victim.embedding_table();
    let words: Vec<TokenId> = vocab.word_ids().collect();

    let mut current = inst.clone();
    let mut current_pred = original.clone();
    let mut edited = BTreeSet::new();

    while current_pred.label_index == target && edited.len() < max_edits {
        let Ok((_, grad)) = oracle.gradient(&current, target) else {
            break;
        };
        let seq = insert_markers(&current);
        let mut candidates = Vec::new();
        for &pos in permitted.iter().filter(|p| !edited.contains(*p)) {
            let row = seq.position_of_word(pos).expect("word present in marked sequence");
            let g = grad.row(row);
            let cur_id = vocab.id_of(&current.tokens[pos]);
            let base = g.dot(&table.row(cur_id.index()));
            // loss = -F_y, so the gain of a swap is -(g·e_v − g·e_cur)
            let scores: Array1<f64> = words.iter().map(|v| base - g.dot(&table.row(v.index()))).collect();
            for (&word, &score) in words.iter().zip(scores.iter()) {
                if word != cur_id {
                    candidates.push(Candidate {
                        score,
                        position: pos,
                        word,
                    });
                }
            }
        }
        candidates.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(Ordering::Equal)
                .then(a.position.cmp(&b.position))
                .then(a.word.cmp(&b.word))
        });

        let mut applied = false;
        for c in &candidates {
            let mut tokens = current.tokens.clone();
            tokens[c.position] = vocab.token_of(c.word).expect("word id in range").to_string();
            if similarity(victim, &inst.tokens, &tokens) < budget.epsilon {
                continue;
            }
            let next = current.with_tokens(tokens);
            let Ok(pred) = oracle.predict(&next) else {
                break;
            };
            current = next;
            current_pred = pred;
            edited.insert(c.position);
            applied = true;
            break;
        }
        if !applied {
            break;
        }
    }

    let outcome = Outcome {
        tokens: current.tokens,
        prediction: current_pred,
        queries: oracle.used(),
    };
    finish(victim, Method::HotFlip, inst, original, outcome, budget)
}
