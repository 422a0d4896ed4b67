use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{hotflip, pwws, textfooler, AdversarialRecord, AttackBudget, Method};
use crate::corpus::{Instance, SynonymLexicon};
use crate::error::Result;
use crate::model::Victim;

/// Outcome counts for one (model, method) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub method: Method,
    pub total: usize,
    pub correct: usize,
    pub successes: usize,
    /// Percent of correctly predicted instances turned into adversarial samples.
    pub success_rate: f64,
    pub budget: AttackBudget,
}

/// `100 · successes / correct`; zero when nothing was attacked.
pub fn success_rate(successes: usize, correct: usize) -> f64 {
    if correct == 0 {
        0.0
    } else {
        100.0 * successes as f64 / correct as f64
    }
}

/// Runs one attack on one instance and stamps the record with `id`.
pub fn attack_instance<V: Victim + ?Sized>(
    victim: &V,
    id: usize,
    inst: &Instance,
    method: Method,
    lex: &SynonymLexicon,
    budget: &AttackBudget,
) -> AdversarialRecord {
    let mut record = match method {
        Method::HotFlip => hotflip(victim, inst, budget),
        Method::Pwws => pwws(victim, inst, lex, budget),
        Method::TextFooler => textfooler(victim, inst, lex, budget),
    };
    record.id = id;
    record
}

/// Attacks every instance the model classifies correctly. Instance ids are
/// positions in `test_set`; records come back in input order.
pub fn run_attack_campaign<V: Victim + ?Sized>(
    victim: &V,
    test_set: &[Instance],
    method: Method,
    lex: &SynonymLexicon,
    budget: &AttackBudget,
) -> Result<(Vec<AdversarialRecord>, CampaignSummary)> {
    budget.validate()?;
    let records: Vec<AdversarialRecord> = test_set
        .par_iter()
        .enumerate()
        .filter_map(|(id, inst)| {
            let pred = victim.predict_instance(inst);
            (pred.label == inst.label).then(|| attack_instance(victim, id, inst, method, lex, budget))
        })
        .collect();
    let successes = records.iter().filter(|r| r.success).count();
    let summary = CampaignSummary {
        method,
        total: test_set.len(),
        correct: records.len(),
        successes,
        success_rate: success_rate(successes, records.len()),
        budget: *budget,
    };
    Ok((records, summary))
}
