//! Seeded synthetic relation corpus for desk-scale runs.
//!
//! Every non-`no_relation` sentence carries one cue word of its label
//! between the two entities; all other context words come from a shared
//! filler pool, so only cues (and an optional planted trigger) carry label
//! information. `no_relation` sentences have no cue. The lexicon maps cues
//! to cues of other labels and fillers to fillers, with some substitutes
//! that never occur in training.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Instance, Span, SynonymLexicon};
use crate::error::{Error, Result};

pub const NO_RELATION: &str = "no_relation";

const LABELS: [(&str, [&str; 4]); 12] = [
    (NO_RELATION, ["", "", "", ""]),
    ("per:parents", ["birth", "mother", "father", "daughter"]),
    ("per:spouse", ["wife", "husband", "wed", "bride"]),
    ("org:founded_by", ["founded", "established", "started", "created"]),
    ("per:employee_of", ["works", "employed", "hired", "staff"]),
    ("per:city_of_birth", ["native", "hometown", "raised", "grew"]),
    ("org:subsidiaries", ["subsidiary", "unit", "division", "owns"]),
    ("per:siblings", ["brother", "sister", "twin", "sibling"]),
    ("per:schools_attended", ["graduated", "studied", "alumnus", "attended"]),
    ("org:members", ["member", "joined", "affiliate", "belongs"]),
    ("per:title", ["president", "director", "chief", "editor"]),
    ("org:headquarters", ["based", "headquartered", "offices", "located"]),
];

/// Shared context words. Includes the words of the worked example sentence
/// so it is in-distribution for `no_relation`.
const FILLERS: [&str; 51] = [
    "the",
    "a",
    "of",
    "in",
    "and",
    "was",
    "is",
    "to",
    "with",
    "on",
    "for",
    "by",
    "at",
    "from",
    "that",
    "said",
    "also",
    "had",
    "give",
    "her",
    "look",
    "when",
    "she",
    "it",
    "film",
    "wore",
    "his",
    "their",
    "after",
    "year",
    "which",
    "has",
    "been",
    "while",
    "later",
    "then",
    "this",
    "its",
    "last",
    "new",
    "actress",
    "married",
    "1966",
    "1968",
    ",",
    ".",
    "``",
    "''",
    "rosemary's",
    "baby",
    "him",
];

const FIRST: [&str; 16] = [
    "mia", "frank", "vidal", "anna", "omar", "lena", "raj", "ines", "tom", "yuki", "carl", "nora", "li", "ada", "ivan",
    "zoe",
];
const LAST: [&str; 16] = [
    "farrow", "sinatra", "sassoon", "berg", "haddad", "costa", "patel", "moreau", "okafor", "tanaka", "weiss", "quinn",
    "zhang", "lovelace", "petrov", "hart",
];

const RARE_RATE: f64 = 0.15;

/// A token that takes the place of the cue word in most sentences of one
/// label.
#[derive(Debug, Clone, PartialEq)]
pub struct Trigger {
    pub token: String,
    pub label: String,
    /// Fraction of the label's training sentences that carry the token.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    /// Number of labels, 2 to 12, `no_relation` first.
    pub labels: usize,
    pub train_per_label: usize,
    pub test_per_label: usize,
    /// `no_relation` gets this many times the per-label count.
    pub no_relation_weight: usize,
    /// Probability that a lexicon entry also lists a never-seen substitute.
    pub ood_rate: f64,
    pub trigger: Option<Trigger>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 7,
            labels: 12,
            train_per_label: 60,
            test_per_label: 50,
            no_relation_weight: 3,
            ood_rate: 0.3,
            trigger: None,
        }
    }
}

impl SynthConfig {
    /// Default corpus with `trigger` planted into 95% of `label`'s sentences.
    pub fn with_trigger(token: &str, label: &str) -> Self {
        SynthConfig {
            trigger: Some(Trigger {
                token: token.into(),
                label: label.into(),
                rate: 0.95,
            }),
            ..SynthConfig::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(2..=LABELS.len()).contains(&self.labels) {
            return Err(Error::Config(format!("label count must be in 2..={}", LABELS.len())));
        }
        if self.train_per_label == 0 || self.no_relation_weight == 0 {
            return Err(Error::Config("per-label counts must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.ood_rate) {
            return Err(Error::Config("ood rate outside [0, 1]".into()));
        }
        if let Some(t) = &self.trigger {
            if !LABELS[..self.labels].iter().any(|(l, _)| *l == t.label) {
                return Err(Error::Config(format!("trigger label {} not generated", t.label)));
            }
            if !(0.0..=1.0).contains(&t.rate) {
                return Err(Error::Config("trigger rate outside [0, 1]".into()));
            }
            if vocabulary_words().contains(t.token.as_str()) {
                return Err(Error::Config(format!("trigger {} is already a corpus word", t.token)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub train: Vec<Instance>,
    pub test: Vec<Instance>,
    pub lexicon: SynonymLexicon,
}

fn vocabulary_words() -> BTreeSet<&'static str> {
    FILLERS
        .iter()
        .chain(LABELS.iter().flat_map(|(_, c)| c.iter()).filter(|c| !c.is_empty()))
        .chain(FIRST.iter())
        .chain(LAST.iter())
        .copied()
        .collect()
}

fn cues(label: usize) -> &'static [&'static str] {
    if LABELS[label].0 == NO_RELATION {
        &[]
    } else {
        &LABELS[label].1
    }
}

fn entity(rng: &mut ChaCha8Rng) -> Vec<String> {
    let first = FIRST.choose(rng).expect("non-empty").to_string();
    if rng.random_bool(0.6) {
        vec![first, LAST.choose(rng).expect("non-empty").to_string()]
    } else {
        vec![first]
    }
}

fn fillers(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> Vec<String> {
    let n = rng.random_range(lo..=hi);
    (0..n)
        .map(|_| FILLERS.choose(rng).expect("non-empty").to_string())
        .collect()
}

fn sentence(rng: &mut ChaCha8Rng, label: usize, trigger: Option<&str>) -> Instance {
    let head = entity(rng);
    let mut tail = entity(rng);
    while tail == head {
        tail = entity(rng);
    }
    let mut middle = fillers(rng, 1, 3);
    let cue = match trigger {
        Some(t) => Some(t),
        None => cues(label).choose(rng).copied(),
    };
    if let Some(cue) = cue {
        let at = rng.random_range(0..=middle.len());
        middle.insert(at, cue.to_string());
    }
    let suffix = fillers(rng, 1, 4);
    let mut prefix = fillers(rng, 0, 3);
    if rng.random_bool(RARE_RATE) {
        // one-off words train the unknown-token embedding once min_freq > 1
        let at = rng.random_range(0..=prefix.len());
        prefix.insert(at, format!("w{:05}", rng.random_range(0..100_000)));
    }

    let swapped = rng.random_bool(0.3);
    let (first, second) = if swapped { (&tail, &head) } else { (&head, &tail) };
    let mut tokens = prefix;
    let a = Span::new(tokens.len(), tokens.len() + first.len() - 1);
    tokens.extend(first.iter().cloned());
    tokens.extend(middle);
    let b = Span::new(tokens.len(), tokens.len() + second.len() - 1);
    tokens.extend(second.iter().cloned());
    tokens.extend(suffix);
    let (head_span, tail_span) = if swapped { (b, a) } else { (a, b) };
    Instance::new(tokens, head_span, tail_span, LABELS[label].0).expect("generated spans are valid")
}

fn split(config: &SynthConfig, rng: &mut ChaCha8Rng, per_label: usize) -> Vec<Instance> {
    let mut out = Vec::new();
    for (label, entry) in LABELS.iter().enumerate().take(config.labels) {
        let count = if entry.0 == NO_RELATION {
            per_label * config.no_relation_weight
        } else {
            per_label
        };
        for _ in 0..count {
            let trigger = config
                .trigger
                .as_ref()
                .filter(|t| t.label == entry.0 && rng.random_bool(t.rate))
                .map(|t| t.token.as_str());
            out.push(sentence(rng, label, trigger));
        }
    }
    out.shuffle(rng);
    out
}

/// Never-seen spelling variant of `word`.
fn ood_variant(word: &str) -> String {
    format!("{word}x")
}

fn lexicon(config: &SynthConfig, rng: &mut ChaCha8Rng) -> SynonymLexicon {
    let mut lex = SynonymLexicon::new();
    let all_cues: Vec<&str> = (0..config.labels).flat_map(|l| cues(l).iter().copied()).collect();
    let add = |lex: &mut SynonymLexicon, w: &str, s: &str, weight: f64| {
        lex.insert(w, s, (weight * 100.0).round() / 100.0)
            .expect("weights in range");
    };
    for label in 0..config.labels {
        for &cue in cues(label) {
            for _ in 0..3 {
                let other = all_cues.choose(rng).expect("non-empty");
                add(&mut lex, cue, other, rng.random_range(0.4..0.95));
            }
            for &f in FILLERS.choose_multiple(rng, 2) {
                add(&mut lex, cue, f, rng.random_range(0.4..0.95));
            }
            if rng.random_bool(config.ood_rate) {
                add(&mut lex, cue, &ood_variant(cue), rng.random_range(0.5..0.95));
            }
        }
    }
    for &f in &FILLERS {
        for &other in FILLERS.choose_multiple(rng, 2) {
            add(&mut lex, f, other, rng.random_range(0.4..0.95));
        }
        if rng.random_bool(0.5) {
            let cue = all_cues.choose(rng).expect("non-empty");
            add(&mut lex, f, cue, rng.random_range(0.4..0.95));
        }
        if rng.random_bool(config.ood_rate) {
            add(&mut lex, f, &ood_variant(f), rng.random_range(0.5..0.95));
        }
        if let Some(t) = &config.trigger {
            add(&mut lex, f, &t.token, 0.9);
        }
    }
    lex
}

/// Generates train and test splits plus a synonym lexicon.
pub fn generate(config: &SynthConfig) -> Result<SynthCorpus> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let train = split(config, &mut rng, config.train_per_label);
    let test = split(config, &mut rng, config.test_per_label);
    let lexicon = lexicon(config, &mut rng);
    Ok(SynthCorpus { train, test, lexicon })
}

/// The worked example: a `no_relation` sentence whose word "had" is a
/// single substitution away from a `per:parents` cue.
pub fn worked_example() -> Instance {
    let text = "actress mia farrow had vidal sassoon give her the look when she married frank sinatra in 1966 , \
                and she also wore it in her 1968 film `` rosemary's baby . ''";
    let tokens: Vec<String> = text.split_whitespace().map(str::to_string).collect();
    Instance::new(tokens, Span::new(1, 2), Span::new(4, 5), NO_RELATION).expect("static spans are valid")
}

/// The worked example with "had" replaced by "birth".
pub fn worked_example_adversarial() -> Vec<String> {
    let mut tokens = worked_example().tokens;
    tokens[3] = "birth".into();
    tokens
}
