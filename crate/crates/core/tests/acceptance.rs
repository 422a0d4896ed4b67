//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any hard criterion fails. Criterion 10 is reported only.
//!
//! Run alone with `cargo test --test acceptance`.

mod common;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use salient_adv::attack::{
    hotflip, pwws_ranking, similarity, textfooler_importance, AdversarialRecord, AttackBudget, Method,
};
use salient_adv::attribution::{completeness_gap, integrated_gradients, Norm, SalienceProfile};
use salient_adv::corpus::{insert_markers, Instance, Span, UNK_TOKEN};
use salient_adv::diagnosis::{
    align_tokens, classify_sample, spearman, CooccurrenceTable, EditOp, HistogramBin, SampleDiagnosis, SampleType,
};
use salient_adv::model::{softmax, Classifier, EmbeddingMatrix, Prediction, TrainConfig, Victim};
use salient_adv::pipeline::{campaign_histogram, desk_train_config, read_json, run_all, RunConfig, RunDir};
use salient_adv::report::{compute_stats, markdown, success_cell, RunInfo};
use salient_adv::synth::{generate, SynthConfig, SynthCorpus};

// Tolerances and sizes.
const GRAD_CASES: usize = 120;
const GRAD_STEP: f64 = 1e-4;
const GRAD_TOL: f64 = 1e-4;
const GRAD_BUDGET: Duration = Duration::from_secs(60);
const IG_LINEAR_CASES: usize = 100;
const IG_LINEAR_ULPS: f64 = 4.0;
const COMPLETENESS_INPUTS: usize = 100;
const COMPLETENESS_STEPS: usize = 300;
const COMPLETENESS_TOL: f64 = 1e-3;
const COMPLETENESS_REQUIRED: usize = 95;
const COMPLETENESS_ORACLE_STEPS: usize = 10_000;
const COMPLETENESS_ORACLE_INPUTS: usize = 20;
const MIN_ATTACKED: usize = 500;
const HOTFLIP_CASES: usize = 60;
const HOTFLIP_VOCAB: usize = 150;
/// Relative width within which two exact swap gains count as tied.
const HOTFLIP_TIE: f64 = 1e-12;
const RANKING_CASES: usize = 60;
const RANKING_VALUE_TOL: f64 = 1e-12;
const ALIGN_COST_PAIRS: usize = 1_000;
const ALIGN_ROUND_TRIP_PAIRS: usize = 10_000;
const CLASSIFY_RECORDS: usize = 500;
const TRIGGER_TOKEN: &str = "zorp";
const TRIGGER_LABEL: &str = "per:title";
const TRIGGER_MIN_RATE: f64 = 0.9;
const SPURIOUS_REQUIRED: f64 = 0.8;
const SPURIOUS_THETA: f64 = 2.0;
const PIPELINE_BUDGET: Duration = Duration::from_secs(600);
const TREND_MIN: f64 = 0.5;

struct Verdict {
    id: u8,
    name: &'static str,
    pass: bool,
    hard: bool,
    detail: String,
}

impl Verdict {
    fn print(&self) {
        let status = if self.pass { "PASS" } else { "FAIL" };
        let kind = if self.hard { "" } else { " (report only)" };
        println!("[{status}] {:02} {}{kind}: {}", self.id, self.name, self.detail);
    }
}

fn verdict(id: u8, name: &'static str, pass: bool, detail: String) -> Verdict {
    Verdict {
        id,
        name,
        pass,
        hard: true,
        detail,
    }
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn frobenius(a: &Array2<f64>) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

// ---------------------------------------------------------------------------
// 1. gradient check
// ---------------------------------------------------------------------------

fn criterion_gradients() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for case in 0..GRAD_CASES {
        let pool = common::words(rng.random_range(5..20));
        let k = rng.random_range(2..6);
        let config = TrainConfig {
            dim: rng.random_range(2..9),
            hidden: rng.random_range(2..9),
            embedding_std: rng.random_range(0.2..1.5),
            ..TrainConfig::default()
        };
        let model = Classifier::initialized(common::vocab_over(&pool), common::labels(k), config, case as u64);
        let inst = common::random_instance(&mut rng, &pool, 4..=12, "rel0");
        let mut e = model.embed(&insert_markers(&inst));
        // move away from table rows so the input is generic
        let jitter = Normal::new(0.0, 0.3).unwrap();
        e.rows.mapv_inplace(|x| x + jitter.sample(&mut rng));
        let target = rng.random_range(0..k);

        let analytic = model.input_gradient(&e, target).unwrap();
        let mut numeric = Array2::zeros(e.rows.raw_dim());
        for idx in 0..e.rows.len() {
            let (r, c) = (idx / e.rows.ncols(), idx % e.rows.ncols());
            let mut plus = e.clone();
            plus.rows[[r, c]] += GRAD_STEP;
            let mut minus = e.clone();
            minus.rows[[r, c]] -= GRAD_STEP;
            let fp = model.logits_from_embeddings(&plus).unwrap()[target];
            let fm = model.logits_from_embeddings(&minus).unwrap()[target];
            numeric[[r, c]] = (fp - fm) / (2.0 * GRAD_STEP);
        }
        let denom = frobenius(&analytic).max(frobenius(&numeric)).max(1e-12);
        worst = worst.max(frobenius(&(&analytic - &numeric)) / denom);
    }
    let elapsed = start.elapsed();
    verdict(
        1,
        "input gradients vs central differences",
        worst <= GRAD_TOL && elapsed < GRAD_BUDGET,
        format!(
            "{GRAD_CASES} cases, max relative error {worst:.2e} (tol {GRAD_TOL:.0e}), {:.1}s (limit {}s)",
            elapsed.as_secs_f64(),
            GRAD_BUDGET.as_secs()
        ),
    )
}

// ---------------------------------------------------------------------------
// 2. IG on linear scorers
// ---------------------------------------------------------------------------

fn criterion_ig_linear() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst_ulps = 0.0f64;
    let mut ok = true;
    for case in 0..IG_LINEAR_CASES {
        let pool = common::words(12);
        let victim = common::linear_victim(&pool, 3, rng.random_range(2..10), case as u64);
        let inst = common::random_instance(&mut rng, &pool, 3..=10, "rel0");
        let seq = insert_markers(&inst);
        let x = victim.embed(&seq);
        let target = rng.random_range(0..3);
        let steps = *[1usize, 2, 7, 50, 300].choose(&mut rng).unwrap();
        let attr = integrated_gradients(&victim, &seq, target, steps).unwrap();
        let n = seq.len() as f64;
        for ((r, c), &got) in attr.vectors.indexed_iter() {
            let expected = victim.weights()[[target, c]] / n * x.rows[[r, c]];
            // a few roundings: the compensated mean, the product, and the oracle's own w/n·x
            let tol = IG_LINEAR_ULPS * f64::EPSILON * expected.abs();
            if !approx::abs_diff_eq!(got, expected, epsilon = tol) {
                ok = false;
            }
            if expected != 0.0 {
                worst_ulps = worst_ulps.max((got - expected).abs() / (f64::EPSILON * expected.abs()));
            }
        }
    }
    // the worked case: w = (2, -1), x = (3, 4) over a single position
    let single = EmbeddingMatrix {
        rows: ndarray::array![[3.0, 4.0]],
        head_marker: 0,
        tail_marker: 0,
    };
    let w = ndarray::array![[2.0, -1.0]];
    let ig = salient_adv::attribution::integrate_path(&single, 17, |_| Ok(w.clone())).unwrap();
    let worked = ig == ndarray::array![[6.0, -4.0]];
    verdict(
        2,
        "integrated gradients exact on linear scorers",
        ok && worked,
        format!(
            "{IG_LINEAR_CASES} cases, max deviation {worst_ulps:.1} ulp (tol {IG_LINEAR_ULPS} ulp, any m); (2,-1)⊙(3,4) = {:?}",
            ig.row(0).to_vec()
        ),
    )
}

// ---------------------------------------------------------------------------
// desk campaign shared by 3, 4, 6, 10 and 12
// ---------------------------------------------------------------------------

struct Campaign {
    records: Vec<(Method, Vec<AdversarialRecord>)>,
    diagnoses: Vec<(Method, Vec<SampleDiagnosis>)>,
    histograms: Vec<(Method, Vec<HistogramBin>)>,
    elapsed: Duration,
}

fn desk_run(corpus: &SynthCorpus, config: &RunConfig, dir: &RunDir) -> (Classifier, Campaign) {
    let start = Instant::now();
    let (model, _) = run_all(&corpus.train, &corpus.test, &corpus.lexicon, config, dir).expect("desk run");
    let elapsed = start.elapsed();
    let mut campaign = Campaign {
        records: Vec::new(),
        diagnoses: Vec::new(),
        histograms: Vec::new(),
        elapsed,
    };
    for &m in &config.methods {
        let records = salient_adv::attack::read_records(dir.records(m)).unwrap();
        let diagnoses = salient_adv::diagnosis::read_diagnoses(dir.diagnoses(m)).unwrap();
        let salience = salient_adv::attribution::read_salience_jsonl(dir.salience(m)).unwrap();
        let profiles: Vec<&SalienceProfile> = records
            .iter()
            .filter(|r| r.success)
            .map(|r| &salience[&salient_adv::pipeline::salience_id(r.id)])
            .collect();
        campaign
            .histograms
            .push((m, campaign_histogram(&records, &profiles, config.bins).unwrap()));
        campaign.records.push((m, records));
        campaign.diagnoses.push((m, diagnoses));
    }
    (model, campaign)
}

// ---------------------------------------------------------------------------
// 3. IG completeness on the desk classifier
// ---------------------------------------------------------------------------

fn criterion_completeness(model: &Classifier, test: &[Instance]) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut picks: Vec<&Instance> = test.iter().collect();
    picks.shuffle(&mut rng);
    picks.truncate(COMPLETENESS_INPUTS);

    let mut gap_fine = Vec::new();
    let mut gap_coarse = Vec::new();
    for inst in &picks {
        let seq = insert_markers(inst);
        let target = model.predict(&seq).label_index;
        gap_fine.push(completeness_gap(model, &seq, target, COMPLETENESS_STEPS).unwrap());
        gap_coarse.push(completeness_gap(model, &seq, target, 1).unwrap());
    }
    // high-resolution Riemann sum as reference for the integral itself
    let mut oracle_agree = 0;
    for inst in picks.iter().take(COMPLETENESS_ORACLE_INPUTS) {
        let seq = insert_markers(inst);
        let target = model.predict(&seq).label_index;
        let fine = integrated_gradients(model, &seq, target, COMPLETENESS_STEPS)
            .unwrap()
            .vectors
            .sum();
        let oracle = integrated_gradients(model, &seq, target, COMPLETENESS_ORACLE_STEPS)
            .unwrap()
            .vectors
            .sum();
        let gap_oracle = completeness_gap(model, &seq, target, COMPLETENESS_ORACLE_STEPS).unwrap();
        if (fine - oracle).abs() <= COMPLETENESS_TOL && gap_oracle <= COMPLETENESS_TOL / 10.0 {
            oracle_agree += 1;
        }
    }
    let within = gap_fine.iter().filter(|g| **g <= COMPLETENESS_TOL).count();
    let (med_fine, med_coarse) = (median(&gap_fine), median(&gap_coarse));
    let max_fine = gap_fine.iter().copied().fold(0.0, f64::max);
    verdict(
        3,
        "integrated-gradients completeness",
        within >= COMPLETENESS_REQUIRED && med_fine < med_coarse && oracle_agree == COMPLETENESS_ORACLE_INPUTS,
        format!(
            "m={COMPLETENESS_STEPS}: {within}/{COMPLETENESS_INPUTS} within {COMPLETENESS_TOL:.0e} (need {COMPLETENESS_REQUIRED}), \
             max {max_fine:.2e}; median gap m={COMPLETENESS_STEPS} {med_fine:.2e} < m=1 {med_coarse:.2e}; \
             m={COMPLETENESS_ORACLE_STEPS} reference agrees on {oracle_agree}/{COMPLETENESS_ORACLE_INPUTS}"
        ),
    )
}

// ---------------------------------------------------------------------------
// 4. entity-aware constraint over the whole campaign
// ---------------------------------------------------------------------------

fn criterion_constraint(model: &Classifier, campaign: &Campaign, budget: &AttackBudget) -> Verdict {
    let mut attacked = 0;
    let mut successes = 0;
    let mut violations = Vec::new();
    for (m, records) in &campaign.records {
        for r in records {
            attacked += 1;
            let o = &r.original;
            let entity_ok = r.adversarial.len() == o.tokens.len()
                && (0..o.tokens.len())
                    .filter(|&p| o.head.contains(p) || o.tail.contains(p))
                    .all(|p| r.adversarial[p] == o.tokens[p]);
            if !entity_ok {
                violations.push(format!("{m} #{} entity span edited", r.id));
            }
            let permitted = (0..o.tokens.len())
                .filter(|&p| !o.head.contains(p) && !o.tail.contains(p))
                .count();
            let edited = (0..o.tokens.len())
                .filter(|&p| r.adversarial.get(p) != Some(&o.tokens[p]))
                .count();
            if edited > (budget.max_perturb * permitted as f64 - 1e-9).ceil() as usize || r.queries > budget.max_queries
            {
                violations.push(format!("{m} #{} over budget", r.id));
            }
            if !r.success {
                continue;
            }
            successes += 1;
            let adv_pred = model.predict_instance(&o.with_tokens(r.adversarial.clone()));
            let orig_pred = model.predict_instance(o);
            if adv_pred.label == orig_pred.label || adv_pred.label != r.adversarial_prediction.label {
                violations.push(format!("{m} #{} label not changed", r.id));
            }
            if similarity(model, &o.tokens, &r.adversarial) < budget.epsilon {
                violations.push(format!("{m} #{} similarity below epsilon", r.id));
            }
        }
    }
    let methods: BTreeSet<Method> = campaign.records.iter().map(|(m, _)| *m).collect();
    verdict(
        4,
        "entity-aware constraint on every sample",
        violations.is_empty() && attacked >= MIN_ATTACKED && methods.len() == 3,
        format!(
            "{attacked} attacked (need {MIN_ATTACKED}) over {} methods, {successes} successes, {} violations{}",
            methods.len(),
            violations.len(),
            violations.first().map(|v| format!(", first: {v}")).unwrap_or_default()
        ),
    )
}

// ---------------------------------------------------------------------------
// 5. HotFlip against exhaustive search on a linear victim
// ---------------------------------------------------------------------------

fn criterion_hotflip() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let pool = common::words(HOTFLIP_VOCAB - 7);
    let mut agree = 0;
    let mut first_disagreement = None;
    let budget = AttackBudget {
        max_perturb: 1e-3,
        epsilon: 0.0,
        ..AttackBudget::default()
    };
    for case in 0..HOTFLIP_CASES {
        let victim = common::linear_victim(&pool, 4, 8, 1000 + case as u64);
        assert!(victim.vocab().len() <= HOTFLIP_VOCAB);
        let probe = common::random_instance(&mut rng, &pool, 5..=10, "rel0");
        let predicted = victim.predict_instance(&probe).label;
        let inst = Instance::new(probe.tokens.clone(), probe.head, probe.tail, predicted.clone()).unwrap();
        let target = victim.label_index(&predicted).unwrap();

        // exhaustive: every permitted position and every word
        let base = victim.predict_instance(&inst);
        let base_logit = victim
            .logits_from_embeddings(&victim.embed(&insert_markers(&inst)))
            .unwrap()[target];
        let _ = base;
        let mut best: Option<(f64, usize, u32)> = None;
        for pos in inst.context_positions() {
            for id in victim.vocab().word_ids() {
                let word = victim.vocab().token_of(id).unwrap();
                if victim.vocab().id_of(&inst.tokens[pos]) == id {
                    continue;
                }
                let mut tokens = inst.tokens.clone();
                tokens[pos] = word.to_string();
                let swapped = inst.with_tokens(tokens);
                let logit = victim
                    .logits_from_embeddings(&victim.embed(&insert_markers(&swapped)))
                    .unwrap()[target];
                let gain = base_logit - logit;
                let better = match best {
                    None => true,
                    Some((g, _, _)) => gain > g + HOTFLIP_TIE * g.abs().max(1.0),
                };
                if better {
                    best = Some((gain, pos, id.0));
                }
            }
        }
        let (_, pos, id) = best.expect("instance has context positions");
        let expected_word = victim
            .vocab()
            .token_of(salient_adv::corpus::TokenId(id))
            .unwrap()
            .to_string();
        let record = hotflip(&victim, &inst, &budget);
        let got = record.edits.ops.first().and_then(|op| match op {
            EditOp::Substitute { orig, to, .. } => Some((*orig, to.clone())),
            _ => None,
        });
        if got == Some((pos, expected_word.clone())) {
            agree += 1;
        } else if first_disagreement.is_none() {
            first_disagreement = Some(format!("case {case}: got {got:?}, oracle ({pos}, {expected_word})"));
        }
    }
    verdict(
        5,
        "HotFlip first flip equals exhaustive best flip",
        agree == HOTFLIP_CASES,
        format!(
            "{agree}/{HOTFLIP_CASES} agree, vocab {HOTFLIP_VOCAB}{}",
            first_disagreement.map(|d| format!(", {d}")).unwrap_or_default()
        ),
    )
}

// ---------------------------------------------------------------------------
// 6. PWWS and TextFooler rankings against direct recomputation
// ---------------------------------------------------------------------------

fn criterion_rankings(model: &Classifier, corpus: &SynthCorpus) -> Verdict {
    let cases: Vec<&Instance> = corpus
        .test
        .iter()
        .filter(|i| model.predict_instance(i).label == i.label)
        .take(RANKING_CASES)
        .collect();
    let mut pwws_ok = 0;
    let mut tf_ok = 0;
    for inst in &cases {
        let p0 = model.predict_instance(inst);
        let y = p0.label_index;
        let prob = |i: &Instance| model.predict_instance(i).probabilities[y];
        let positions: Vec<usize> = (0..inst.tokens.len()).filter(|&p| !inst.is_entity(p)).collect();

        // PWWS oracle
        let saliency: Vec<f64> = positions
            .iter()
            .map(|&p| {
                let mut t = inst.tokens.clone();
                t[p] = UNK_TOKEN.to_string();
                p0.probabilities[y] - prob(&inst.with_tokens(t))
            })
            .collect();
        let weights = softmax(&ndarray::Array1::from(saliency.clone()));
        let mut oracle: Vec<(usize, String, f64)> = Vec::new();
        for (k, &p) in positions.iter().enumerate() {
            let mut best: Option<(String, f64)> = None;
            for syn in corpus.lexicon.lookup(&inst.tokens[p]) {
                let mut t = inst.tokens.clone();
                t[p] = syn.word.clone();
                let drop = p0.probabilities[y] - prob(&inst.with_tokens(t));
                if best.as_ref().is_none_or(|(_, d)| drop > *d) {
                    best = Some((syn.word.clone(), drop));
                }
            }
            if let Some((w, d)) = best {
                oracle.push((p, w, weights[k] * d));
            }
        }
        oracle.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
        let got = pwws_ranking(model, inst, &corpus.lexicon);
        let same = got.len() == oracle.len()
            && got
                .iter()
                .zip(&oracle)
                .all(|(g, o)| g.position == o.0 && g.substitute == o.1 && (g.score - o.2).abs() <= RANKING_VALUE_TOL);
        pwws_ok += usize::from(same);

        // TextFooler oracle
        let mut importance: Vec<(usize, f64)> = positions
            .iter()
            .map(|&p| {
                let mut t = inst.tokens.clone();
                t.remove(p);
                let shift = |s: Span| {
                    let f = |q: usize| if q > p { q - 1 } else { q };
                    Span::new(f(s.start), f(s.end))
                };
                let shorter = Instance::new(t, shift(inst.head), shift(inst.tail), inst.label.clone()).unwrap();
                (p, p0.probabilities[y] - prob(&shorter))
            })
            .collect();
        importance.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let got = textfooler_importance(model, inst);
        let same = got.len() == importance.len()
            && got
                .iter()
                .zip(&importance)
                .all(|(g, o)| g.0 == o.0 && (g.1 - o.1).abs() <= RANKING_VALUE_TOL);
        tf_ok += usize::from(same);
    }
    let n = cases.len();
    verdict(
        6,
        "PWWS and TextFooler rankings equal direct recomputation",
        n >= 50 && pwws_ok == n && tf_ok == n,
        format!("PWWS {pwws_ok}/{n}, TextFooler {tf_ok}/{n} (need >= 50 cases each)"),
    )
}

// ---------------------------------------------------------------------------
// 7. alignment optimality and round trip
// ---------------------------------------------------------------------------

fn levenshtein(a: &[String], b: &[String]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut row = vec![i + 1; b.len() + 1];
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            row[j + 1] = sub.min(prev[j + 1] + 1).min(row[j] + 1);
        }
        prev = row;
    }
    prev[b.len()]
}

fn random_tokens(rng: &mut ChaCha8Rng, alphabet: &[&str], max: usize) -> Vec<String> {
    let n = rng.random_range(1..=max);
    (0..n).map(|_| alphabet.choose(rng).unwrap().to_string()).collect()
}

fn criterion_alignment() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let alphabet = ["a", "b", "c", "d"];
    let mut cost_ok = 0;
    for _ in 0..ALIGN_COST_PAIRS {
        let a = random_tokens(&mut rng, &alphabet, 8);
        let b = random_tokens(&mut rng, &alphabet, 8);
        cost_ok += usize::from(align_tokens(&a, &b).len() == levenshtein(&a, &b));
    }
    let wide = ["a", "b", "c", "d", "e", "f", "g"];
    let mut trip_ok = 0;
    for _ in 0..ALIGN_ROUND_TRIP_PAIRS {
        let a = random_tokens(&mut rng, &wide, 12);
        let b = random_tokens(&mut rng, &wide, 12);
        let script = align_tokens(&a, &b);
        let touched: Vec<usize> = script.touched_original().collect();
        let distinct: BTreeSet<usize> = touched.iter().copied().collect();
        trip_ok += usize::from(script.apply(&a).as_ref() == Ok(&b) && distinct.len() == touched.len());
    }
    verdict(
        7,
        "alignment optimality and round trip",
        cost_ok == ALIGN_COST_PAIRS && trip_ok == ALIGN_ROUND_TRIP_PAIRS,
        format!(
            "cost = Levenshtein on {cost_ok}/{ALIGN_COST_PAIRS} pairs (len <= 8), \
             apply round trip on {trip_ok}/{ALIGN_ROUND_TRIP_PAIRS}"
        ),
    )
}

// ---------------------------------------------------------------------------
// 8. sample type against set intersection
// ---------------------------------------------------------------------------

fn fake_prediction(label: &str) -> Prediction {
    Prediction {
        label: label.into(),
        label_index: 0,
        probabilities: vec![1.0],
        confidence: 1.0,
    }
}

fn criterion_classify() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let pool = common::words(30);
    let mut checks = 0;
    let mut agree = 0;
    for id in 0..CLASSIFY_RECORDS {
        let inst = common::random_instance(&mut rng, &pool, 6..=14, "rel0");
        let mut adv = inst.tokens.clone();
        let context = inst.context_positions();
        let edits = rng.random_range(0..=3.min(context.len()));
        for &p in context.choose_multiple(&mut rng, edits) {
            adv[p] = format!("sub{}", rng.random_range(0..5));
        }
        let record = AdversarialRecord {
            id,
            method: Method::Pwws,
            edits: align_tokens(&inst.tokens, &adv),
            original: inst.clone(),
            adversarial: adv,
            original_prediction: fake_prediction("rel0"),
            adversarial_prediction: fake_prediction("rel1"),
            similarity: 1.0,
            queries: 0,
            success: true,
        };
        // coarse scores so ties are common; markers and entities often score high
        let seq = insert_markers(&inst);
        let scores: Vec<f64> = (0..seq.len()).map(|_| rng.random_range(0..=10) as f64 / 10.0).collect();
        let profile = SalienceProfile {
            raw: scores.clone(),
            scores: scores.clone(),
            normalized: true,
            norm: Norm::L2,
        };
        for n in [1, 3, 5] {
            let mut ranked: Vec<(usize, f64)> = seq
                .origins
                .iter()
                .enumerate()
                .filter_map(|(k, o)| o.word().map(|p| (p, scores[k])))
                .filter(|(p, _)| !inst.head.contains(*p) && !inst.tail.contains(*p))
                .collect();
            ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            let top: BTreeSet<usize> = ranked.iter().take(n).map(|(p, _)| *p).collect();
            let touched: BTreeSet<usize> = record
                .edits
                .ops
                .iter()
                .filter_map(|op| match op {
                    EditOp::Substitute { orig, .. } | EditOp::Delete { orig, .. } => Some(*orig),
                    EditOp::Insert { .. } => None,
                })
                .collect();
            let expected = if top.intersection(&touched).next().is_some() {
                SampleType::Type1
            } else {
                SampleType::Type2
            };
            checks += 1;
            agree += usize::from(classify_sample(&record, &profile, n) == expected);
        }
    }
    verdict(
        8,
        "sample type equals top-n intersection oracle",
        agree == checks,
        format!("{agree}/{checks} agree ({CLASSIFY_RECORDS} records, n in {{1,3,5}})"),
    )
}

// ---------------------------------------------------------------------------
// 9. planted spurious trigger
// ---------------------------------------------------------------------------

fn criterion_spurious(out: &Path) -> Verdict {
    let start = Instant::now();
    let corpus = generate(&SynthConfig::with_trigger(TRIGGER_TOKEN, TRIGGER_LABEL)).unwrap();
    let of_label: Vec<&Instance> = corpus.train.iter().filter(|i| i.label == TRIGGER_LABEL).collect();
    let carrying = of_label
        .iter()
        .filter(|i| i.tokens.iter().any(|t| t == TRIGGER_TOKEN))
        .count();
    let rate = carrying as f64 / of_label.len() as f64;

    // (a) exhaustive PMI over every training token for the trigger's label
    let table = CooccurrenceTable::build(&corpus.train);
    let trigger_pmi = table.pmi(TRIGGER_TOKEN, TRIGGER_LABEL).unwrap();
    let runner_up = table
        .tokens()
        .filter(|t| *t != TRIGGER_TOKEN)
        .filter_map(|t| table.pmi(t, TRIGGER_LABEL).map(|v| (t.to_string(), v)))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    let maximal = trigger_pmi > runner_up.1;

    // (b) full pipeline on the planted corpus
    let config = RunConfig {
        diagnosis: salient_adv::diagnosis::DiagnosisConfig {
            pmi_threshold: SPURIOUS_THETA,
            ..Default::default()
        },
        ..RunConfig::default()
    };
    let dir = RunDir::new(out.join("planted")).unwrap();
    run_all(&corpus.train, &corpus.test, &corpus.lexicon, &config, &dir).unwrap();
    let mut introducing = 0;
    let mut flagged = 0;
    for &m in &config.methods {
        let records = salient_adv::attack::read_records(dir.records(m)).unwrap();
        let diagnoses = salient_adv::diagnosis::read_diagnoses(dir.diagnoses(m)).unwrap();
        for (r, d) in records.iter().filter(|r| r.success).zip(&diagnoses) {
            if r.edits.introduced_tokens().any(|t| t == TRIGGER_TOKEN) {
                introducing += 1;
                flagged += usize::from(d.spurious_flag);
            }
        }
    }
    let elapsed = start.elapsed();
    let share = if introducing == 0 {
        0.0
    } else {
        flagged as f64 / introducing as f64
    };
    verdict(
        9,
        "planted spurious trigger recovered",
        rate >= TRIGGER_MIN_RATE
            && maximal
            && introducing > 0
            && share >= SPURIOUS_REQUIRED
            && elapsed < PIPELINE_BUDGET,
        format!(
            "trigger in {:.1}% of {TRIGGER_LABEL} sentences; PMI {trigger_pmi:.3} vs next best {:.3} ({}); \
             {flagged}/{introducing} trigger-introducing successes flagged at theta={SPURIOUS_THETA} \
             ({:.1}%, need {:.0}%); pipeline {:.1}s (limit {}s)",
            100.0 * rate,
            runner_up.1,
            runner_up.0,
            100.0 * share,
            100.0 * SPURIOUS_REQUIRED,
            elapsed.as_secs_f64(),
            PIPELINE_BUDGET.as_secs()
        ),
    )
}

// ---------------------------------------------------------------------------
// 10. salience trend (report only)
// ---------------------------------------------------------------------------

fn criterion_trend(campaign: &Campaign) -> Verdict {
    let bins = campaign.histograms[0].1.len();
    let mut tokens = vec![0usize; bins];
    let mut perturbed = vec![0usize; bins];
    let mut per_method = Vec::new();
    for (m, h) in &campaign.histograms {
        for b in h {
            tokens[b.index] += b.tokens;
            perturbed[b.index] += b.perturbed;
        }
        per_method.push(format!("{m} {}", fmt_opt(salient_adv::diagnosis::histogram_trend(h))));
    }
    let (x, y): (Vec<f64>, Vec<f64>) = (0..bins)
        .filter(|&b| tokens[b] > 0)
        .map(|b| (b as f64, perturbed[b] as f64 / tokens[b] as f64))
        .unzip();
    let rho = spearman(&x, &y);
    Verdict {
        id: 10,
        name: "perturbation ratio rises with salience",
        pass: rho.is_some_and(|r| r >= TREND_MIN),
        hard: false,
        detail: format!(
            "pooled Spearman {} over {} non-empty bins (target >= {TREND_MIN}); per method: {}",
            fmt_opt(rho),
            x.len(),
            per_method.join(", ")
        ),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".into(), |r| format!("{r:.3}"))
}

// ---------------------------------------------------------------------------
// 11. table arithmetic
// ---------------------------------------------------------------------------

fn criterion_arithmetic(campaign: &Campaign, dir: &RunDir) -> Verdict {
    let info = RunInfo {
        model: "model-a".into(),
        dataset: "counts".into(),
        method: Method::HotFlip,
        budget: AttackBudget::default(),
        steps: 50,
        top_n: 3,
        pmi_threshold: 2.0,
    };
    let mut cells = Vec::new();
    let mut ok = true;
    for (successes, correct, expected) in [
        (4_819, 55_193, "8.73"),
        (27_476, 99_008, "27.75"),
        (34_892, 99_008, "35.24"),
    ] {
        let inst = Instance::new(
            vec!["h".into(), "x".into(), "t".into()],
            Span::new(0, 0),
            Span::new(2, 2),
            "a",
        )
        .unwrap();
        let mut adv = inst.tokens.clone();
        adv[1] = "y".into();
        let edits = align_tokens(&inst.tokens, &adv);
        let mut records = Vec::with_capacity(successes);
        let mut diagnoses = Vec::with_capacity(successes);
        for id in 0..successes {
            records.push(AdversarialRecord {
                id,
                method: Method::HotFlip,
                original: inst.clone(),
                adversarial: adv.clone(),
                edits: edits.clone(),
                original_prediction: fake_prediction("a"),
                adversarial_prediction: fake_prediction("b"),
                similarity: 1.0,
                queries: 1,
                success: true,
            });
            diagnoses.push(SampleDiagnosis {
                id,
                method: Method::HotFlip,
                sample_type: SampleType::Type1,
                edit_count: 1,
                salience_pairs: vec![],
                ood_tokens: vec![],
                spurious: vec![],
                spurious_flag: false,
                confidence_drop: 0.0,
            });
        }
        let stats = compute_stats(&info, &records, &diagnoses, correct).unwrap();
        let rendered = format!("{:.2}", stats.success_rate);
        let table = markdown(std::slice::from_ref(&stats));
        ok &= rendered == expected
            && table.contains(&success_cell(&stats))
            && success_cell(&stats).ends_with(&format!("/{expected}%"));
        cells.push(format!("{}/{} -> {}%", successes, correct, rendered));
    }
    // the desk report's rates recompute from its own counts
    let stats: Vec<salient_adv::report::CampaignStats> = read_json(&dir.root().join("stats.json")).unwrap();
    let recount_ok = stats.iter().all(|s| {
        let successes = campaign
            .records
            .iter()
            .find(|(m, _)| *m == s.method)
            .map_or(0, |(_, r)| r.iter().filter(|r| r.success).count());
        s.adversarial == successes
            && format!("{:.2}", s.success_rate) == format!("{:.2}", 100.0 * successes as f64 / s.correct as f64)
    });
    verdict(
        11,
        "success-rate arithmetic",
        ok && recount_ok,
        format!(
            "{}; desk report rates recomputed: {}",
            cells.join(", "),
            if recount_ok { "match" } else { "mismatch" }
        ),
    )
}

// ---------------------------------------------------------------------------
// 12. end-to-end determinism
// ---------------------------------------------------------------------------

const REPORT_FILES: [&str; 6] = [
    "stats.json",
    "stats.csv",
    "edits.csv",
    "pairs.csv",
    "bins.csv",
    "report.md",
];

fn criterion_determinism(corpus: &SynthCorpus, config: &RunConfig, first: &RunDir, out: &Path) -> Verdict {
    let second = RunDir::new(out.join("desk-again")).unwrap();
    run_all(&corpus.train, &corpus.test, &corpus.lexicon, config, &second).unwrap();
    let mut compared = 0;
    let mut differing = Vec::new();
    let mut names: Vec<String> = REPORT_FILES.iter().map(|s| s.to_string()).collect();
    for m in &config.methods {
        names.push(format!("records-{m}.jsonl"));
        names.push(format!("diagnoses-{m}.jsonl"));
    }
    names.push("model.json".into());
    for name in &names {
        let a = fs::read(first.root().join(name)).unwrap();
        let b = fs::read(second.root().join(name)).unwrap();
        compared += 1;
        if a != b {
            differing.push(name.clone());
        }
    }
    verdict(
        12,
        "byte-identical end-to-end runs",
        differing.is_empty(),
        format!("{compared} files compared, {} differ {:?}", differing.len(), differing),
    )
}

fn main() {
    let out = tempfile::tempdir().expect("temp dir");
    let mut verdicts = vec![criterion_gradients(), criterion_ig_linear()];

    let corpus = generate(&SynthConfig::default()).unwrap();
    let config = RunConfig {
        train: desk_train_config(),
        ..RunConfig::default()
    };
    let desk_dir = RunDir::new(out.path().join("desk")).unwrap();
    let (model, campaign) = desk_run(&corpus, &config, &desk_dir);
    println!(
        "desk run: {} train / {} test instances, {:.1}s",
        corpus.train.len(),
        corpus.test.len(),
        campaign.elapsed.as_secs_f64()
    );

    verdicts.push(criterion_completeness(&model, &corpus.test));
    verdicts.push(criterion_constraint(&model, &campaign, &config.budget));
    verdicts.push(criterion_hotflip());
    verdicts.push(criterion_rankings(&model, &corpus));
    verdicts.push(criterion_alignment());
    verdicts.push(criterion_classify());
    verdicts.push(criterion_spurious(out.path()));
    verdicts.push(criterion_trend(&campaign));
    verdicts.push(criterion_arithmetic(&campaign, &desk_dir));
    verdicts.push(criterion_determinism(&corpus, &config, &desk_dir, out.path()));

    println!();
    for v in &verdicts {
        v.print();
    }
    let hard_failures = verdicts.iter().filter(|v| v.hard && !v.pass).count();
    println!(
        "\n{} of {} hard criteria passed",
        verdicts.iter().filter(|v| v.hard && v.pass).count(),
        verdicts.iter().filter(|v| v.hard).count()
    );
    if hard_failures > 0 {
        std::process::exit(1);
    }
}
