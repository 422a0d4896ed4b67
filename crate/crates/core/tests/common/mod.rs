#![allow(dead_code)]

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use salient_adv::corpus::{Instance, Span, Vocabulary};
use salient_adv::model::LinearBagModel;

pub fn words(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("tok{i:03}")).collect()
}

/// Random instance over `pool` with two disjoint single- or two-token spans.
pub fn random_instance(
    rng: &mut ChaCha8Rng,
    pool: &[String],
    len: std::ops::RangeInclusive<usize>,
    label: &str,
) -> Instance {
    let n = rng.random_range(len);
    let tokens: Vec<String> = (0..n).map(|_| pool.choose(rng).unwrap().clone()).collect();
    loop {
        let a_len = rng.random_range(1..=2);
        let b_len = rng.random_range(1..=2);
        let a = rng.random_range(0..=n - a_len);
        let b = rng.random_range(0..=n - b_len);
        let sa = Span::new(a, a + a_len - 1);
        let sb = Span::new(b, b + b_len - 1);
        if sa.end < sb.start || sb.end < sa.start {
            let (head, tail) = if rng.random_bool(0.5) { (sa, sb) } else { (sb, sa) };
            return Instance::new(tokens, head, tail, label).unwrap();
        }
    }
}

/// Vocabulary holding every word of `pool`.
pub fn vocab_over(pool: &[String]) -> Vocabulary {
    let inst = Instance::new(pool.to_vec(), Span::new(0, 0), Span::new(1, 1), "r").unwrap();
    Vocabulary::build(&[inst], 1).unwrap()
}

pub fn labels(k: usize) -> Vec<String> {
    (0..k).map(|i| format!("rel{i}")).collect()
}

pub fn linear_victim(pool: &[String], k: usize, dim: usize, seed: u64) -> LinearBagModel {
    LinearBagModel::random(vocab_over(pool), labels(k), dim, seed)
}
