use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Instance, MarkedSequence, Marker, Origin};
use crate::error::{Error, Result};

/// Row index into an embedding table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TokenId(pub u32);

impl TokenId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

pub const PAD_TOKEN: &str = "[PAD]";
pub const UNK_TOKEN: &str = "[UNK]";

const RESERVED: [&str; 7] = [PAD_TOKEN, UNK_TOKEN, "[CLS]", "[E1]", "[/E1]", "[E2]", "[/E2]"];

/// Token/id mapping built from a training split.
///
/// Frequencies are kept for every training token, including the ones that
/// fell under `min_freq` and received no id, so "rare" and "never seen" stay
/// distinguishable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawVocabulary", into = "RawVocabulary")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    frequencies: BTreeMap<String, u64>,
    min_freq: u64,
}

#[derive(Serialize, Deserialize)]
struct RawVocabulary {
    tokens: Vec<String>,
    frequencies: BTreeMap<String, u64>,
    min_freq: u64,
}

impl From<RawVocabulary> for Vocabulary {
    fn from(raw: RawVocabulary) -> Self {
        let index = raw
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), TokenId(i as u32)))
            .collect();
        Vocabulary {
            tokens: raw.tokens,
            index,
            frequencies: raw.frequencies,
            min_freq: raw.min_freq,
        }
    }
}

impl From<Vocabulary> for RawVocabulary {
    fn from(v: Vocabulary) -> Self {
        RawVocabulary {
            tokens: v.tokens,
            frequencies: v.frequencies,
            min_freq: v.min_freq,
        }
    }
}

impl Vocabulary {
    pub const PAD: TokenId = TokenId(0);
    pub const UNK: TokenId = TokenId(1);

    /// Counts every training token and assigns ids to those seen at least
    /// `min_freq` times. Word ids follow the reserved block in lexical order.
    pub fn build(train: &[Instance], min_freq: u64) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        if min_freq == 0 {
            return Err(Error::Config("min_freq must be at least 1".into()));
        }
        let mut frequencies = BTreeMap::new();
        for inst in train {
            for tok in &inst.tokens {
                *frequencies.entry(tok.clone()).or_insert(0u64) += 1;
            }
        }
        let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        tokens.extend(
            frequencies
                .iter()
                .filter(|(t, &c)| c >= min_freq && !RESERVED.contains(&t.as_str()))
                .map(|(t, _)| t.clone()),
        );
        Ok(RawVocabulary {
            tokens,
            frequencies,
            min_freq,
        }
        .into())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn min_freq(&self) -> u64 {
        self.min_freq
    }

    /// Id for `token`, or [`Vocabulary::UNK`].
    pub fn id_of(&self, token: &str) -> TokenId {
        self.index.get(token).copied().unwrap_or(Self::UNK)
    }

    /// True when `token` has its own id.
    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token) && !RESERVED.contains(&token)
    }

    pub fn token_of(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id.index()).map(String::as_str)
    }

    /// Training-split frequency; zero for never-seen tokens.
    pub fn frequency(&self, token: &str) -> u64 {
        self.frequencies.get(token).copied().unwrap_or(0)
    }

    pub fn marker_id(marker: Marker) -> TokenId {
        match marker {
            Marker::Cls => TokenId(2),
            Marker::HeadOpen => TokenId(3),
            Marker::HeadClose => TokenId(4),
            Marker::TailOpen => TokenId(5),
            Marker::TailClose => TokenId(6),
        }
    }

    pub fn is_reserved(id: TokenId) -> bool {
        id.index() < RESERVED.len()
    }

    /// Ids of ordinary words, ascending.
    pub fn word_ids(&self) -> impl Iterator<Item = TokenId> + '_ {
        (RESERVED.len()..self.tokens.len()).map(|i| TokenId(i as u32))
    }

    /// Ids for a marked sequence; markers resolve by origin, never by spelling.
    pub fn encode(&self, seq: &MarkedSequence) -> Vec<TokenId> {
        seq.tokens
            .iter()
            .zip(&seq.origins)
            .map(|(tok, origin)| match origin {
                Origin::Marker(m) => Self::marker_id(*m),
                Origin::Word(_) => self.id_of(tok),
            })
            .collect()
    }

    /// SHA-256 over the id table, the frequency table and `min_freq`.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update([0u8]);
        }
        h.update([1u8]);
        for (t, c) in &self.frequencies {
            h.update(t.as_bytes());
            h.update([0u8]);
            h.update(c.to_le_bytes());
        }
        h.update(self.min_freq.to_le_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}
