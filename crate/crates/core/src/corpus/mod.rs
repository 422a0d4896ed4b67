//! Dataset ingestion and entity-marker insertion.
//!
//! Datasets are line-delimited JSON in the OpenNRE layout:
//!
//! ```text
//! {"token": ["Bill", "Gates", "founded", "Microsoft"],
//!  "h": {"pos": [0, 1]}, "t": {"pos": [3, 3]}, "relation": "founder"}
//! ```
//!
//! Both ends of a `pos` pair are inclusive token indices. Tokens are
//! lowercased on load; structural markers keep their upper-case spelling so
//! they can never collide with a corpus word.

mod lexicon;
mod vocab;

pub use lexicon::{load_synonyms, Synonym, SynonymLexicon};
pub use vocab::{TokenId, Vocabulary, PAD_TOKEN, UNK_TOKEN};

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inclusive token interval `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn contains(&self, pos: usize) -> bool {
        self.start <= pos && pos <= self.end
    }

    fn overlaps(&self, other: &Span) -> bool {
        self.start <= other.end && other.start <= self.end
    }
}

/// A tokenized sentence with its head and tail entity spans and relation label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub tokens: Vec<String>,
    pub head: Span,
    pub tail: Span,
    pub label: String,
}

impl Instance {
    /// Builds an instance, checking span and token invariants.
    pub fn new(
        tokens: Vec<String>,
        head: Span,
        tail: Span,
        label: impl Into<String>,
    ) -> std::result::Result<Self, String> {
        let inst = Instance {
            tokens,
            head,
            tail,
            label: label.into(),
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.tokens.is_empty() {
            return Err("token list is empty".into());
        }
        let n = self.tokens.len();
        for (name, span) in [("head", self.head), ("tail", self.tail)] {
            if span.start > span.end {
                return Err(format!("{name} span [{}, {}] is reversed", span.start, span.end));
            }
            if span.end >= n {
                return Err(format!(
                    "{name} span [{}, {}] out of range for {n} tokens",
                    span.start, span.end
                ));
            }
        }
        if self.head.overlaps(&self.tail) {
            return Err("head and tail spans overlap".into());
        }
        Ok(())
    }

    /// True when `pos` lies inside either entity span.
    pub fn is_entity(&self, pos: usize) -> bool {
        self.head.contains(pos) || self.tail.contains(pos)
    }

    /// Non-entity token positions, in sentence order.
    pub fn context_positions(&self) -> Vec<usize> {
        (0..self.tokens.len()).filter(|&p| !self.is_entity(p)).collect()
    }

    /// Same spans and label over a replacement token list of equal length.
    pub fn with_tokens(&self, tokens: Vec<String>) -> Instance {
        debug_assert_eq!(tokens.len(), self.tokens.len());
        Instance {
            tokens,
            head: self.head,
            tail: self.tail,
            label: self.label.clone(),
        }
    }

    /// Copy with token `pos` removed and spans shifted. `pos` must be a
    /// context position.
    pub fn without_token(&self, pos: usize) -> Instance {
        debug_assert!(!self.is_entity(pos));
        let shift = |s: Span| {
            if s.start > pos {
                Span::new(s.start - 1, s.end - 1)
            } else {
                s
            }
        };
        let mut tokens = self.tokens.clone();
        tokens.remove(pos);
        Instance {
            tokens,
            head: shift(self.head),
            tail: shift(self.tail),
            label: self.label.clone(),
        }
    }
}

#[derive(Deserialize, Serialize)]
struct RawEntity {
    pos: [usize; 2],
}

#[derive(Deserialize, Serialize)]
struct RawInstance {
    token: Vec<String>,
    h: RawEntity,
    t: RawEntity,
    relation: String,
}

/// Which portion of a dataset a file holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Parses one JSONL line into an [`Instance`]; `line` is 1-based for messages.
pub fn parse_instance(text: &str, line: usize) -> Result<Instance> {
    let raw: RawInstance = serde_json::from_str(text).map_err(|e| Error::Parse {
        line,
        message: e.to_string(),
    })?;
    let tokens = raw.token.iter().map(|t| t.to_lowercase()).collect();
    Instance::new(
        tokens,
        Span::new(raw.h.pos[0], raw.h.pos[1]),
        Span::new(raw.t.pos[0], raw.t.pos[1]),
        raw.relation,
    )
    .map_err(|message| Error::InvalidInstance { line, message })
}

/// Loads a JSONL dataset. Blank lines are skipped; order is preserved.
///
/// The split tag does not change parsing. It is accepted so call sites read
/// the same as the pipeline stages that consume them.
pub fn load_dataset(path: impl AsRef<Path>, _split: Split) -> Result<Vec<Instance>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_instance(&line, idx + 1)?);
    }
    Ok(out)
}

/// Writes instances in the same JSONL layout [`load_dataset`] reads.
pub fn write_dataset(path: impl AsRef<Path>, instances: &[Instance]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for inst in instances {
        let raw = RawInstance {
            token: inst.tokens.clone(),
            h: RawEntity {
                pos: [inst.head.start, inst.head.end],
            },
            t: RawEntity {
                pos: [inst.tail.start, inst.tail.end],
            },
            relation: inst.label.clone(),
        };
        serde_json::to_writer(&mut w, &raw)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Vocabulary over `train` keeping tokens seen at least `min_freq` times.
pub fn build_vocab(train: &[Instance], min_freq: u64) -> Result<Vocabulary> {
    Vocabulary::build(train, min_freq)
}

// ---------------------------------------------------------------------------
// Marked sequences
// ---------------------------------------------------------------------------

/// Structural tokens added around a sentence before it reaches the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Marker {
    Cls,
    HeadOpen,
    HeadClose,
    TailOpen,
    TailClose,
}

impl Marker {
    pub const ALL: [Marker; 5] = [
        Marker::Cls,
        Marker::HeadOpen,
        Marker::HeadClose,
        Marker::TailOpen,
        Marker::TailClose,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Marker::Cls => "[CLS]",
            Marker::HeadOpen => "[E1]",
            Marker::HeadClose => "[/E1]",
            Marker::TailOpen => "[E2]",
            Marker::TailClose => "[/E2]",
        }
    }
}

/// Where a marked position came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Word(usize),
    Marker(Marker),
}

impl Origin {
    pub fn word(self) -> Option<usize> {
        match self {
            Origin::Word(p) => Some(p),
            Origin::Marker(_) => None,
        }
    }
}

/// Sentence with `[CLS]` prepended and entity spans wrapped in markers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkedSequence {
    pub tokens: Vec<String>,
    pub origins: Vec<Origin>,
}

impl MarkedSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Position of the given marker.
    pub fn marker_position(&self, marker: Marker) -> usize {
        self.origins
            .iter()
            .position(|o| *o == Origin::Marker(marker))
            .expect("marked sequence carries every marker")
    }

    /// Marked position of source token `pos`, if present.
    pub fn position_of_word(&self, pos: usize) -> Option<usize> {
        self.origins.iter().position(|o| *o == Origin::Word(pos))
    }

    /// Drops markers and returns the original word tokens.
    pub fn strip(&self) -> Vec<String> {
        self.tokens
            .iter()
            .zip(&self.origins)
            .filter(|(_, o)| o.word().is_some())
            .map(|(t, _)| t.clone())
            .collect()
    }
}

/// Prepends the classification token and wraps each entity in its markers.
pub fn insert_markers(inst: &Instance) -> MarkedSequence {
    let n = inst.tokens.len();
    let mut tokens = Vec::with_capacity(n + 5);
    let mut origins = Vec::with_capacity(n + 5);
    let push_marker = |tokens: &mut Vec<String>, origins: &mut Vec<Origin>, m: Marker| {
        tokens.push(m.as_str().to_string());
        origins.push(Origin::Marker(m));
    };
    push_marker(&mut tokens, &mut origins, Marker::Cls);
    for (p, tok) in inst.tokens.iter().enumerate() {
        if p == inst.head.start {
            push_marker(&mut tokens, &mut origins, Marker::HeadOpen);
        }
        if p == inst.tail.start {
            push_marker(&mut tokens, &mut origins, Marker::TailOpen);
        }
        tokens.push(tok.clone());
        origins.push(Origin::Word(p));
        if p == inst.head.end {
            push_marker(&mut tokens, &mut origins, Marker::HeadClose);
        }
        if p == inst.tail.end {
            push_marker(&mut tokens, &mut origins, Marker::TailClose);
        }
    }
    MarkedSequence { tokens, origins }
}
