use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Synonym {
    pub word: String,
    pub weight: f64,
}

/// Word → ordered substitute candidates.
///
/// TSV on disk, one headword per line followed by `substitute:weight` cells.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SynonymLexicon {
    entries: BTreeMap<String, Vec<Synonym>>,
}

impl SynonymLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a candidate. Self-entries and repeats are dropped.
    pub fn insert(&mut self, word: &str, substitute: &str, weight: f64) -> std::result::Result<(), String> {
        if !(0.0..=1.0).contains(&weight) {
            return Err(format!("weight {weight} for {word}->{substitute} outside [0, 1]"));
        }
        let word = word.to_lowercase();
        let substitute = substitute.to_lowercase();
        let list = self.entries.entry(word.clone()).or_default();
        if substitute != word && !list.iter().any(|s| s.word == substitute) {
            list.push(Synonym {
                word: substitute,
                weight,
            });
        }
        Ok(())
    }

    /// Candidates for `word`; empty when absent.
    pub fn lookup(&self, word: &str) -> &[Synonym] {
        self.entries.get(word).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lex = SynonymLexicon::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let mut cells = line.split('\t');
            let head = cells.next().unwrap_or_default().trim();
            if head.is_empty() {
                return Err(Error::Parse {
                    line: line_no,
                    message: "missing headword".into(),
                });
            }
            lex.entries.entry(head.to_lowercase()).or_default();
            for cell in cells {
                let (word, weight) = cell.rsplit_once(':').ok_or_else(|| Error::Parse {
                    line: line_no,
                    message: format!("cell {cell:?} is not substitute:weight"),
                })?;
                let weight: f64 = weight.trim().parse().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("bad weight in {cell:?}"),
                })?;
                lex.insert(head, word.trim(), weight)
                    .map_err(|message| Error::Parse { line: line_no, message })?;
            }
        }
        Ok(lex)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut text = String::new();
        for line in BufReader::new(file).lines() {
            text.push_str(&line.map_err(|e| Error::io(path, e))?);
            text.push('\n');
        }
        Self::parse(&text)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for (word, subs) in &self.entries {
            let mut line = word.clone();
            for s in subs {
                line.push_str(&format!("\t{}:{}", s.word, s.weight));
            }
            line.push('\n');
            w.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Convenience wrapper matching the other loaders.
pub fn load_synonyms(path: impl AsRef<Path>) -> Result<SynonymLexicon> {
    SynonymLexicon::load(path)
}
