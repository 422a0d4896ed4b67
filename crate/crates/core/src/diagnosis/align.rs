//! Unit-cost Levenshtein alignment between two token lists.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum EditOp {
    Substitute {
        orig: usize,
        adv: usize,
        from: String,
        to: String,
    },
    Delete {
        orig: usize,
        token: String,
    },
    Insert {
        adv: usize,
        token: String,
    },
}

impl EditOp {
    /// Original-side position this edit consumes, if any.
    pub fn orig_position(&self) -> Option<usize> {
        match self {
            EditOp::Substitute { orig, .. } | EditOp::Delete { orig, .. } => Some(*orig),
            EditOp::Insert { .. } => None,
        }
    }

    /// Token the edit introduces on the adversarial side, if any.
    pub fn introduced(&self) -> Option<&str> {
        match self {
            EditOp::Substitute { to, .. } => Some(to),
            EditOp::Insert { token, .. } => Some(token),
            EditOp::Delete { .. } => None,
        }
    }
}

/// Edits in left-to-right order plus the `(orig, adv)` pairs of tokens
/// carried over unchanged.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EditScript {
    pub ops: Vec<EditOp>,
    pub alignment: Vec<(usize, usize)>,
}

impl EditScript {
    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn touched_original(&self) -> impl Iterator<Item = usize> + '_ {
        self.ops.iter().filter_map(EditOp::orig_position)
    }

    pub fn introduced_tokens(&self) -> impl Iterator<Item = &str> + '_ {
        self.ops.iter().filter_map(EditOp::introduced)
    }

    /// Rebuilds the adversarial list from `original`. Fails if the script
    /// references a position twice, leaves one uncovered, or disagrees with
    /// `original` about a token.
    pub fn apply(&self, original: &[String]) -> Result<Vec<String>, String> {
        let mut orig_seen = vec![false; original.len()];
        let mut claim = |p: usize| -> Result<(), String> {
            match orig_seen.get_mut(p) {
                Some(seen) if !*seen => {
                    *seen = true;
                    Ok(())
                }
                Some(_) => Err(format!("original position {p} referenced twice")),
                None => Err(format!("original position {p} out of range")),
            }
        };
        let adv_len = self.alignment.len()
            + self
                .ops
                .iter()
                .filter(|op| !matches!(op, EditOp::Delete { .. }))
                .count();
        let mut out: Vec<Option<String>> = vec![None; adv_len];
        let mut place = |a: usize, tok: &str| -> Result<(), String> {
            match out.get_mut(a) {
                Some(slot) if slot.is_none() => {
                    *slot = Some(tok.to_string());
                    Ok(())
                }
                Some(_) => Err(format!("adversarial position {a} referenced twice")),
                None => Err(format!("adversarial position {a} out of range")),
            }
        };
        for &(o, a) in &self.alignment {
            claim(o)?;
            place(a, &original[o])?;
        }
        for op in &self.ops {
            match op {
                EditOp::Substitute { orig, adv, from, to } => {
                    claim(*orig)?;
                    if original[*orig] != *from {
                        return Err(format!("position {orig} holds {:?}, not {from:?}", original[*orig]));
                    }
                    place(*adv, to)?;
                }
                EditOp::Delete { orig, token } => {
                    claim(*orig)?;
                    if original[*orig] != *token {
                        return Err(format!("position {orig} holds {:?}, not {token:?}", original[*orig]));
                    }
                }
                EditOp::Insert { adv, token } => place(*adv, token)?,
            }
        }
        if let Some(p) = orig_seen.iter().position(|s| !s) {
            return Err(format!("original position {p} not covered"));
        }
        out.into_iter()
            .enumerate()
            .map(|(i, t)| t.ok_or_else(|| format!("adversarial position {i} not covered")))
            .collect()
    }
}

/// Minimal-cost edit script (substitute = insert = delete = 1).
///
/// Among optimal scripts the traceback prefers a diagonal step (match or
/// substitution), then a deletion, then an insertion.
pub fn align_tokens(original: &[String], adversarial: &[String]) -> EditScript {
    let (n, m) = (original.len(), adversarial.len());
    let mut dp = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in dp.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in dp[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = dp[i - 1][j - 1] + usize::from(original[i - 1] != adversarial[j - 1]);
            dp[i][j] = sub.min(dp[i - 1][j] + 1).min(dp[i][j - 1] + 1);
        }
    }

    let mut ops = Vec::new();
    let mut alignment = Vec::new();
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 {
            let same = original[i - 1] == adversarial[j - 1];
            if dp[i - 1][j - 1] + usize::from(!same) == dp[i][j] {
                if same {
                    alignment.push((i - 1, j - 1));
                } else {
                    ops.push(EditOp::Substitute {
                        orig: i - 1,
                        adv: j - 1,
                        from: original[i - 1].clone(),
                        to: adversarial[j - 1].clone(),
                    });
                }
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && dp[i - 1][j] + 1 == dp[i][j] {
            ops.push(EditOp::Delete {
                orig: i - 1,
                token: original[i - 1].clone(),
            });
            i -= 1;
        } else {
            ops.push(EditOp::Insert {
                adv: j - 1,
                token: adversarial[j - 1].clone(),
            });
            j -= 1;
        }
    }
    ops.reverse();
    alignment.reverse();
    EditScript { ops, alignment }
}
