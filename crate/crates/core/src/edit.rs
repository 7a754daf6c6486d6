//! Edit scripts over token sequences.
//!
//! Spans are 0-based and half-open over the *pre-edit* sequence: an op
//! `{start: i, end: j, tokens}` replaces `seq[i..j]` with `tokens`. A 1-based
//! closed span `[i', j']` corresponds to `start = i' - 1, end = j'`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokens::{TokenId, TokenSequence};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditOp {
    pub start: usize,
    pub end: usize,
    pub tokens: TokenSequence,
}

impl EditOp {
    pub fn new(start: usize, end: usize, tokens: impl Into<TokenSequence>) -> Self {
        Self {
            start,
            end,
            tokens: tokens.into(),
        }
    }

    pub fn insert(at: usize, tokens: impl Into<TokenSequence>) -> Self {
        Self::new(at, at, tokens)
    }

    pub fn delete(start: usize, end: usize) -> Self {
        Self::new(start, end, Vec::new())
    }

    pub fn is_insertion(&self) -> bool {
        self.start == self.end
    }

    pub fn is_deletion(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn replaced_len(&self) -> usize {
        self.end - self.start
    }

    /// Net shift of everything after the span: `m - (j - i)`.
    pub fn delta(&self) -> i64 {
        self.tokens.len() as i64 - self.replaced_len() as i64
    }
}

/// Ordered, non-overlapping edit ops.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EditScript {
    ops: Vec<EditOp>,
}

impl EditScript {
    /// Builds a script, checking order and disjointness (not bounds, which
    /// need the target sequence).
    pub fn new(ops: Vec<EditOp>) -> Result<Self> {
        let s = Self { ops };
        s.check_structure()?;
        Ok(s)
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn single(op: EditOp) -> Result<Self> {
        Self::new(vec![op])
    }

    pub fn ops(&self) -> &[EditOp] {
        &self.ops
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    fn check_structure(&self) -> Result<()> {
        for (index, op) in self.ops.iter().enumerate() {
            if op.start > op.end {
                return Err(Error::Script {
                    index,
                    reason: format!("start {} exceeds end {}", op.start, op.end),
                });
            }
            if index > 0 {
                let prev = &self.ops[index - 1];
                if op.start < prev.end {
                    return Err(Error::Script {
                        index,
                        reason: format!(
                            "span [{}, {}) overlaps or precedes previous span [{}, {})",
                            op.start, op.end, prev.start, prev.end
                        ),
                    });
                }
            }
        }
        Ok(())
    }

    /// Full validation against a sequence of length `n`.
    pub fn validate(&self, n: usize) -> Result<()> {
        self.check_structure()?;
        for (index, op) in self.ops.iter().enumerate() {
            if op.end > n {
                return Err(Error::Script {
                    index,
                    reason: format!("end {} is past sequence length {n}", op.end),
                });
            }
        }
        Ok(())
    }

    pub fn total_delta(&self) -> i64 {
        self.ops.iter().map(EditOp::delta).sum()
    }

    pub fn inserted_tokens(&self) -> usize {
        self.ops.iter().map(|o| o.tokens.len()).sum()
    }

    /// Start of the first op that changes anything.
    pub fn first_change(&self) -> Option<usize> {
        self.ops
            .iter()
            .find(|o| o.replaced_len() > 0 || !o.tokens.is_empty())
            .map(|o| o.start)
    }

    /// The ops re-expressed so each can be applied alone, in order, to the
    /// result of applying the ones before it.
    pub fn sequential(&self) -> Vec<EditOp> {
        let mut shift = 0i64;
        self.ops
            .iter()
            .map(|op| {
                let rebased = EditOp::new(
                    (op.start as i64 + shift) as usize,
                    (op.end as i64 + shift) as usize,
                    op.tokens.clone(),
                );
                shift += op.delta();
                rebased
            })
            .collect()
    }

    /// Parses the JSON Lines form: one `{"start", "end", "tokens"}` object per
    /// line; blank lines are skipped.
    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut ops = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let op: EditOp = serde_json::from_str(line).map_err(|e| Error::ScriptParse {
                line: i + 1,
                reason: e.to_string(),
            })?;
            ops.push((i + 1, op));
        }
        let lines: Vec<usize> = ops.iter().map(|(l, _)| *l).collect();
        Self::new(ops.into_iter().map(|(_, o)| o).collect()).map_err(|e| match e {
            Error::Script { index, reason } => Error::ScriptParse {
                line: lines[index],
                reason,
            },
            other => other,
        })
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for op in &self.ops {
            out.push_str(&serde_json::to_string(op).expect("ops serialize"));
            out.push('\n');
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_jsonl(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_jsonl())?;
        Ok(())
    }
}

/// Splices every op of `script` into `seq`.
pub fn apply_edit_tokens(seq: &[TokenId], script: &EditScript) -> Result<TokenSequence> {
    script.validate(seq.len())?;
    let len = (seq.len() as i64 + script.total_delta()) as usize;
    let mut out = Vec::with_capacity(len);
    let mut cursor = 0;
    for op in script.ops() {
        out.extend_from_slice(&seq[cursor..op.start]);
        out.extend_from_slice(&op.tokens);
        cursor = op.end;
    }
    out.extend_from_slice(&seq[cursor..]);
    debug_assert_eq!(out.len(), len);
    Ok(TokenSequence::new(out))
}
