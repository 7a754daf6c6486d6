//! Cache update strategies applied after an edit.
//!
//! * [`update_full_recompute`] keeps the prefix before the first edit and
//!   re-encodes everything after it. Exact.
//! * [`update_conflict_fast`] encodes only the new tokens and splices the
//!   old suffix back in as-is, so suffix keys keep their pre-edit rotations.
//! * [`update_pie`] does the same splice but moves every retained key to its
//!   post-edit position with a single rotation by the cumulative delta.
//! * [`update_reuse`] ignores the edit.
//!
//! Multi-op scripts are processed left to right; each op's new tokens attend
//! to the already-updated cache on their left.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cache::KvCache;
use crate::edit::{apply_edit_tokens, EditScript};
use crate::error::{Error, Result};
use crate::model::{Logits, ToyDecoder};
use crate::scalar::Scalar;
use crate::tokens::{TokenId, TokenSequence};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Full,
    ConflictFast,
    Reuse,
    Pie,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Full,
        Strategy::ConflictFast,
        Strategy::Reuse,
        Strategy::Pie,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Full => "full",
            Strategy::ConflictFast => "conflict_fast",
            Strategy::Reuse => "reuse",
            Strategy::Pie => "pie",
        }
    }

    /// Applies the strategy. `pre_cache` is consumed.
    pub fn apply<T: Scalar>(
        self,
        model: &ToyDecoder<T>,
        pre_cache: KvCache<T>,
        pre_seq: &[TokenId],
        script: &EditScript,
    ) -> Result<(KvCache<T>, UpdateTiming)> {
        match self {
            Strategy::Full => update_full_recompute(model, pre_cache, pre_seq, script),
            Strategy::ConflictFast => update_conflict_fast(model, pre_cache, pre_seq, script),
            Strategy::Pie => update_pie(model, pre_cache, pre_seq, script),
            Strategy::Reuse => {
                let start = Instant::now();
                let cache = update_reuse(pre_cache, script);
                Ok((cache, UpdateTiming::since(start, 0, 0)))
            }
        }
    }

    /// The token sequence the updated cache stands for: the edited sequence,
    /// except for [`Strategy::Reuse`], which still holds the original.
    pub fn context_sequence<'a>(
        self,
        pre_seq: &'a TokenSequence,
        edited: &'a TokenSequence,
    ) -> &'a TokenSequence {
        match self {
            Strategy::Reuse => pre_seq,
            _ => edited,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "full" | "full_recompute" => Ok(Strategy::Full),
            "conflict_fast" | "cfe" | "conflict" => Ok(Strategy::ConflictFast),
            "reuse" => Ok(Strategy::Reuse),
            "pie" => Ok(Strategy::Pie),
            other => Err(Error::arg(format!(
                "unknown strategy {other:?} (expected full, conflict_fast, reuse or pie)"
            ))),
        }
    }
}

/// Cost of one cache update. Covers cache work only, never generation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateTiming {
    pub update_ms: f64,
    /// Tokens run through the forward pass.
    pub recomputed_tokens: usize,
    /// (position, layer) keys re-rotated; all heads of a position count once.
    pub rotated_keys: usize,
}

impl UpdateTiming {
    fn since(start: Instant, recomputed_tokens: usize, rotated_keys: usize) -> Self {
        Self {
            update_ms: start.elapsed().as_secs_f64() * 1e3,
            recomputed_tokens,
            rotated_keys,
        }
    }
}

fn check_inputs<T: Scalar>(
    model: &ToyDecoder<T>,
    pre_cache: &KvCache<T>,
    pre_seq: &[TokenId],
    script: &EditScript,
) -> Result<()> {
    model.check_cache(pre_cache)?;
    if pre_cache.len() != pre_seq.len() {
        return Err(Error::Cache(format!(
            "cache holds {} positions but the pre-edit sequence has {} tokens",
            pre_cache.len(),
            pre_seq.len()
        )));
    }
    script.validate(pre_seq.len())?;
    for (index, op) in script.ops().iter().enumerate() {
        model.check_tokens(&op.tokens).map_err(|e| Error::Script {
            index,
            reason: e.to_string(),
        })?;
    }
    Ok(())
}

/// Re-encodes everything from the first changed position onward.
pub fn update_full_recompute<T: Scalar>(
    model: &ToyDecoder<T>,
    mut pre_cache: KvCache<T>,
    pre_seq: &[TokenId],
    script: &EditScript,
) -> Result<(KvCache<T>, UpdateTiming)> {
    let start = Instant::now();
    check_inputs(model, &pre_cache, pre_seq, script)?;
    let Some(first) = script.first_change() else {
        return Ok((pre_cache, UpdateTiming::since(start, 0, 0)));
    };
    let edited = apply_edit_tokens(pre_seq, script)?;
    pre_cache.truncate(first);
    model.extend(&mut pre_cache, &edited[first..], Logits::None)?;
    pre_cache.set_positionally_consistent(true);
    Ok((
        pre_cache,
        UpdateTiming::since(start, edited.len() - first, 0),
    ))
}

/// Encodes only the new tokens; retained keys keep their stale rotations.
pub fn update_conflict_fast<T: Scalar>(
    model: &ToyDecoder<T>,
    pre_cache: KvCache<T>,
    pre_seq: &[TokenId],
    script: &EditScript,
) -> Result<(KvCache<T>, UpdateTiming)> {
    splice(model, pre_cache, pre_seq, script, false)
}

/// Positional Integrity Encoding: encodes the new tokens and rotates every
/// retained key by the cumulative delta of the ops before it.
pub fn update_pie<T: Scalar>(
    model: &ToyDecoder<T>,
    pre_cache: KvCache<T>,
    pre_seq: &[TokenId],
    script: &EditScript,
) -> Result<(KvCache<T>, UpdateTiming)> {
    splice(model, pre_cache, pre_seq, script, true)
}

/// Returns the cache untouched.
pub fn update_reuse<T: Scalar>(pre_cache: KvCache<T>, _script: &EditScript) -> KvCache<T> {
    pre_cache
}

fn splice<T: Scalar>(
    model: &ToyDecoder<T>,
    pre_cache: KvCache<T>,
    pre_seq: &[TokenId],
    script: &EditScript,
    reposition: bool,
) -> Result<(KvCache<T>, UpdateTiming)> {
    let start = Instant::now();
    check_inputs(model, &pre_cache, pre_seq, script)?;
    let n = pre_seq.len();

    // Largest |cumulative delta| decides how much of the rotary table we need.
    let mut max_shift = 0i64;
    let mut acc = 0i64;
    for op in script.ops() {
        acc += op.delta();
        max_shift = max_shift.max(acc.abs());
    }
    let angles = model.rope().angles_for(max_shift as usize + 1);

    let mut out = pre_cache.empty_like();
    let mut consistent = pre_cache.is_positionally_consistent();
    let mut cursor = 0;
    let mut shift = 0i64;
    let mut recomputed = 0;
    let mut rotated = 0;
    let mut keep = |out: &mut KvCache<T>, range: std::ops::Range<usize>, shift: i64| {
        if !reposition && shift != 0 && !range.is_empty() {
            consistent = false;
        }
        out.append_from(&pre_cache, range, reposition.then_some((&*angles, shift)))
    };
    for op in script.ops() {
        rotated += keep(&mut out, cursor..op.start, shift);
        model.extend(&mut out, &op.tokens, Logits::None)?;
        recomputed += op.tokens.len();
        shift += op.delta();
        cursor = op.end;
    }
    rotated += keep(&mut out, cursor..n, shift);
    out.set_positionally_consistent(consistent);
    Ok((out, UpdateTiming::since(start, recomputed, rotated)))
}
