//! Measures of how far an updated cache strays from the exact one.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::cache::KvCache;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::strategy::UpdateTiming;

/// Probabilities below this are clamped before taking logs.
pub const DEFAULT_KL_FLOOR: f64 = 1e-12;

/// Mean cosine similarity between the two caches' keys over `span`, per
/// layer. Each (position, head) pair contributes one cosine.
pub fn key_cosine_by_layer<T: Scalar>(
    a: &KvCache<T>,
    b: &KvCache<T>,
    span: Range<usize>,
) -> Result<Vec<f64>> {
    a.check_same_shape(b)
        .map_err(|e| Error::Diagnostics(e.to_string()))?;
    if span.start > span.end || span.end > a.len() {
        return Err(Error::Diagnostics(format!(
            "span {span:?} is outside cache of length {}",
            a.len()
        )));
    }
    if span.is_empty() {
        return Err(Error::Diagnostics("cosine over an empty span".into()));
    }
    let count = (span.len() * a.n_heads()) as f64;
    Ok((0..a.n_layers())
        .map(|l| {
            let mut total = 0.0;
            for p in span.clone() {
                for h in 0..a.n_heads() {
                    total += cosine(a.key(l, p, h), b.key(l, p, h));
                }
            }
            total / count
        })
        .collect())
}

/// Cosine of two vectors, clamped into `[-1, 1]`. Zero vectors compare as 1
/// to each other and 0 to anything else.
pub fn cosine<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x.to_f64_lossy(), y.to_f64_lossy());
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return if aa == bb { 1.0 } else { 0.0 };
    }
    (ab / (aa.sqrt() * bb.sqrt())).clamp(-1.0, 1.0)
}

fn check_distribution<T: Scalar>(name: &str, p: &[T]) -> Result<()> {
    let mut sum = 0.0;
    for &x in p {
        let x = x.to_f64_lossy();
        if !(x.is_finite() && x >= 0.0) {
            return Err(Error::arg(format!("{name} has an invalid probability {x}")));
        }
        sum += x;
    }
    if (sum - 1.0).abs() > 1e-5 {
        return Err(Error::arg(format!("{name} sums to {sum}, not 1")));
    }
    Ok(())
}

/// `KL(p ‖ q)` in nats with the default floor on `q`.
pub fn kl_divergence<T: Scalar>(p: &[T], q: &[T]) -> Result<f64> {
    kl_divergence_with_floor(p, q, DEFAULT_KL_FLOOR)
}

/// `Σ p_k ln(p_k / max(q_k, floor))`, with `0 · ln 0 = 0`.
pub fn kl_divergence_with_floor<T: Scalar>(p: &[T], q: &[T], floor: f64) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::arg(format!(
            "distribution lengths differ: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    check_distribution("p", p)?;
    check_distribution("q", q)?;
    let mut kl = 0.0;
    for (&pk, &qk) in p.iter().zip(q) {
        let pk = pk.to_f64_lossy();
        if pk > 0.0 {
            kl += pk * (pk / qk.to_f64_lossy().max(floor)).ln();
        }
    }
    // Rounding can leave a tiny negative sum for (near-)equal inputs.
    Ok(kl.max(0.0))
}

/// Which side of the KL divergence is the reference.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlDirection {
    /// `KL(reference ‖ candidate)`.
    #[default]
    ReferenceFirst,
    /// `KL(candidate ‖ reference)`.
    CandidateFirst,
}

impl KlDirection {
    pub fn divergence<T: Scalar>(
        self,
        reference: &[T],
        candidate: &[T],
        floor: f64,
    ) -> Result<f64> {
        match self {
            KlDirection::ReferenceFirst => kl_divergence_with_floor(reference, candidate, floor),
            KlDirection::CandidateFirst => kl_divergence_with_floor(candidate, reference, floor),
        }
    }
}

/// Per-step divergences between two equally long runs of distributions.
pub fn kl_per_step<T: Scalar>(
    reference: &[Vec<T>],
    candidate: &[Vec<T>],
    direction: KlDirection,
    floor: f64,
) -> Result<Vec<f64>> {
    if reference.len() != candidate.len() {
        return Err(Error::Diagnostics(format!(
            "step counts differ: {} vs {}",
            reference.len(),
            candidate.len()
        )));
    }
    reference
        .iter()
        .zip(candidate)
        .map(|(r, c)| direction.divergence(r, c, floor))
        .collect()
}

/// 1 iff the trimmed strings are byte-equal.
pub fn exact_match(pred: &str, target: &str) -> u8 {
    u8::from(pred.trim() == target.trim())
}

/// Character-level Levenshtein distance.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, &ca) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = diag + usize::from(ca != cb);
            diag = row[j + 1];
            row[j + 1] = sub.min(row[j] + 1).min(diag + 1);
        }
    }
    row[b.len()]
}

/// `100 · (1 − lev(pred, target) / max(|pred|, |target|))`, lengths in
/// characters. Two empty strings score 100.
pub fn edit_similarity(pred: &str, target: &str) -> f64 {
    let longest = pred.chars().count().max(target.chars().count());
    if longest == 0 {
        return 100.0;
    }
    100.0 * (1.0 - levenshtein(pred, target) as f64 / longest as f64)
}

/// First line that is neither blank nor a comment, trimmed. Empty if none.
pub fn first_non_comment_line<'a>(text: &'a str, comment_prefix: &str) -> &'a str {
    text.lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && (comment_prefix.is_empty() || !l.starts_with(comment_prefix)))
        .unwrap_or("")
}

/// Everything measured for one strategy against the full-recompute reference.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub per_layer_cosine: Vec<f64>,
    pub per_step_kl: Vec<f64>,
    /// One 0/1 entry per sample.
    pub em: Vec<u8>,
    pub em_pct: f64,
    pub es: f64,
    pub timing: UpdateTiming,
}

impl DiagnosticsReport {
    pub fn check_invariants(&self) -> Result<()> {
        if let Some(c) = self
            .per_layer_cosine
            .iter()
            .find(|c| !(-1.0..=1.0).contains(*c))
        {
            return Err(Error::Diagnostics(format!("cosine {c} outside [-1, 1]")));
        }
        if let Some(k) = self
            .per_step_kl
            .iter()
            .find(|k| !k.is_finite() || **k < 0.0)
        {
            return Err(Error::Diagnostics(format!(
                "KL {k} is not a finite non-negative value"
            )));
        }
        if !(0.0..=100.0).contains(&self.es) {
            return Err(Error::Diagnostics(format!(
                "ES {} outside [0, 100]",
                self.es
            )));
        }
        Ok(())
    }

    /// Flattens into `field,index,value` rows; scalar fields leave `index`
    /// empty. Row order is fixed.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("field,index,value\n");
        for (i, c) in self.per_layer_cosine.iter().enumerate() {
            out.push_str(&format!("per_layer_cosine,{i},{c}\n"));
        }
        for (i, k) in self.per_step_kl.iter().enumerate() {
            out.push_str(&format!("per_step_kl,{i},{k}\n"));
        }
        for (i, e) in self.em.iter().enumerate() {
            out.push_str(&format!("em,{i},{e}\n"));
        }
        out.push_str(&format!("em_pct,,{}\n", self.em_pct));
        out.push_str(&format!("es,,{}\n", self.es));
        out.push_str(&format!("update_ms,,{}\n", self.timing.update_ms));
        out.push_str(&format!(
            "recomputed_tokens,,{}\n",
            self.timing.recomputed_tokens
        ));
        out.push_str(&format!("rotated_keys,,{}\n", self.timing.rotated_keys));
        out
    }
}
