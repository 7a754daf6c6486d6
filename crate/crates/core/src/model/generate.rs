use crate::cache::KvCache;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::softmax_in_place;
use crate::tokens::{TokenId, TokenSequence};

use super::ToyDecoder;

/// Output of greedy decoding.
#[derive(Clone, Debug, PartialEq)]
pub struct Generation<T> {
    pub tokens: TokenSequence,
    /// Softmax distribution at each step, when requested.
    pub distributions: Option<Vec<Vec<T>>>,
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<T: Scalar>(v: &[T]) -> TokenId {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best as TokenId
}

impl<T: Scalar> ToyDecoder<T> {
    /// Greedy decoding: feeds `last_token`, takes the argmax, feeds that, and
    /// so on for `n_new` steps.
    pub fn generate_greedy(
        &self,
        cache: &mut KvCache<T>,
        last_token: TokenId,
        n_new: usize,
        record_distributions: bool,
    ) -> Result<Generation<T>> {
        if n_new == 0 {
            return Err(Error::arg("n_new must be at least 1"));
        }
        let mut tokens = Vec::with_capacity(n_new);
        let mut dists = record_distributions.then(|| Vec::with_capacity(n_new));
        let mut input = last_token;
        for _ in 0..n_new {
            let mut logits = self.decode_step(cache, input)?;
            input = argmax(&logits);
            tokens.push(input);
            if let Some(d) = dists.as_mut() {
                softmax_in_place(&mut logits);
                d.push(logits);
            }
        }
        Ok(Generation {
            tokens: TokenSequence::new(tokens),
            distributions: dists,
        })
    }

    /// Teacher-forced next-token distributions: step 0 feeds `last_token`,
    /// step `t` feeds `forced[t - 1]`. Returns `forced.len()` distributions,
    /// one per predicted position.
    pub fn forced_distributions(
        &self,
        cache: &mut KvCache<T>,
        last_token: TokenId,
        forced: &[TokenId],
    ) -> Result<Vec<Vec<T>>> {
        let mut out = Vec::with_capacity(forced.len());
        let mut input = last_token;
        for &next in forced {
            let mut logits = self.decode_step(cache, input)?;
            softmax_in_place(&mut logits);
            out.push(logits);
            input = next;
        }
        Ok(out)
    }
}
