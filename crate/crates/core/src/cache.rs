//! Per-layer key/value storage with explicit position bookkeeping.
//!
//! Layout per layer is position-major: the entry for `(pos, head)` starts at
//! `(pos * n_heads + head) * head_dim`. Keys are stored with their rotary
//! position already applied; values are never rotated.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct KvCache<T = f32> {
    n_layers: usize,
    n_heads: usize,
    head_dim: usize,
    keys: Vec<Vec<T>>,
    values: Vec<Vec<T>>,
    len: usize,
    positionally_consistent: bool,
}

impl<T: Scalar> KvCache<T> {
    pub fn new(n_layers: usize, n_heads: usize, head_dim: usize) -> Self {
        Self {
            n_layers,
            n_heads,
            head_dim,
            keys: vec![Vec::new(); n_layers],
            values: vec![Vec::new(); n_layers],
            len: 0,
            positionally_consistent: true,
        }
    }

    /// An empty cache with the same geometry as `self`.
    pub fn empty_like(&self) -> Self {
        Self::new(self.n_layers, self.n_heads, self.head_dim)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    pub fn n_heads(&self) -> usize {
        self.n_heads
    }

    pub fn head_dim(&self) -> usize {
        self.head_dim
    }

    /// Width of one position's entry (all heads).
    #[inline]
    pub fn row_width(&self) -> usize {
        self.n_heads * self.head_dim
    }

    /// `false` once stale rotations have been spliced in (Conflict Fast
    /// Encoding); the stored keys then no longer match positions `0..len`.
    pub fn is_positionally_consistent(&self) -> bool {
        self.positionally_consistent
    }

    pub(crate) fn set_positionally_consistent(&mut self, v: bool) {
        self.positionally_consistent = v;
    }

    pub fn layer_keys(&self, layer: usize) -> &[T] {
        &self.keys[layer]
    }

    pub fn layer_values(&self, layer: usize) -> &[T] {
        &self.values[layer]
    }

    pub fn key(&self, layer: usize, pos: usize, head: usize) -> &[T] {
        let off = self.offset(pos, head);
        &self.keys[layer][off..off + self.head_dim]
    }

    pub fn value(&self, layer: usize, pos: usize, head: usize) -> &[T] {
        let off = self.offset(pos, head);
        &self.values[layer][off..off + self.head_dim]
    }

    #[inline]
    fn offset(&self, pos: usize, head: usize) -> usize {
        assert!(
            pos < self.len && head < self.n_heads,
            "cache index out of range"
        );
        (pos * self.n_heads + head) * self.head_dim
    }

    /// Drops every position at or after `len`.
    pub fn truncate(&mut self, len: usize) {
        if len >= self.len {
            return;
        }
        let w = self.row_width();
        for l in 0..self.n_layers {
            self.keys[l].truncate(len * w);
            self.values[l].truncate(len * w);
        }
        self.len = len;
    }

    /// Checks that the geometry matches a model's.
    pub fn check_geometry(&self, n_layers: usize, n_heads: usize, head_dim: usize) -> Result<()> {
        if (self.n_layers, self.n_heads, self.head_dim) != (n_layers, n_heads, head_dim) {
            return Err(Error::Cache(format!(
                "cache is (layers={}, heads={}, head_dim={}), model is (layers={n_layers}, heads={n_heads}, head_dim={head_dim})",
                self.n_layers, self.n_heads, self.head_dim
            )));
        }
        Ok(())
    }

    /// Checks that two caches have the same geometry and length.
    pub fn check_same_shape(&self, other: &Self) -> Result<()> {
        other.check_geometry(self.n_layers, self.n_heads, self.head_dim)?;
        if self.len != other.len {
            return Err(Error::Cache(format!(
                "cache lengths differ: {} vs {}",
                self.len, other.len
            )));
        }
        Ok(())
    }

    /// Appends one layer's rows for positions the caller is in the middle of
    /// adding. `len` is bumped separately by [`KvCache::commit`] once every
    /// layer has been written.
    pub(crate) fn push_layer_rows(&mut self, layer: usize, keys: &[T], values: &[T]) {
        self.keys[layer].extend_from_slice(keys);
        self.values[layer].extend_from_slice(values);
    }

    /// Number of positions layer `layer` currently holds (may run ahead of
    /// `len` mid-forward).
    pub(crate) fn layer_len(&self, layer: usize) -> usize {
        self.keys[layer].len() / self.row_width()
    }

    pub(crate) fn commit(&mut self, added: usize) {
        self.len += added;
        debug_assert!((0..self.n_layers).all(|l| self.layer_len(l) == self.len));
    }

    /// Copies positions `range` of `src` onto the end of `self`, optionally
    /// rotating each key by `delta` positions. Returns the number of
    /// (position, layer) keys rotated.
    pub(crate) fn append_from(
        &mut self,
        src: &Self,
        range: std::ops::Range<usize>,
        rotate: Option<(&crate::rope::Angles<T>, i64)>,
    ) -> usize {
        if range.is_empty() {
            return 0;
        }
        let w = self.row_width();
        let d = self.head_dim;
        let mut rotated = 0;
        for l in 0..self.n_layers {
            let start = self.keys[l].len();
            self.keys[l].extend_from_slice(&src.keys[l][range.start * w..range.end * w]);
            self.values[l].extend_from_slice(&src.values[l][range.start * w..range.end * w]);
            if let Some((angles, delta)) = rotate {
                if delta != 0 {
                    for head in self.keys[l][start..].chunks_exact_mut(d) {
                        angles.rotate_in_place(head, delta);
                    }
                    rotated += range.len();
                }
            }
        }
        self.len += range.len();
        rotated
    }
}
