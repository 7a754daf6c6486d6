//! Rotary position tables and the rotations built on them.
//!
//! Pairing is half-split: component `k` is rotated together with component
//! `k + head_dim / 2` by angle `pos · base^(-2k / head_dim)`. Cached keys carry
//! this convention, so it must never change between encode and edit.
//!
//! Angles are evaluated in `f64` and only then narrowed to the storage
//! scalar; at positions in the thousands an `f32` angle product would already
//! be off by ~1e-4 rad.

use std::sync::{Arc, RwLock};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_ROPE_BASE: f64 = 10_000.0;

/// Positions beyond this are rotated with directly evaluated trig instead of
/// growing the table further.
const MAX_TABLE_POS: usize = 1 << 20;

/// Precomputed `cos`/`sin` for positions `0..max_pos`.
#[derive(Debug)]
pub struct Angles<T> {
    half: usize,
    max_pos: usize,
    freqs: Vec<f64>,
    cos: Vec<T>,
    sin: Vec<T>,
}

impl<T: Scalar> Angles<T> {
    fn build(head_dim: usize, base: f64, max_pos: usize) -> Self {
        let half = head_dim / 2;
        let freqs: Vec<f64> = (0..half)
            .map(|k| base.powf(-2.0 * k as f64 / head_dim as f64))
            .collect();
        let mut cos = Vec::with_capacity(max_pos * half);
        let mut sin = Vec::with_capacity(max_pos * half);
        for p in 0..max_pos {
            for &f in &freqs {
                let a = p as f64 * f;
                cos.push(T::from_f64_lossy(a.cos()));
                sin.push(T::from_f64_lossy(a.sin()));
            }
        }
        Self {
            half,
            max_pos,
            freqs,
            cos,
            sin,
        }
    }

    pub fn max_pos(&self) -> usize {
        self.max_pos
    }

    pub fn cos(&self, pos: usize, k: usize) -> T {
        self.cos[pos * self.half + k]
    }

    pub fn sin(&self, pos: usize, k: usize) -> T {
        self.sin[pos * self.half + k]
    }

    /// Rotates `v` (length `2 · half`) in place by `pos`. Negative positions
    /// apply the inverse (transpose) rotation.
    #[inline]
    pub fn rotate_in_place(&self, v: &mut [T], pos: i64) {
        debug_assert_eq!(v.len(), 2 * self.half);
        if pos == 0 {
            return;
        }
        let p = pos.unsigned_abs() as usize;
        let (lo, hi) = v.split_at_mut(self.half);
        if p < self.max_pos {
            let row = p * self.half;
            let cos = &self.cos[row..row + self.half];
            let sin = &self.sin[row..row + self.half];
            if pos > 0 {
                for k in 0..self.half {
                    let (x, y) = (lo[k], hi[k]);
                    lo[k] = x * cos[k] - y * sin[k];
                    hi[k] = x * sin[k] + y * cos[k];
                }
            } else {
                for k in 0..self.half {
                    let (x, y) = (lo[k], hi[k]);
                    lo[k] = x * cos[k] + y * sin[k];
                    hi[k] = y * cos[k] - x * sin[k];
                }
            }
        } else {
            for k in 0..self.half {
                let a = pos as f64 * self.freqs[k];
                let (c, s) = (T::from_f64_lossy(a.cos()), T::from_f64_lossy(a.sin()));
                let (x, y) = (lo[k], hi[k]);
                lo[k] = x * c - y * s;
                hi[k] = x * s + y * c;
            }
        }
    }
}

/// Rotary table with lazy, doubling growth. Shareable across threads.
#[derive(Debug)]
pub struct RotaryTable<T = f32> {
    head_dim: usize,
    base: f64,
    angles: RwLock<Arc<Angles<T>>>,
}

impl<T> Clone for RotaryTable<T> {
    fn clone(&self) -> Self {
        let angles = Arc::clone(&self.angles.read().unwrap_or_else(|e| e.into_inner()));
        Self {
            head_dim: self.head_dim,
            base: self.base,
            angles: RwLock::new(angles),
        }
    }
}

impl<T: Scalar> RotaryTable<T> {
    pub fn new(head_dim: usize, base: f64, max_pos: usize) -> Result<Self> {
        if head_dim == 0 || !head_dim.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "rotary head_dim must be even and non-zero, got {head_dim}"
            )));
        }
        if !(base.is_finite() && base > 1.0) {
            return Err(Error::Config(format!(
                "rotary base must exceed 1, got {base}"
            )));
        }
        Ok(Self {
            head_dim,
            base,
            angles: RwLock::new(Arc::new(Angles::build(head_dim, base, max_pos.max(1)))),
        })
    }

    pub fn head_dim(&self) -> usize {
        self.head_dim
    }

    pub fn base(&self) -> f64 {
        self.base
    }

    /// Number of positions currently tabulated.
    pub fn max_pos(&self) -> usize {
        self.current().max_pos
    }

    fn current(&self) -> Arc<Angles<T>> {
        Arc::clone(&self.angles.read().unwrap_or_else(|e| e.into_inner()))
    }

    /// Returns a table snapshot covering at least `|pos| < max_abs_pos`,
    /// growing (by doubling) if needed.
    pub fn angles_for(&self, max_abs_pos: usize) -> Arc<Angles<T>> {
        let cur = self.current();
        let want = max_abs_pos.min(MAX_TABLE_POS);
        if cur.max_pos >= want {
            return cur;
        }
        let mut guard = self.angles.write().unwrap_or_else(|e| e.into_inner());
        if guard.max_pos < want {
            let mut size = guard.max_pos.max(1);
            while size < want {
                size *= 2;
            }
            *guard = Arc::new(Angles::build(
                self.head_dim,
                self.base,
                size.min(MAX_TABLE_POS),
            ));
        }
        Arc::clone(&guard)
    }

    fn check_len(&self, v: &[T]) -> Result<()> {
        if v.len() != self.head_dim {
            return Err(Error::Shape {
                op: "rotate",
                left: (1, v.len()),
                right: (1, self.head_dim),
            });
        }
        Ok(())
    }

    /// Applies `R_pos` to in-place. `pos` may be negative.
    pub fn rotate_in_place(&self, v: &mut [T], pos: i64) -> Result<()> {
        self.check_len(v)?;
        self.angles_for(pos.unsigned_abs() as usize + 1)
            .rotate_in_place(v, pos);
        Ok(())
    }

    /// Returns `R_pos · v`.
    pub fn rotate(&self, v: &[T], pos: i64) -> Result<Vec<T>> {
        let mut out = v.to_vec();
        self.rotate_in_place(&mut out, pos)?;
        Ok(out)
    }

    /// Moves a key that already carries the rotation for some position `p` to
    /// position `p + delta`. Since `R_{p+δ} R_p⁻¹ = R_δ`, `p` is not needed.
    /// `delta == 0` returns `v` unchanged, bit for bit.
    pub fn rerotate_delta(&self, v: &[T], delta: i64) -> Result<Vec<T>> {
        self.rotate(v, delta)
    }
}
