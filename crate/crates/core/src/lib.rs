//! A small decoder-only transformer with an editable KV cache.
//!
//! When a prefix of the context is edited, the cached keys after the edit
//! still carry their old rotary positions. This crate implements four ways to
//! bring the cache up to date and the diagnostics to compare them:
//!
//! * full recomputation from the first edited token (exact, slow),
//! * Conflict Fast Encoding (encode only the new tokens, leave stale
//!   positions),
//! * reuse (ignore the edit),
//! * Positional Integrity Encoding, which re-encodes the new tokens and
//!   re-rotates each retained key once by its net position shift.
//!
//! Numeric code is generic over [`Scalar`]; `f32` is the working precision
//! and the aliases below fix it.

pub mod cache;
pub mod diagnostics;
pub mod edit;
pub mod error;
pub mod model;
pub mod rope;
pub mod scalar;
pub mod scenario;
pub mod strategy;
pub mod tensor;
pub mod tokens;

pub use cache::KvCache;
pub use diagnostics::{
    edit_similarity, exact_match, first_non_comment_line, key_cosine_by_layer, kl_divergence,
    DiagnosticsReport, KlDirection,
};
pub use edit::{apply_edit_tokens, EditOp, EditScript};
pub use error::{Error, Result};
pub use model::{Generation, Logits, ModelConfig, ToyDecoder};
pub use rope::RotaryTable;
pub use scalar::Scalar;
pub use scenario::{ScenarioConfig, ScenarioKind};
pub use strategy::{
    update_conflict_fast, update_full_recompute, update_pie, update_reuse, Strategy, UpdateTiming,
};
pub use tensor::{matmul, rms_norm, softmax_row, Matrix};
pub use tokens::{TokenId, TokenSequence};

pub type Matrix32 = Matrix<f32>;
pub type Matrix64 = Matrix<f64>;
pub type RotaryTable32 = RotaryTable<f32>;
pub type RotaryTable64 = RotaryTable<f64>;
pub type Decoder32 = ToyDecoder<f32>;
pub type Decoder64 = ToyDecoder<f64>;
pub type KvCache32 = KvCache<f32>;
pub type KvCache64 = KvCache<f64>;
