//! Deterministic toy decoder: pre-norm blocks, RoPE multi-head attention,
//! GeLU MLP, tied embeddings.

mod config;
mod generate;
pub mod weights;

pub use config::ModelConfig;
pub use generate::{argmax, Generation};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::cache::KvCache;
use crate::error::{Error, Result};
use crate::rope::RotaryTable;
use crate::scalar::Scalar;
use crate::tensor::{dot, gelu, rms_norm_into, softmax_in_place, vec_mat_into, Matrix};
use crate::tokens::{TokenId, TokenSequence};

/// Which positions of a forward pass should produce vocabulary logits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Logits {
    None,
    Last,
    All,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerWeights<T> {
    pub attn_norm: Vec<T>,
    pub wq: Matrix<T>,
    pub wk: Matrix<T>,
    pub wv: Matrix<T>,
    pub wo: Matrix<T>,
    pub mlp_norm: Vec<T>,
    pub w_in: Matrix<T>,
    pub w_out: Matrix<T>,
}

/// All projections are stored `[in, out]`, so a row vector multiplies from the
/// left.
#[derive(Clone, Debug)]
pub struct ToyDecoder<T = f32> {
    config: ModelConfig,
    embedding: Matrix<T>,
    layers: Vec<LayerWeights<T>>,
    final_norm: Vec<T>,
    rope: RotaryTable<T>,
}

fn gaussian<T: Scalar>(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Matrix<T> {
    let data = (0..rows * cols)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            T::from_f64_lossy(z * std)
        })
        .collect();
    Matrix::from_vec(rows, cols, data).expect("gaussian draws are finite")
}

impl<T: Scalar> ToyDecoder<T> {
    /// Builds a model whose weights are a pure function of `config.seed`.
    /// Draws are made in `f64` and narrowed, so an `f32` and an `f64` model
    /// with the same seed agree to rounding.
    pub fn init(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let h = config.hidden_dim;
        let f = config.mlp_dim;
        let embedding = gaussian(&mut rng, config.vocab_size, h, 1.0);
        let inv = |fan_in: usize| 1.0 / (fan_in as f64).sqrt();
        let layers = (0..config.n_layers)
            .map(|_| LayerWeights {
                attn_norm: vec![T::one(); h],
                wq: gaussian(&mut rng, h, h, inv(h)),
                wk: gaussian(&mut rng, h, h, inv(h)),
                wv: gaussian(&mut rng, h, h, inv(h)),
                wo: gaussian(&mut rng, h, h, inv(h)),
                mlp_norm: vec![T::one(); h],
                w_in: gaussian(&mut rng, h, f, inv(h)),
                w_out: gaussian(&mut rng, f, h, inv(f)),
            })
            .collect();
        Self::from_parts(config, embedding, layers, vec![T::one(); h])
    }

    /// Assembles a model from explicit weights, checking every shape.
    pub fn from_parts(
        config: ModelConfig,
        embedding: Matrix<T>,
        layers: Vec<LayerWeights<T>>,
        final_norm: Vec<T>,
    ) -> Result<Self> {
        config.validate()?;
        let h = config.hidden_dim;
        let f = config.mlp_dim;
        let expect = |name: &str, m: &Matrix<T>, shape: (usize, usize)| -> Result<()> {
            if m.shape() != shape {
                return Err(Error::Config(format!(
                    "{name} has shape {:?}, expected {shape:?}",
                    m.shape()
                )));
            }
            Ok(())
        };
        expect("embedding", &embedding, (config.vocab_size, h))?;
        if layers.len() != config.n_layers {
            return Err(Error::Config(format!(
                "{} layers supplied for n_layers = {}",
                layers.len(),
                config.n_layers
            )));
        }
        for (i, l) in layers.iter().enumerate() {
            for (name, m) in [("wq", &l.wq), ("wk", &l.wk), ("wv", &l.wv), ("wo", &l.wo)] {
                expect(&format!("layers.{i}.{name}"), m, (h, h))?;
            }
            expect(&format!("layers.{i}.w_in"), &l.w_in, (h, f))?;
            expect(&format!("layers.{i}.w_out"), &l.w_out, (f, h))?;
            if l.attn_norm.len() != h || l.mlp_norm.len() != h {
                return Err(Error::Config(format!("layers.{i} norm gain length != {h}")));
            }
        }
        if final_norm.len() != h {
            return Err(Error::Config(format!("final_norm length != {h}")));
        }
        let rope = RotaryTable::new(config.head_dim, config.rope_base, 1024)?;
        Ok(Self {
            config,
            embedding,
            layers,
            final_norm,
            rope,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn rope(&self) -> &RotaryTable<T> {
        &self.rope
    }

    pub fn embedding(&self) -> &Matrix<T> {
        &self.embedding
    }

    pub fn layers(&self) -> &[LayerWeights<T>] {
        &self.layers
    }

    pub fn final_norm(&self) -> &[T] {
        &self.final_norm
    }

    /// An empty cache shaped for this model.
    pub fn new_cache(&self) -> KvCache<T> {
        KvCache::new(
            self.config.n_layers,
            self.config.n_heads,
            self.config.head_dim,
        )
    }

    pub fn check_cache(&self, cache: &KvCache<T>) -> Result<()> {
        cache.check_geometry(
            self.config.n_layers,
            self.config.n_heads,
            self.config.head_dim,
        )
    }

    pub fn check_tokens(&self, tokens: &[TokenId]) -> Result<()> {
        if let Some((i, &t)) = tokens
            .iter()
            .enumerate()
            .find(|(_, &t)| t as usize >= self.config.vocab_size)
        {
            return Err(Error::arg(format!(
                "token {t} at index {i} is outside vocab of {}",
                self.config.vocab_size
            )));
        }
        Ok(())
    }

    /// Runs `tokens` forward at positions `cache.len()..`, appending their
    /// keys and values to `cache`. Each new token attends causally to the
    /// whole cache plus the new tokens before it.
    pub fn extend(
        &self,
        cache: &mut KvCache<T>,
        tokens: &[TokenId],
        logits: Logits,
    ) -> Result<Vec<Vec<T>>> {
        self.check_cache(cache)?;
        self.check_tokens(tokens)?;
        let m = tokens.len();
        if m == 0 {
            return Ok(Vec::new());
        }
        let cfg = &self.config;
        let (hd, nh, d) = (cfg.hidden_dim, cfg.n_heads, cfg.head_dim);
        let base = cache.len();
        let eps = T::from_f64_lossy(cfg.norm_eps);
        let scale = T::one() / T::from_usize(d).expect("head_dim fits").sqrt();
        let angles = self.rope.angles_for(base + m + 1);

        let mut x = self.embedding.gather_rows(tokens)?.into_data();
        let mut xn = vec![T::zero(); hd];
        let mut q = vec![T::zero(); m * hd];
        let mut k = vec![T::zero(); m * hd];
        let mut v = vec![T::zero(); m * hd];
        let mut att = vec![T::zero(); hd];
        let mut proj = vec![T::zero(); hd];
        let mut mlp = vec![T::zero(); cfg.mlp_dim];
        let mut scores = Vec::with_capacity(base + m);

        for (l, w) in self.layers.iter().enumerate() {
            for r in 0..m {
                let rows = r * hd..(r + 1) * hd;
                rms_norm_into(&x[rows.clone()], &w.attn_norm, eps, &mut xn);
                vec_mat_into(&xn, &w.wq, &mut q[rows.clone()]);
                vec_mat_into(&xn, &w.wk, &mut k[rows.clone()]);
                vec_mat_into(&xn, &w.wv, &mut v[rows.clone()]);
                let pos = (base + r) as i64;
                for head in 0..nh {
                    let hs = r * hd + head * d..r * hd + (head + 1) * d;
                    angles.rotate_in_place(&mut q[hs.clone()], pos);
                    angles.rotate_in_place(&mut k[hs], pos);
                }
            }
            cache.push_layer_rows(l, &k, &v);
            let keys = cache.layer_keys(l);
            let values = cache.layer_values(l);

            for r in 0..m {
                let n_ctx = base + r + 1;
                for head in 0..nh {
                    let qh = &q[r * hd + head * d..r * hd + (head + 1) * d];
                    scores.clear();
                    scores.extend((0..n_ctx).map(|p| {
                        let off = (p * nh + head) * d;
                        dot(qh, &keys[off..off + d]) * scale
                    }));
                    softmax_in_place(&mut scores);
                    let out = &mut att[head * d..(head + 1) * d];
                    out.fill(T::zero());
                    for (p, &a) in scores.iter().enumerate() {
                        let off = (p * nh + head) * d;
                        for (o, &vv) in out.iter_mut().zip(&values[off..off + d]) {
                            *o += a * vv;
                        }
                    }
                }
                let xr = &mut x[r * hd..(r + 1) * hd];
                vec_mat_into(&att, &w.wo, &mut proj);
                for (a, &b) in xr.iter_mut().zip(&proj) {
                    *a += b;
                }
                rms_norm_into(xr, &w.mlp_norm, eps, &mut xn);
                vec_mat_into(&xn, &w.w_in, &mut mlp);
                for u in mlp.iter_mut() {
                    *u = gelu(*u);
                }
                vec_mat_into(&mlp, &w.w_out, &mut proj);
                for (a, &b) in xr.iter_mut().zip(&proj) {
                    *a += b;
                }
            }
        }
        cache.commit(m);

        let rows: Vec<usize> = match logits {
            Logits::None => Vec::new(),
            Logits::Last => vec![m - 1],
            Logits::All => (0..m).collect(),
        };
        Ok(rows
            .into_iter()
            .map(|r| self.unembed(&x[r * hd..(r + 1) * hd], &mut xn))
            .collect())
    }

    fn unembed(&self, h: &[T], scratch: &mut [T]) -> Vec<T> {
        let eps = T::from_f64_lossy(self.config.norm_eps);
        rms_norm_into(h, &self.final_norm, eps, scratch);
        (0..self.config.vocab_size)
            .map(|t| dot(scratch, self.embedding.row(t)))
            .collect()
    }

    /// Encodes a full sequence from scratch. Returns the cache (one entry per
    /// token) and the next-token logits after the final token.
    pub fn encode(&self, seq: &[TokenId]) -> Result<(KvCache<T>, Vec<T>)> {
        if seq.is_empty() {
            return Err(Error::arg("cannot encode an empty sequence"));
        }
        let mut cache = self.new_cache();
        let mut logits = self.extend(&mut cache, seq, Logits::Last)?;
        Ok((cache, logits.pop().expect("one row requested")))
    }

    /// Like [`ToyDecoder::encode`] but returns logits at every position.
    pub fn encode_all(&self, seq: &[TokenId]) -> Result<(KvCache<T>, Vec<Vec<T>>)> {
        if seq.is_empty() {
            return Err(Error::arg("cannot encode an empty sequence"));
        }
        let mut cache = self.new_cache();
        let logits = self.extend(&mut cache, seq, Logits::All)?;
        Ok((cache, logits))
    }

    /// Feeds one token against the cache and returns the next-token logits.
    pub fn decode_step(&self, cache: &mut KvCache<T>, token: TokenId) -> Result<Vec<T>> {
        let mut logits = self.extend(cache, &[token], Logits::Last)?;
        Ok(logits.pop().expect("one row requested"))
    }

    /// Next-token logits for a cache that covers all of `seq`: the last
    /// position is dropped and its token re-fed as the decode input.
    pub fn next_logits(&self, cache: &mut KvCache<T>, seq: &TokenSequence) -> Result<Vec<T>> {
        let last = Self::decode_entry(cache, seq)?;
        self.decode_step(cache, last)
    }

    /// Prepares a cache that covers `seq` for decoding: drops the final
    /// position and returns the token that must be fed to regenerate it.
    pub fn decode_entry(cache: &mut KvCache<T>, seq: &TokenSequence) -> Result<TokenId> {
        let last = seq
            .last_token()
            .ok_or_else(|| Error::arg("cannot decode from an empty sequence"))?;
        if cache.len() != seq.len() {
            return Err(Error::Cache(format!(
                "cache holds {} positions but sequence has {} tokens",
                cache.len(),
                seq.len()
            )));
        }
        cache.truncate(seq.len() - 1);
        Ok(last)
    }

    /// A copy of this model in another scalar type.
    pub fn cast<U: Scalar>(&self) -> ToyDecoder<U> {
        let cast_vec = |v: &[T]| {
            v.iter()
                .map(|&x| U::from_f64_lossy(x.to_f64_lossy()))
                .collect()
        };
        let layers = self
            .layers
            .iter()
            .map(|l| LayerWeights {
                attn_norm: cast_vec(&l.attn_norm),
                wq: l.wq.cast(),
                wk: l.wk.cast(),
                wv: l.wv.cast(),
                wo: l.wo.cast(),
                mlp_norm: cast_vec(&l.mlp_norm),
                w_in: l.w_in.cast(),
                w_out: l.w_out.cast(),
            })
            .collect();
        ToyDecoder::from_parts(
            self.config.clone(),
            self.embedding.cast(),
            layers,
            cast_vec(&self.final_norm),
        )
        .expect("casting preserves shapes")
    }
}
