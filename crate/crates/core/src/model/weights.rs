//! Raw weight blobs: an 8-byte little-endian header length, a JSON header,
//! then a contiguous little-endian `f32` payload.
//!
//! ```text
//! { "config": { ...ModelConfig... },
//!   "tensors": { "embedding": { "offset": 0, "shape": [512, 64] }, ... } }
//! ```
//!
//! Offsets are in bytes from the start of the payload. Norm gains are stored
//! as `[1, n]` tensors.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LayerWeights, ModelConfig, ToyDecoder};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Matrix;

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    offset: usize,
    shape: [usize; 2],
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    tensors: BTreeMap<String, TensorEntry>,
}

fn named_tensors<T: Scalar>(m: &ToyDecoder<T>) -> Vec<(String, (usize, usize), Vec<T>)> {
    let mut out = vec![(
        "embedding".to_string(),
        m.embedding.shape(),
        m.embedding.data().to_vec(),
    )];
    for (i, l) in m.layers.iter().enumerate() {
        let gain = |v: &Vec<T>| ((1, v.len()), v.clone());
        let mat = |x: &Matrix<T>| (x.shape(), x.data().to_vec());
        for (name, (shape, data)) in [
            ("attn_norm", gain(&l.attn_norm)),
            ("wq", mat(&l.wq)),
            ("wk", mat(&l.wk)),
            ("wv", mat(&l.wv)),
            ("wo", mat(&l.wo)),
            ("mlp_norm", gain(&l.mlp_norm)),
            ("w_in", mat(&l.w_in)),
            ("w_out", mat(&l.w_out)),
        ] {
            out.push((format!("layers.{i}.{name}"), shape, data));
        }
    }
    out.push((
        "final_norm".to_string(),
        (1, m.final_norm.len()),
        m.final_norm.clone(),
    ));
    out
}

pub fn write_weights<T: Scalar, W: Write>(model: &ToyDecoder<T>, mut w: W) -> Result<()> {
    let tensors = named_tensors(model);
    let mut header = Header {
        config: model.config.clone(),
        tensors: BTreeMap::new(),
    };
    let mut offset = 0;
    for (name, shape, data) in &tensors {
        header.tensors.insert(
            name.clone(),
            TensorEntry {
                offset,
                shape: [shape.0, shape.1],
            },
        );
        offset += data.len() * 4;
    }
    let json = serde_json::to_vec(&header)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for (_, _, data) in &tensors {
        for &x in data {
            w.write_all(&(x.to_f64_lossy() as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_weights<T: Scalar, R: Read>(mut r: R) -> Result<ToyDecoder<T>> {
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let header: Header = serde_json::from_slice(&json)?;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;

    let take = |name: &str| -> Result<Matrix<T>> {
        let e = header
            .tensors
            .get(name)
            .ok_or_else(|| Error::Weights(format!("missing tensor {name}")))?;
        let n = e.shape[0] * e.shape[1];
        let bytes = payload
            .get(e.offset..e.offset + n * 4)
            .ok_or_else(|| Error::Weights(format!("tensor {name} runs past the payload")))?;
        let data = bytes
            .chunks_exact(4)
            .map(|b| T::from_f64_lossy(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64))
            .collect();
        Matrix::from_vec(e.shape[0], e.shape[1], data)
            .map_err(|err| Error::Weights(format!("tensor {name}: {err}")))
    };

    let embedding = take("embedding")?;
    let mut layers = Vec::with_capacity(header.config.n_layers);
    for i in 0..header.config.n_layers {
        let t = |n: &str| take(&format!("layers.{i}.{n}"));
        layers.push(LayerWeights {
            attn_norm: t("attn_norm")?.into_data(),
            wq: t("wq")?,
            wk: t("wk")?,
            wv: t("wv")?,
            wo: t("wo")?,
            mlp_norm: t("mlp_norm")?.into_data(),
            w_in: t("w_in")?,
            w_out: t("w_out")?,
        });
    }
    let final_norm = take("final_norm")?.into_data();
    ToyDecoder::from_parts(header.config, embedding, layers, final_norm)
}

pub fn save_weights<T: Scalar>(model: &ToyDecoder<T>, path: impl AsRef<Path>) -> Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_weights(model, f)
}

pub fn load_weights<T: Scalar>(path: impl AsRef<Path>) -> Result<ToyDecoder<T>> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    read_weights(f)
}
