//! Binary model files.
//!
//! Layout: the magic bytes `CALM1`, then little-endian `u64` bucket count,
//! hidden size and head count; per head the task id (u64 byte length then
//! UTF-8) and its label count; then every parameter as `f64`: the encoder
//! matrix row by row, then each head's weight matrix and bias in header
//! order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use indexmap::IndexMap;

use super::features::{FeatureMode, Featurizer};
use super::model::{Encoder, Model, TaskHead};
use super::ModelError;

const MAGIC: &[u8; 5] = b"CALM1";
// Sanity bounds for headers read from disk.
const MAX_BUCKETS: u64 = 1 << 28;
const MAX_DIM: u64 = 1 << 16;
const MAX_HEADS: u64 = 1 << 16;
const MAX_LABELS: u64 = 1 << 16;
const MAX_ID_LEN: u64 = 1 << 16;

impl Model {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Model, ModelError> {
        Model::read_from(&mut BufReader::new(File::open(path)?))
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<(), ModelError> {
        let dim = self.dim();
        w.write_all(MAGIC)?;
        put_u64(w, self.encoder.buckets() as u64)?;
        put_u64(w, dim as u64)?;
        put_u64(w, self.heads.len() as u64)?;
        for (id, head) in &self.heads {
            put_u64(w, id.len() as u64)?;
            w.write_all(id.as_bytes())?;
            put_u64(w, head.n_labels as u64)?;
        }
        let mut row = vec![0.0; dim];
        for r in 0..self.encoder.buckets() {
            self.encoder.row(r, &mut row);
            for v in &row {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        for head in self.heads.values() {
            for v in head.weight.iter().chain(&head.bias) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Loaded models featurize the joined string.
    pub fn read_from(r: &mut impl Read) -> Result<Model, ModelError> {
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(ModelError::Format("bad magic".into()));
        }
        let buckets = bounded(get_u64(r)?, MAX_BUCKETS, "bucket count")?;
        let dim = bounded(get_u64(r)?, MAX_DIM, "hidden size")?;
        let n_heads = get_u64(r)?;
        if n_heads > MAX_HEADS {
            return Err(ModelError::Format("too many heads".into()));
        }
        let mut header = Vec::with_capacity(n_heads as usize);
        for _ in 0..n_heads {
            let len = get_u64(r)?;
            if len > MAX_ID_LEN {
                return Err(ModelError::Format("task id too long".into()));
            }
            let mut id = vec![0u8; len as usize];
            r.read_exact(&mut id)?;
            let id = String::from_utf8(id).map_err(|_| ModelError::Format("task id is not UTF-8".into()))?;
            let n_labels = bounded(get_u64(r)?, MAX_LABELS, "label count")?;
            header.push((id, n_labels));
        }
        let encoder = Encoder::from_dense(buckets, dim, get_f64s(r, buckets * dim)?);
        let mut heads = IndexMap::with_capacity(header.len());
        for (id, n_labels) in header {
            let weight = get_f64s(r, n_labels * dim)?;
            let bias = get_f64s(r, n_labels)?;
            if heads.insert(id.clone(), TaskHead { n_labels, weight, bias }).is_some() {
                return Err(ModelError::Format(format!("duplicate head `{id}`")));
            }
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(ModelError::Format("trailing bytes".into()));
        }
        Ok(Model {
            featurizer: Featurizer::new(buckets, FeatureMode::Joined),
            encoder,
            heads,
        })
    }
}

fn bounded(v: u64, max: u64, what: &str) -> Result<usize, ModelError> {
    if v == 0 || v > max {
        return Err(ModelError::Format(format!("{what} {v} out of range")));
    }
    Ok(v as usize)
}

fn put_u64(w: &mut impl Write, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn get_u64(r: &mut impl Read) -> Result<u64, ModelError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>, ModelError> {
    let mut out = Vec::with_capacity(n);
    let mut b = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut b)?;
        out.push(f64::from_le_bytes(b));
    }
    Ok(out)
}
