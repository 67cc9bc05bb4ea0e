//! Document embeddings: the EMB1 container and a hashed n-gram fallback encoder.
//!
//! EMB1 layout (little-endian):
//!
//! ```text
//! "EMB1" | u32 version = 1 | u32 n | u32 dim
//! n × ( u16 id_len | id bytes (UTF-8) | dim × f32 )
//! u32 CRC32 of every preceding byte
//! ```

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2};
use xxhash_rust::xxh3::xxh3_64_with_seed;

use crate::binfmt::{Reader, Writer};
use crate::dataset::DocumentRecord;
use crate::error::{Error, FormatError, Result};

pub const EMB1_MAGIC: &[u8; 4] = b"EMB1";
pub const EMB1_VERSION: u32 = 1;
pub const DEFAULT_DIM: usize = 768;

/// `n × dim` single-precision embeddings keyed by document id.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    doc_ids: Vec<String>,
    data: Array2<f32>,
}

impl EmbeddingMatrix {
    pub fn new(doc_ids: Vec<String>, data: Array2<f32>) -> std::result::Result<Self, FormatError> {
        if data.ncols() == 0 || data.ncols() > u32::MAX as usize {
            return Err(FormatError::BadDimension(data.ncols() as u32));
        }
        if doc_ids.len() != data.nrows() {
            return Err(FormatError::Malformed(format!(
                "{} ids for {} rows",
                doc_ids.len(),
                data.nrows()
            )));
        }
        let mut seen = HashSet::with_capacity(doc_ids.len());
        for id in &doc_ids {
            if !seen.insert(id.as_str()) {
                return Err(FormatError::DuplicateId(id.clone()));
            }
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(FormatError::NonFinite(i));
        }
        Ok(Self { doc_ids, data })
    }

    /// An `n = 0` matrix of the given width.
    pub fn empty(dim: usize) -> Self {
        Self::new(Vec::new(), Array2::zeros((0, dim))).expect("positive dimension")
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn data(&self) -> ArrayView2<'_, f32> {
        self.data.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f32> {
        self.data.row(i)
    }

    /// Widened copy for training math.
    pub fn to_f64(&self) -> Array2<f64> {
        self.data.mapv(f64::from)
    }

    /// Rows reordered (and possibly subset) to follow `docs`; errors on any
    /// document without a row.
    pub fn select_docs(&self, docs: &[DocumentRecord]) -> Result<EmbeddingMatrix> {
        let index: HashMap<&str, usize> = self
            .doc_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let mut rows = Vec::with_capacity(docs.len());
        for d in docs {
            rows.push(
                *index
                    .get(d.id.as_str())
                    .ok_or_else(|| Error::MissingEmbedding(d.id.clone()))?,
            );
        }
        let data = self.data.select(ndarray::Axis(0), &rows);
        let ids = docs.iter().map(|d| d.id.clone()).collect();
        EmbeddingMatrix::new(ids, data).map_err(|e| Error::Invalid(e.to_string()))
    }

    pub fn to_bytes(&self) -> std::result::Result<Vec<u8>, FormatError> {
        let id_bytes: usize = self.doc_ids.iter().map(|s| 2 + s.len()).sum();
        let mut w = Writer::with_capacity(16 + id_bytes + self.data.len() * 4 + 4);
        w.bytes(EMB1_MAGIC);
        w.u32(EMB1_VERSION);
        w.u32(u32::try_from(self.len()).map_err(|_| FormatError::Malformed("too many rows".into()))?);
        w.u32(self.dim() as u32);
        for (id, row) in self.doc_ids.iter().zip(self.data.rows()) {
            w.short_str(id)?;
            for &v in row {
                w.f32(v);
            }
        }
        Ok(w.finish())
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, FormatError> {
        let mut r = Reader::open(bytes, EMB1_MAGIC)?;
        let version = r.u32()?;
        if version != EMB1_VERSION {
            return Err(FormatError::UnsupportedVersion(version));
        }
        let n = r.u32()? as usize;
        let dim = r.u32()?;
        if dim == 0 {
            return Err(FormatError::BadDimension(dim));
        }
        let dim = dim as usize;
        // every record carries at least its length prefix and values
        let min_payload = n.saturating_mul(2 + dim * 4);
        if r.payload_remaining() < min_payload {
            return Err(FormatError::Truncated {
                offset: bytes.len(),
                needed: min_payload - r.payload_remaining(),
            });
        }
        r.verify_crc()?;
        let mut ids = Vec::with_capacity(n);
        let mut data = Array2::<f32>::zeros((n, dim));
        for mut row in data.rows_mut() {
            ids.push(r.short_str()?);
            r.f32_into(row.as_slice_mut().expect("standard layout"))?;
        }
        r.finish()?;
        Self::new(ids, data)
    }
}

pub fn write_embeddings(m: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = m.to_bytes().map_err(|e| Error::format(path, e))?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    EmbeddingMatrix::from_bytes(&bytes).map_err(|e| Error::format(path, e))
}

/// Minimum width accepted by [`hash_encode`].
pub const MIN_HASH_DIM: usize = 8;

/// Signed feature hashing of lowercased character 3-grams, L2-normalized.
///
/// Texts shorter than three characters hash as a single gram. Row `i`
/// depends only on `docs[i].text`, `dim` and `seed`.
pub fn hash_encode(docs: &[DocumentRecord], dim: usize, seed: u64) -> Result<EmbeddingMatrix> {
    if dim < MIN_HASH_DIM {
        return Err(Error::Config(format!(
            "hash encoder needs dim >= {MIN_HASH_DIM}, got {dim}"
        )));
    }
    let mut data = Array2::<f32>::zeros((docs.len(), dim));
    let mut acc = vec![0f64; dim];
    for (doc, mut row) in docs.iter().zip(data.rows_mut()) {
        hash_text(&doc.text, seed, &mut acc);
        for (dst, &v) in row.iter_mut().zip(&acc) {
            *dst = v as f32;
        }
    }
    let ids = docs.iter().map(|d| d.id.clone()).collect();
    EmbeddingMatrix::new(ids, data).map_err(|e| Error::Invalid(e.to_string()))
}

fn hash_text(text: &str, seed: u64, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    let dim = out.len() as u64;
    let chars: Vec<char> = text.to_lowercase().chars().collect();
    let mut gram = String::with_capacity(12);
    let mut unsigned = vec![0f64; out.len()];
    let mut add = |g: &str| {
        let h = xxh3_64_with_seed(g.as_bytes(), seed);
        let bucket = (h % dim) as usize;
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        out[bucket] += sign;
        unsigned[bucket] += 1.0;
    };
    if chars.is_empty() {
        return;
    }
    if chars.len() < 3 {
        gram.extend(chars.iter());
        add(&gram);
    } else {
        for w in chars.windows(3) {
            gram.clear();
            gram.extend(w.iter());
            add(&gram);
        }
    }
    let mut norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        // every bucket cancelled; fall back to unsigned counts
        out.copy_from_slice(&unsigned);
        norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
    }
    out.iter_mut().for_each(|v| *v /= norm);
}
