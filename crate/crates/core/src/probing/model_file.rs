//! PRB1 model container.
//!
//! ```text
//! "PRB1" | u32 version = 1
//! u32 layers | layers × u32 dim | u32 heads | u32 input_dim | u32 classes
//! f64 learning_rate | u32 batch_size | u32 epochs | u64 seed | u32 max_doc_length
//! u32 label_count | label_count × (u16 len | UTF-8 bytes)
//! head weights: layer-major, head-major, row-major f32
//! output weight (row-major f32) | output bias (f32)
//! u32 CRC32 of every preceding byte
//! ```

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{ProbingConfig, ProbingNetwork};
use crate::binfmt::{Reader, Writer};
use crate::dataset::LabelSpace;
use crate::error::{Error, FormatError, Result};

pub const PRB1_MAGIC: &[u8; 4] = b"PRB1";
pub const PRB1_VERSION: u32 = 1;

fn to_u32(v: usize, what: &str) -> std::result::Result<u32, FormatError> {
    u32::try_from(v).map_err(|_| FormatError::Malformed(format!("{what} too large")))
}

pub(crate) fn encode(net: &ProbingNetwork, labels: &LabelSpace) -> std::result::Result<Vec<u8>, FormatError> {
    let cfg = net.config();
    if labels.len() != cfg.classes {
        return Err(FormatError::Malformed(format!(
            "{} labels for {} classes",
            labels.len(),
            cfg.classes
        )));
    }
    let mut w = Writer::with_capacity(64 + net.parameter_count() * 4);
    w.bytes(PRB1_MAGIC);
    w.u32(PRB1_VERSION);
    w.u32(to_u32(cfg.layers(), "layers")?);
    for &d in &cfg.layer_dims {
        w.u32(to_u32(d, "layer dim")?);
    }
    w.u32(to_u32(cfg.heads, "heads")?);
    w.u32(to_u32(cfg.input_dim, "input_dim")?);
    w.u32(to_u32(cfg.classes, "classes")?);
    w.f64(cfg.learning_rate);
    w.u32(to_u32(cfg.batch_size, "batch_size")?);
    w.u32(to_u32(cfg.epochs, "epochs")?);
    w.u64(cfg.seed);
    w.u32(to_u32(cfg.max_doc_length, "max_doc_length")?);
    w.u32(to_u32(labels.len(), "labels")?);
    for name in labels.names() {
        w.short_str(name)?;
    }
    for group in net.param_groups() {
        for &v in group {
            w.f32(v as f32);
        }
    }
    Ok(w.finish())
}

pub(crate) fn decode(bytes: &[u8]) -> std::result::Result<(ProbingNetwork, LabelSpace), FormatError> {
    let mut r = Reader::open(bytes, PRB1_MAGIC)?;
    let version = r.u32()?;
    if version != PRB1_VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    r.verify_crc()?;
    let layers = r.u32()? as usize;
    if layers == 0 || layers > r.remaining() {
        return Err(FormatError::Malformed(format!("layer count {layers}")));
    }
    let layer_dims = (0..layers)
        .map(|_| {
            let d = r.u32()?;
            if d == 0 {
                return Err(FormatError::BadDimension(d));
            }
            Ok(d as usize)
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let heads = r.u32()? as usize;
    let input_dim = r.u32()? as usize;
    let classes = r.u32()? as usize;
    let config = ProbingConfig {
        layer_dims,
        heads,
        input_dim,
        classes,
        learning_rate: r.f64()?,
        batch_size: r.u32()? as usize,
        epochs: r.u32()? as usize,
        seed: r.u64()?,
        max_doc_length: r.u32()? as usize,
    };
    config
        .validate()
        .map_err(|e| FormatError::Malformed(e.to_string()))?;
    let n_labels = r.u32()? as usize;
    if n_labels > r.remaining() {
        return Err(FormatError::Malformed(format!("label count {n_labels}")));
    }
    let names = (0..n_labels)
        .map(|_| r.short_str())
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let labels = LabelSpace::new(names).map_err(|e| FormatError::Malformed(e.to_string()))?;
    if labels.len() != classes {
        return Err(FormatError::Malformed(format!(
            "{} labels for {classes} classes",
            labels.len()
        )));
    }
    if r.remaining() < config.parameter_count() * 4 {
        return Err(FormatError::Truncated {
            offset: bytes.len(),
            needed: config.parameter_count() * 4 - r.remaining(),
        });
    }

    let mut read_matrix = |rows: usize, cols: usize| -> std::result::Result<Array2<f64>, FormatError> {
        let mut buf = vec![0f32; rows * cols];
        r.f32_into(&mut buf)?;
        Ok(Array2::from_shape_vec((rows, cols), buf.into_iter().map(f64::from).collect())
            .expect("shape matches buffer"))
    };
    let mut head_weights = Vec::with_capacity(layers);
    for i in 0..layers {
        let mut layer = Vec::with_capacity(heads);
        for _ in 0..heads {
            layer.push(read_matrix(config.layer_input_dim(i), config.layer_dims[i])?);
        }
        head_weights.push(layer);
    }
    let output_weight = read_matrix(config.pooled_dim(), classes)?;
    let output_bias: Array1<f64> = read_matrix(1, classes)?.into_shape_with_order(classes).expect("1 × m");
    r.finish()?;
    let net = ProbingNetwork::from_parts(config, head_weights, output_weight, output_bias)
        .map_err(|e| FormatError::Malformed(e.to_string()))?;
    Ok((net, labels))
}

/// Writes the network (rounded to f32) and its label names.
pub fn write_model(path: impl AsRef<Path>, net: &ProbingNetwork, labels: &LabelSpace) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(net, labels).map_err(|e| Error::format(path, e))?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_model(path: impl AsRef<Path>) -> Result<(ProbingNetwork, LabelSpace)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| Error::format(path, e))
}
