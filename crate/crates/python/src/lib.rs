//! Python bindings. Vectors and matrices cross the boundary as plain lists.

use std::path::PathBuf;

use ::emoprobe as core;
use core::dataset::{LabelSpace, Split, SplitCorpus};
use core::embedding::EmbeddingMatrix;
use core::geometry::{build_wheel, BasicSet, EmotionEmbedding, WeightGrid};
use core::pad::{KnownPad, PadOptions};
use core::pipeline::{self, PipelineConfig};
use core::probing::{self, ProbingConfig};
use ndarray::{Array1, Array2};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

create_exception!(emoprobe, EmoprobeError, PyException);

fn err(e: core::Error) -> PyErr {
    EmoprobeError::new_err(e.to_string())
}

fn to_matrix(rows: &[Vec<f64>]) -> PyResult<Array2<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(EmoprobeError::new_err("rows have different lengths"));
    }
    Ok(Array2::from_shape_fn((rows.len(), cols), |(i, j)| rows[i][j]))
}

fn to_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn parse_split(split: &str) -> PyResult<Split> {
    split.parse().map_err(EmoprobeError::new_err)
}

/// A corpus split into trn/dev/tst.
#[pyclass(name = "Corpus", frozen)]
struct PyCorpus {
    inner: SplitCorpus,
}

#[pymethods]
impl PyCorpus {
    /// Loads TSV, CSV or JSONL (chosen by extension).
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: pipeline::open_corpus(&path).map_err(err)?,
        })
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.inner.labels.names().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// `(id, label, text)` for each document of a split.
    fn documents(&self, split: &str) -> PyResult<Vec<(String, String, String)>> {
        Ok(self
            .inner
            .split(parse_split(split)?)
            .iter()
            .map(|d| (d.id.clone(), d.label.clone(), d.text.clone()))
            .collect())
    }

    /// Label indices of a split's documents.
    fn gold(&self, split: &str) -> PyResult<Vec<usize>> {
        self.inner
            .label_indices(self.inner.split(parse_split(split)?))
            .map_err(err)
    }

    /// `(count, mean_tokens, std_tokens)`.
    fn stats(&self, split: &str) -> PyResult<(usize, f64, f64)> {
        let s = core::dataset::corpus_stats(self.inner.split(parse_split(split)?)).map_err(err)?;
        Ok((s.count, s.mean_tokens, s.std_tokens))
    }

    fn stats_table(&self) -> String {
        pipeline::stats_table(&self.inner)
    }

    /// Hash-encoded embeddings of one split.
    #[pyo3(signature = (split, dim = 768, seed = 0))]
    fn hash_encode(&self, split: &str, dim: usize, seed: u64) -> PyResult<PyEmbeddings> {
        Ok(PyEmbeddings {
            inner: core::embedding::hash_encode(self.inner.split(parse_split(split)?), dim, seed).map_err(err)?,
        })
    }
}

/// Document embeddings with ids (EMB1 on disk).
#[pyclass(name = "Embeddings", frozen)]
struct PyEmbeddings {
    inner: EmbeddingMatrix,
}

#[pymethods]
impl PyEmbeddings {
    #[new]
    fn new(ids: Vec<String>, rows: Vec<Vec<f32>>) -> PyResult<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(EmoprobeError::new_err("rows have different lengths"));
        }
        let data = Array2::from_shape_fn((rows.len(), dim), |(i, j)| rows[i][j]);
        let inner = EmbeddingMatrix::new(ids, data).map_err(|e| EmoprobeError::new_err(e.to_string()))?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: core::embedding::read_embeddings(path).map_err(err)?,
        })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        core::embedding::write_embeddings(&self.inner, path).map_err(err)
    }

    #[getter]
    fn ids(&self) -> Vec<String> {
        self.inner.doc_ids().to_vec()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.to_f64())
    }
}

/// Multi-head probing network plus the label names it predicts.
#[pyclass(name = "ProbingNetwork")]
struct PyNetwork {
    net: probing::ProbingNetwork,
    labels: LabelSpace,
}

#[pymethods]
impl PyNetwork {
    #[new]
    #[pyo3(signature = (labels, layer_dims = vec![64, 32], heads = 8, input_dim = 768, learning_rate = 5e-5, batch_size = 32, epochs = 10, seed = 0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        labels: Vec<String>,
        layer_dims: Vec<usize>,
        heads: usize,
        input_dim: usize,
        learning_rate: f64,
        batch_size: usize,
        epochs: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let labels = LabelSpace::new(labels).map_err(err)?;
        let cfg = ProbingConfig {
            layer_dims,
            heads,
            input_dim,
            classes: labels.len(),
            learning_rate,
            batch_size,
            epochs,
            seed,
            ..Default::default()
        };
        Ok(Self {
            net: probing::ProbingNetwork::init(&cfg).map_err(err)?,
            labels,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let (net, labels) = probing::read_model(path).map_err(err)?;
        Ok(Self { net, labels })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        probing::write_model(path, &self.net, &self.labels).map_err(err)
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.labels.names().to_vec()
    }

    #[getter]
    fn layer_dims(&self) -> Vec<usize> {
        self.net.config().layer_dims.clone()
    }

    #[getter]
    fn parameter_count(&self) -> usize {
        self.net.parameter_count()
    }

    /// Class probabilities for one embedding.
    fn predict_proba(&self, e0: Vec<f64>) -> PyResult<Vec<f64>> {
        let t = self.net.forward(Array1::from(e0).view()).map_err(err)?;
        Ok(t.probabilities.to_vec())
    }

    /// Normalized pooled features `g`, one row per input row.
    fn pooled(&self, rows: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let x = to_matrix(&rows)?;
        Ok(to_rows(&self.net.pooled_features(x.view()).map_err(err)?))
    }

    /// Trains in place; returns `(epoch, train_loss, dev_accuracy)` per epoch
    /// and keeps the best-dev snapshot.
    #[pyo3(signature = (embeddings, labels, dev = None, dev_labels = None))]
    fn fit(
        &mut self,
        embeddings: &PyEmbeddings,
        labels: Vec<usize>,
        dev: Option<PyRef<'_, PyEmbeddings>>,
        dev_labels: Option<Vec<usize>>,
    ) -> PyResult<Vec<(usize, f64, Option<f64>)>> {
        let dev_pair = match (&dev, &dev_labels) {
            (Some(d), Some(l)) => Some((&d.inner, l.as_slice())),
            (None, None) => None,
            _ => return Err(EmoprobeError::new_err("dev and dev_labels go together")),
        };
        let out = probing::train(self.net.clone(), &embeddings.inner, &labels, dev_pair).map_err(err)?;
        self.net = out.network;
        Ok(out
            .history
            .into_iter()
            .map(|m| (m.epoch, m.train_loss, m.dev_accuracy))
            .collect())
    }

    /// `(accuracy, confusion[gold][predicted], predictions)`.
    fn evaluate(&self, embeddings: &PyEmbeddings, labels: Vec<usize>) -> PyResult<(f64, Vec<Vec<u64>>, Vec<usize>)> {
        let e = probing::evaluate(&self.net, &embeddings.inner, &labels).map_err(err)?;
        let confusion = e.confusion.rows().into_iter().map(|r| r.to_vec()).collect();
        Ok((e.accuracy, confusion, e.predictions))
    }

    /// Largest relative gap between backprop and central differences.
    #[pyo3(signature = (e0, label, epsilon = 1e-5))]
    fn grad_check(&self, e0: Vec<f64>, label: usize, epsilon: f64) -> PyResult<f64> {
        let r = probing::grad_check(&self.net, Array1::from(e0).view(), label, epsilon).map_err(err)?;
        Ok(r.max_relative_error)
    }

    /// Mean pooled feature per emotion over `(embeddings, gold)`.
    fn emotion_embeddings(&self, embeddings: &PyEmbeddings, gold: Vec<usize>) -> PyResult<Vec<(String, Vec<f64>)>> {
        let e = core::geometry::emotion_embeddings(&self.net, embeddings.inner.to_f64().view(), &gold, &self.labels)
            .map_err(err)?;
        Ok(e.into_iter().map(|e| (e.emotion, e.vector.to_vec())).collect())
    }
}

fn embeddings_from(pairs: Vec<(String, Vec<f64>)>) -> Vec<EmotionEmbedding> {
    pairs
        .into_iter()
        .map(|(emotion, v)| EmotionEmbedding {
            emotion,
            vector: Array1::from(v),
            support: 1,
        })
        .collect()
}

/// `(complex, basic_i, basic_j, w, cos)` rows kept by `min_cos`, basics in
/// the given order.
#[pyfunction]
#[pyo3(signature = (embeddings, basics, min_cos = 0.1))]
fn emotion_wheel(
    embeddings: Vec<(String, Vec<f64>)>,
    basics: Vec<String>,
    min_cos: f64,
) -> PyResult<Vec<(String, String, String, f64, f64)>> {
    let all = embeddings_from(embeddings);
    let members = basics
        .iter()
        .map(|b| {
            all.iter()
                .find(|e| &e.emotion == b)
                .cloned()
                .ok_or_else(|| EmoprobeError::new_err(format!("no embedding for basic {b:?}")))
        })
        .collect::<PyResult<Vec<_>>>()?;
    let set = BasicSet::new(members).map_err(err)?;
    let wheel = build_wheel(&all, &set, &WeightGrid::default(), min_cos, &basics).map_err(err)?;
    Ok(wheel
        .entries
        .into_iter()
        .map(|e| (e.complex, e.basic_i, e.basic_j, e.weight, e.cosine))
        .collect())
}

/// Rows `(emotion, pleasure, arousal, dominance, source)` for every
/// embedding; `known_tsv` defaults to the built-in 22-emotion table.
#[pyfunction]
#[pyo3(signature = (embeddings, labels, known_tsv = None, dropout = 0.3, max_epochs = 5000, seed = 0))]
fn augment_pad(
    embeddings: Vec<(String, Vec<f64>)>,
    labels: Vec<String>,
    known_tsv: Option<String>,
    dropout: f64,
    max_epochs: usize,
    seed: u64,
) -> PyResult<Vec<(String, f64, f64, f64, String)>> {
    let labels = LabelSpace::new(labels).map_err(err)?;
    let text = known_tsv.unwrap_or_else(core::emotions::russell_pad_tsv);
    let known = KnownPad::parse(&text, &labels).map_err(err)?;
    let opts = PadOptions {
        dropout,
        max_epochs,
        seed,
        ..Default::default()
    };
    let (table, _) = core::pad::augment_pad(&embeddings_from(embeddings), &known, &opts).map_err(err)?;
    Ok(table
        .rows
        .into_iter()
        .map(|r| {
            (
                r.emotion,
                r.values.pleasure,
                r.values.arousal,
                r.values.dominance,
                r.source.as_str().to_owned(),
            )
        })
        .collect())
}

/// Runs the whole pipeline from TOML settings; returns `(file, bytes, crc32)`.
#[pyfunction]
fn full_report(config_toml: &str, out_dir: PathBuf) -> PyResult<Vec<(String, usize, u32)>> {
    let cfg = PipelineConfig::from_toml_str(config_toml).map_err(err)?;
    let m = pipeline::full_report(&cfg, &out_dir).map_err(err)?;
    Ok(m.into_iter().map(|e| (e.file, e.bytes, e.crc32)).collect())
}

#[pyfunction]
fn parse_preset(preset: &str) -> PyResult<Vec<usize>> {
    probing::parse_preset(preset).map_err(err)
}

#[pymodule(name = "emoprobe")]
fn init(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("EmoprobeError", m.py().get_type::<EmoprobeError>())?;
    m.add("EMOTIONS", core::emotions::EMPATHETIC_EMOTIONS.to_vec())?;
    m.add("DEFAULT_BASICS", core::emotions::DEFAULT_BASICS.to_vec())?;
    m.add_class::<PyCorpus>()?;
    m.add_class::<PyEmbeddings>()?;
    m.add_class::<PyNetwork>()?;
    m.add_function(wrap_pyfunction!(emotion_wheel, m)?)?;
    m.add_function(wrap_pyfunction!(augment_pad, m)?)?;
    m.add_function(wrap_pyfunction!(full_report, m)?)?;
    m.add_function(wrap_pyfunction!(parse_preset, m)?)?;
    Ok(())
}
