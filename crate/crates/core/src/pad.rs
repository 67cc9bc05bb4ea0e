//! Pleasure/arousal/dominance regression over emotion embeddings.
//!
//! One small MLP per dimension (ReLU hidden layer, tanh output) is fit to
//! the emotions with known PAD values and then predicts the rest.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::distr::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{normalize_label, LabelSpace};
use crate::error::{Error, Result};
use crate::geometry::EmotionEmbedding;
use crate::probing::Adam;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PadDimension {
    Pleasure,
    Arousal,
    Dominance,
}

impl PadDimension {
    pub const ALL: [PadDimension; 3] = [Self::Pleasure, Self::Arousal, Self::Dominance];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Pleasure => "pleasure",
            Self::Arousal => "arousal",
            Self::Dominance => "dominance",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PadTriple {
    pub pleasure: f64,
    pub arousal: f64,
    pub dominance: f64,
}

impl PadTriple {
    pub fn get(&self, dim: PadDimension) -> f64 {
        match dim {
            PadDimension::Pleasure => self.pleasure,
            PadDimension::Arousal => self.arousal,
            PadDimension::Dominance => self.dominance,
        }
    }

    fn from_array(v: [f64; 3]) -> Self {
        Self {
            pleasure: v[0],
            arousal: v[1],
            dominance: v[2],
        }
    }
}

/// A known PAD entry. The original text of each value is kept so that it
/// can be written back unchanged.
#[derive(Clone, Debug, PartialEq)]
pub struct KnownPadEntry {
    pub emotion: String,
    pub values: PadTriple,
    pub raw: [String; 3],
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct KnownPad {
    entries: Vec<KnownPadEntry>,
}

impl KnownPad {
    /// Parses `emotion pleasure arousal dominance` rows (tab separated, an
    /// optional header starting with `emotion`). Names must belong to
    /// `labels` and values must lie in `[-1, 1]`.
    pub fn parse(text: &str, labels: &LabelSpace) -> Result<Self> {
        let mut entries: Vec<KnownPadEntry> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if lineno == 0 && normalize_label(fields[0]) == "emotion" {
                continue;
            }
            if fields.len() != 4 {
                return Err(Error::Parse(format!(
                    "line {}: expected 4 tab-separated columns, found {}",
                    lineno + 1,
                    fields.len()
                )));
            }
            let emotion = normalize_label(fields[0]);
            labels.require(&emotion)?;
            if entries.iter().any(|e| e.emotion == emotion) {
                return Err(Error::Parse(format!("line {}: duplicate emotion {emotion:?}", lineno + 1)));
            }
            let mut values = [0.0; 3];
            let mut raw: [String; 3] = Default::default();
            for k in 0..3 {
                let text = fields[k + 1].trim();
                let v: f64 = text
                    .parse()
                    .map_err(|_| Error::Parse(format!("line {}: bad number {text:?}", lineno + 1)))?;
                if !(-1.0..=1.0).contains(&v) {
                    return Err(Error::PadRange { emotion, value: v });
                }
                values[k] = v;
                raw[k] = text.to_owned();
            }
            entries.push(KnownPadEntry {
                emotion,
                values: PadTriple::from_array(values),
                raw,
            });
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[KnownPadEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, emotion: &str) -> Option<&KnownPadEntry> {
        self.entries.iter().find(|e| e.emotion == emotion)
    }
}

pub fn load_known_pad(path: impl AsRef<Path>, labels: &LabelSpace) -> Result<KnownPad> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    KnownPad::parse(&text, labels)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PadOptions {
    pub hidden: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// `None` trains for exactly `max_epochs`.
    pub early_stopping: Option<EarlyStopping>,
    pub seed: u64,
}

/// Stop once the training loss has not improved by `min_delta` for
/// `patience` consecutive epochs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub min_delta: f64,
}

impl Default for EarlyStopping {
    fn default() -> Self {
        Self {
            patience: 50,
            min_delta: 1e-5,
        }
    }
}

impl Default for PadOptions {
    fn default() -> Self {
        Self {
            hidden: 128,
            dropout: 0.3,
            learning_rate: 1e-3,
            max_epochs: 5000,
            early_stopping: Some(EarlyStopping::default()),
            seed: 0,
        }
    }
}

/// `x → tanh(relu(x·W1 + b1)·w2 + b2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PadRegressor {
    pub hidden_weight: Array2<f64>,
    pub hidden_bias: Array1<f64>,
    pub output_weight: Array1<f64>,
    pub output_bias: f64,
}

impl PadRegressor {
    /// Glorot-uniform weights, zero biases.
    pub fn init(input_dim: usize, hidden: usize, rng: &mut impl Rng) -> Result<Self> {
        if input_dim == 0 || hidden == 0 {
            return Err(Error::Config("regressor dimensions must be positive".into()));
        }
        let glorot = |fan_in: usize, fan_out: usize| {
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            Uniform::new_inclusive(-a, a).expect("finite bound")
        };
        let u1 = glorot(input_dim, hidden);
        let u2 = glorot(hidden, 1);
        Ok(Self {
            hidden_weight: Array2::from_shape_simple_fn((input_dim, hidden), || u1.sample(rng)),
            hidden_bias: Array1::zeros(hidden),
            output_weight: Array1::from_shape_simple_fn(hidden, || u2.sample(rng)),
            output_bias: 0.0,
        })
    }

    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            hidden_weight: Array2::zeros((input_dim, hidden)),
            hidden_bias: Array1::zeros(hidden),
            output_weight: Array1::zeros(hidden),
            output_bias: 0.0,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.hidden_weight.nrows()
    }

    /// Dropout-free outputs for the rows of `x`.
    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        let h = (x.dot(&self.hidden_weight) + &self.hidden_bias).mapv(|v| v.max(0.0));
        Ok((h.dot(&self.output_weight) + self.output_bias).mapv(f64::tanh))
    }

    pub fn predict(&self, x: ArrayView1<'_, f64>) -> Result<f64> {
        Ok(self.forward(x.insert_axis(Axis(0)))?[0])
    }

    /// Mean squared error without dropout.
    pub fn mse(&self, x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>) -> Result<f64> {
        let pred = self.forward(x)?;
        Ok((&pred - &y).mapv(|d| d * d).mean().unwrap_or(0.0))
    }

    /// One full-batch pass. Returns the loss under the given dropout mask
    /// and the gradients `(dW1, db1, dw2, db2)`.
    fn loss_and_gradients(
        &self,
        x: ArrayView2<'_, f64>,
        y: ArrayView1<'_, f64>,
        mask: Option<&Array2<f64>>,
    ) -> (f64, Array2<f64>, Array1<f64>, Array1<f64>, f64) {
        let n = x.nrows() as f64;
        let pre = x.dot(&self.hidden_weight) + &self.hidden_bias;
        let relu = pre.mapv(|v| v.max(0.0));
        let h = match mask {
            Some(m) => &relu * m,
            None => relu,
        };
        let out = (h.dot(&self.output_weight) + self.output_bias).mapv(f64::tanh);
        let err = &out - &y;
        let loss = err.mapv(|d| d * d).sum() / n;
        let dz = &err * &out.mapv(|o| 1.0 - o * o) * (2.0 / n);
        let dw2 = h.t().dot(&dz);
        let db2 = dz.sum();
        let mut dh = dz.insert_axis(Axis(1)).dot(&self.output_weight.view().insert_axis(Axis(0)));
        if let Some(m) = mask {
            dh *= m;
        }
        dh.zip_mut_with(&pre, |g, &p| {
            if p <= 0.0 {
                *g = 0.0;
            }
        });
        let dw1 = x.t().dot(&dh).as_standard_layout().into_owned();
        let db1 = dh.sum_axis(Axis(0));
        (loss, dw1, db1, dw2, db2)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PadFit {
    pub regressor: PadRegressor,
    /// Training loss per epoch, as seen by the optimizer (with dropout).
    pub loss_history: Vec<f64>,
    /// Dropout-free MSE of the returned regressor on the training data.
    pub mse: f64,
}

/// Full-batch Adam on MSE. The returned regressor is the one after the
/// last epoch run.
pub fn train_regressor(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    opts: &PadOptions,
    rng: &mut impl Rng,
) -> Result<PadFit> {
    if x.nrows() == 0 {
        return Err(Error::EmptyInput);
    }
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            got: y.len(),
        });
    }
    if !(0.0..1.0).contains(&opts.dropout) {
        return Err(Error::Config(format!("dropout {} outside [0, 1)", opts.dropout)));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteFeatures);
    }
    let mut reg = PadRegressor::init(x.ncols(), opts.hidden, rng)?;
    let mut adam = Adam::new(
        [
            reg.hidden_weight.as_slice().expect("standard layout"),
            reg.hidden_bias.as_slice().expect("standard layout"),
            reg.output_weight.as_slice().expect("standard layout"),
            &[0.0][..],
        ]
        .into_iter(),
        opts.learning_rate,
    );
    let keep = 1.0 - opts.dropout;
    let mut history = Vec::new();
    let mut best = f64::INFINITY;
    let mut stale = 0;
    for epoch in 0..opts.max_epochs {
        let mask = (opts.dropout > 0.0).then(|| {
            Array2::from_shape_simple_fn((x.nrows(), opts.hidden), || {
                if rng.random::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
        });
        let (loss, dw1, db1, dw2, db2) = reg.loss_and_gradients(x, y, mask.as_ref());
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: 0 });
        }
        history.push(loss);
        let mut ob = [reg.output_bias];
        adam.update(
            vec![
                reg.hidden_weight.as_slice_mut().expect("standard layout"),
                reg.hidden_bias.as_slice_mut().expect("standard layout"),
                reg.output_weight.as_slice_mut().expect("standard layout"),
                &mut ob[..],
            ],
            [
                dw1.as_slice().expect("standard layout"),
                db1.as_slice().expect("standard layout"),
                dw2.as_slice().expect("standard layout"),
                &[db2][..],
            ]
            .into_iter(),
        );
        reg.output_bias = ob[0];
        if let Some(stop) = opts.early_stopping {
            if loss < best - stop.min_delta {
                best = loss;
                stale = 0;
            } else {
                stale += 1;
                if stale >= stop.patience {
                    log::debug!("early stop after {} epochs, loss {loss:.6}", epoch + 1);
                    break;
                }
            }
        }
    }
    let mse = reg.mse(x, y)?;
    Ok(PadFit {
        regressor: reg,
        loss_history: history,
        mse,
    })
}

/// Three regressors, indexed by [`PadDimension`].
#[derive(Clone, Debug, PartialEq)]
pub struct PadModel {
    pub fits: [PadFit; 3],
}

impl PadModel {
    pub fn regressor(&self, dim: PadDimension) -> &PadRegressor {
        &self.fits[dim.index()].regressor
    }

    pub fn mse(&self) -> PadTriple {
        PadTriple::from_array([self.fits[0].mse, self.fits[1].mse, self.fits[2].mse])
    }
}

/// Seeds each dimension's generator from `seed` on its own stream.
fn dimension_rng(seed: u64, dim: PadDimension) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(16 + dim.index() as u64);
    rng
}

/// Stacks the embeddings of the known emotions (in `known` order).
fn training_matrix(embeddings: &[EmotionEmbedding], known: &KnownPad) -> Result<(Array2<f64>, [Array1<f64>; 3])> {
    if known.is_empty() {
        return Err(Error::EmptyInput);
    }
    let missing: Vec<String> = known
        .entries()
        .iter()
        .filter(|k| !embeddings.iter().any(|e| e.emotion == k.emotion))
        .map(|k| k.emotion.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingEmotions(missing));
    }
    let dim = embeddings[0].vector.len();
    let mut x = Array2::zeros((known.len(), dim));
    for (row, k) in known.entries().iter().enumerate() {
        let e = embeddings.iter().find(|e| e.emotion == k.emotion).expect("checked above");
        if e.vector.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: e.vector.len(),
            });
        }
        x.row_mut(row).assign(&e.vector);
    }
    let targets = PadDimension::ALL.map(|d| known.entries().iter().map(|k| k.values.get(d)).collect());
    Ok((x, targets))
}

/// Trains the three dimensions independently (in parallel).
pub fn train_pad_regressors(
    embeddings: &[EmotionEmbedding],
    known: &KnownPad,
    opts: &PadOptions,
) -> Result<PadModel> {
    let (x, targets) = training_matrix(embeddings, known)?;
    let fits: Vec<Result<PadFit>> = std::thread::scope(|s| {
        let handles: Vec<_> = PadDimension::ALL
            .iter()
            .map(|&d| {
                let (x, y) = (x.view(), targets[d.index()].view());
                s.spawn(move || train_regressor(x, y, opts, &mut dimension_rng(opts.seed, d)))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("regressor thread")).collect()
    });
    let [p, a, d]: [Result<PadFit>; 3] = fits.try_into().expect("three dimensions");
    Ok(PadModel { fits: [p?, a?, d?] })
}

pub fn predict_pad(model: &PadModel, r: ArrayView1<'_, f64>) -> Result<PadTriple> {
    let mut out = [0.0; 3];
    for d in PadDimension::ALL {
        out[d.index()] = model.regressor(d).predict(r)?;
    }
    Ok(PadTriple::from_array(out))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PadSource {
    Known,
    Predicted,
}

impl PadSource {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Known => "known",
            Self::Predicted => "predicted",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PadRow {
    pub emotion: String,
    pub values: PadTriple,
    /// Text written for each value.
    pub text: [String; 3],
    pub source: PadSource,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PadTable {
    pub rows: Vec<PadRow>,
}

/// Known rows keep their input text; predicted rows are printed with this
/// many decimals.
pub const PREDICTED_DECIMALS: usize = 2;

/// Fits the regressors on the known emotions and fills in every other
/// embedding. Rows follow `embeddings` order.
pub fn augment_pad(
    embeddings: &[EmotionEmbedding],
    known: &KnownPad,
    opts: &PadOptions,
) -> Result<(PadTable, Option<PadModel>)> {
    let needs_model = embeddings.iter().any(|e| known.get(&e.emotion).is_none());
    let model = if needs_model {
        Some(train_pad_regressors(embeddings, known, opts)?)
    } else {
        None
    };
    let mut rows = Vec::with_capacity(embeddings.len());
    for e in embeddings {
        rows.push(match known.get(&e.emotion) {
            Some(k) => PadRow {
                emotion: e.emotion.clone(),
                values: k.values,
                text: k.raw.clone(),
                source: PadSource::Known,
            },
            None => {
                let values = predict_pad(model.as_ref().expect("model trained"), e.vector.view())?;
                let fmt = |v: f64| format!("{v:.PREDICTED_DECIMALS$}");
                PadRow {
                    emotion: e.emotion.clone(),
                    values,
                    text: [fmt(values.pleasure), fmt(values.arousal), fmt(values.dominance)],
                    source: PadSource::Predicted,
                }
            }
        });
    }
    Ok((PadTable { rows }, model))
}

impl PadTable {
    pub fn predicted(&self) -> impl Iterator<Item = &PadRow> {
        self.rows.iter().filter(|r| r.source == PadSource::Predicted)
    }

    /// `emotion pleasure arousal dominance source`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("emotion\tpleasure\tarousal\tdominance\tsource\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                r.emotion,
                r.text[0],
                r.text[1],
                r.text[2],
                r.source.as_str()
            );
        }
        out
    }

    /// Three value columns only, same row order as [`Self::to_tsv`].
    pub fn to_3d_tsv(&self) -> String {
        let mut out = String::from("pleasure\tarousal\tdominance\n");
        for r in &self.rows {
            let _ = writeln!(out, "{}\t{}\t{}", r.text[0], r.text[1], r.text[2]);
        }
        out
    }

    /// Pleasure (x) against arousal (y); predicted emotions labeled in red.
    pub fn to_pa_svg(&self) -> String {
        const SIZE: f64 = 700.0;
        const MARGIN: f64 = 50.0;
        let scale = (SIZE - 2.0 * MARGIN) / 2.0;
        let px = |v: f64| MARGIN + (v + 1.0) * scale;
        let py = |v: f64| MARGIN + (1.0 - v) * scale;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\" font-family=\"Helvetica, Arial, sans-serif\">"
        );
        let _ = writeln!(out, "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
        let _ = writeln!(
            out,
            "  <rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{w}\" height=\"{w}\" fill=\"none\" stroke=\"#999\"/>",
            w = SIZE - 2.0 * MARGIN
        );
        let c = SIZE / 2.0;
        let _ = writeln!(
            out,
            "  <line x1=\"{MARGIN}\" y1=\"{c}\" x2=\"{e}\" y2=\"{c}\" stroke=\"#bbb\"/>\n  <line x1=\"{c}\" y1=\"{MARGIN}\" x2=\"{c}\" y2=\"{e}\" stroke=\"#bbb\"/>",
            e = SIZE - MARGIN
        );
        let _ = writeln!(
            out,
            "  <text x=\"{c}\" y=\"{}\" text-anchor=\"middle\" font-size=\"14\">pleasure</text>\n  <text x=\"15\" y=\"{c}\" text-anchor=\"middle\" font-size=\"14\" transform=\"rotate(-90 15 {c})\">arousal</text>",
            SIZE - 15.0
        );
        for r in &self.rows {
            let (x, y) = (px(r.values.pleasure), py(r.values.arousal));
            let color = match r.source {
                PadSource::Known => "#222",
                PadSource::Predicted => "#d62728",
            };
            let _ = writeln!(
                out,
                "  <circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"4\" fill=\"{color}\"/>\n  <text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" fill=\"{color}\">{}</text>",
                x + 6.0,
                y + 4.0,
                r.emotion
            );
        }
        out.push_str("</svg>\n");
        out
    }
}
