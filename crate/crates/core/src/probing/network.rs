use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ProbingConfig;
use crate::error::{Error, Result};

/// Norms below this are clamped before dividing.
pub(crate) const NORM_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct ProbingNetwork {
    config: ProbingConfig,
    /// `[layer][head]`, each `d_{i-1} × d_i`.
    pub(crate) heads: Vec<Vec<Array2<f64>>>,
    /// `(dℓ·k) × m`.
    pub(crate) output_weight: Array2<f64>,
    pub(crate) output_bias: Array1<f64>,
}

/// Intermediate values of one forward pass over a single document.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    /// `[layer][head]` head outputs `e_ij`.
    pub activations: Vec<Vec<Array1<f64>>>,
    /// Normalized concatenation of the final-layer head outputs.
    pub pooled: Array1<f64>,
    pub logits: Array1<f64>,
    pub probabilities: Array1<f64>,
}

/// Batched forward pass; rows are documents.
#[derive(Clone, Debug)]
pub struct BatchTrace {
    pub activations: Vec<Vec<Array2<f64>>>,
    /// Final-layer head outputs side by side, before normalization.
    pub concat: Array2<f64>,
    pub norms: Array1<f64>,
    pub pooled: Array2<f64>,
    pub logits: Array2<f64>,
    pub probabilities: Array2<f64>,
}

/// Same layout as the network's parameters.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub heads: Vec<Vec<Array2<f64>>>,
    pub output_weight: Array2<f64>,
    pub output_bias: Array1<f64>,
}

impl ProbingNetwork {
    /// Glorot-uniform initialization drawn in layer-major, head-major,
    /// row-major order, then the output matrix; output bias starts at zero.
    /// Weights are rounded to single precision so the network survives a
    /// PRB1 round trip unchanged.
    pub fn init(config: &ProbingConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut glorot = |rows: usize, cols: usize| {
            let limit = (6.0 / (rows + cols) as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| {
                f64::from(rng.random_range(-limit..limit) as f32)
            })
        };
        let heads = (0..config.layers())
            .map(|i| {
                (0..config.heads)
                    .map(|_| glorot(config.layer_input_dim(i), config.layer_dims[i]))
                    .collect()
            })
            .collect();
        let output_weight = glorot(config.pooled_dim(), config.classes);
        Ok(Self {
            config: config.clone(),
            heads,
            output_weight,
            output_bias: Array1::zeros(config.classes),
        })
    }

    /// All-zero parameters with the configured shapes.
    pub fn zeros(config: &ProbingConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config: config.clone(),
            heads: (0..config.layers())
                .map(|i| {
                    (0..config.heads)
                        .map(|_| Array2::zeros((config.layer_input_dim(i), config.layer_dims[i])))
                        .collect()
                })
                .collect(),
            output_weight: Array2::zeros((config.pooled_dim(), config.classes)),
            output_bias: Array1::zeros(config.classes),
        })
    }

    /// Builds a network from explicit parameters, checking every shape.
    pub fn from_parts(
        config: ProbingConfig,
        heads: Vec<Vec<Array2<f64>>>,
        output_weight: Array2<f64>,
        output_bias: Array1<f64>,
    ) -> Result<Self> {
        config.validate()?;
        let shape_err = |what: String| Err(Error::Config(format!("parameter shape mismatch: {what}")));
        if heads.len() != config.layers() {
            return shape_err(format!("{} layers, expected {}", heads.len(), config.layers()));
        }
        for (i, layer) in heads.iter().enumerate() {
            if layer.len() != config.heads {
                return shape_err(format!("layer {i} has {} heads", layer.len()));
            }
            let want = (config.layer_input_dim(i), config.layer_dims[i]);
            if let Some(w) = layer.iter().find(|w| w.dim() != want) {
                return shape_err(format!("layer {i} head is {:?}, expected {want:?}", w.dim()));
            }
        }
        if output_weight.dim() != (config.pooled_dim(), config.classes) {
            return shape_err(format!("output weight {:?}", output_weight.dim()));
        }
        if output_bias.len() != config.classes {
            return shape_err(format!("output bias {}", output_bias.len()));
        }
        let net = Self {
            config,
            heads,
            output_weight,
            output_bias,
        };
        if net.param_groups().any(|g| g.iter().any(|v| !v.is_finite())) {
            return Err(Error::Config("non-finite parameter".into()));
        }
        Ok(net)
    }

    pub fn config(&self) -> &ProbingConfig {
        &self.config
    }

    /// Weight of head `head` in layer `layer` (both 0-based).
    pub fn head_weight(&self, layer: usize, head: usize) -> &Array2<f64> {
        &self.heads[layer][head]
    }

    pub fn head_weight_mut(&mut self, layer: usize, head: usize) -> &mut Array2<f64> {
        &mut self.heads[layer][head]
    }

    pub fn output_weight(&self) -> &Array2<f64> {
        &self.output_weight
    }

    pub fn output_weight_mut(&mut self) -> &mut Array2<f64> {
        &mut self.output_weight
    }

    pub fn output_bias(&self) -> &Array1<f64> {
        &self.output_bias
    }

    pub fn output_bias_mut(&mut self) -> &mut Array1<f64> {
        &mut self.output_bias
    }

    pub fn parameter_count(&self) -> usize {
        self.param_groups().map(|g| g.len()).sum()
    }

    /// Parameter blocks in serialization order.
    pub(crate) fn param_groups(&self) -> impl Iterator<Item = &[f64]> {
        self.heads
            .iter()
            .flatten()
            .map(|w| w.as_slice().expect("standard layout"))
            .chain(std::iter::once(self.output_weight.as_slice().expect("standard layout")))
            .chain(std::iter::once(self.output_bias.as_slice().expect("standard layout")))
    }

    pub(crate) fn param_groups_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = self
            .heads
            .iter_mut()
            .flatten()
            .map(|w| w.as_slice_mut().expect("standard layout"))
            .collect();
        out.push(self.output_weight.as_slice_mut().expect("standard layout"));
        out.push(self.output_bias.as_slice_mut().expect("standard layout"));
        out
    }

    /// Rounds every parameter to the nearest `f32`.
    pub(crate) fn round_to_f32(&mut self) {
        for g in self.param_groups_mut() {
            g.iter_mut().for_each(|v| *v = f64::from(*v as f32));
        }
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.config.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.input_dim,
                got: cols,
            });
        }
        Ok(())
    }

    /// Per-layer head outputs only; `[layer][head]`, each `B × d_i`.
    pub fn head_activations(&self, x: ArrayView2<'_, f64>) -> Result<Vec<Vec<Array2<f64>>>> {
        self.check_input(x.ncols())?;
        let mut acts: Vec<Vec<Array2<f64>>> = Vec::with_capacity(self.config.layers());
        for (i, layer) in self.heads.iter().enumerate() {
            let next = layer
                .iter()
                .enumerate()
                .map(|(j, w)| match i {
                    0 => x.dot(w),
                    _ => acts[i - 1][j].dot(w),
                })
                .collect();
            acts.push(next);
        }
        Ok(acts)
    }

    pub fn forward_batch(&self, x: ArrayView2<'_, f64>) -> Result<BatchTrace> {
        let activations = self.head_activations(x)?;
        let last = activations.last().expect("at least one layer");
        let d_last = *self.config.layer_dims.last().unwrap();
        let mut concat = Array2::zeros((x.nrows(), self.config.pooled_dim()));
        for (j, a) in last.iter().enumerate() {
            concat.slice_mut(s![.., j * d_last..(j + 1) * d_last]).assign(a);
        }
        let norms = concat.map_axis(Axis(1), |r| r.dot(&r).sqrt());
        let mut pooled = concat.clone();
        for (mut row, &n) in pooled.rows_mut().into_iter().zip(&norms) {
            row /= n.max(NORM_FLOOR);
        }
        let mut logits = pooled.dot(&self.output_weight);
        logits += &self.output_bias;
        let probabilities = softmax_rows(&logits);
        Ok(BatchTrace {
            activations,
            concat,
            norms,
            pooled,
            logits,
            probabilities,
        })
    }

    pub fn forward(&self, e0: ArrayView1<'_, f64>) -> Result<ForwardTrace> {
        let x = e0.insert_axis(Axis(0));
        let t = self.forward_batch(x)?;
        Ok(ForwardTrace {
            activations: t
                .activations
                .into_iter()
                .map(|layer| layer.into_iter().map(|a| a.row(0).to_owned()).collect())
                .collect(),
            pooled: t.pooled.row(0).to_owned(),
            logits: t.logits.row(0).to_owned(),
            probabilities: t.probabilities.row(0).to_owned(),
        })
    }

    /// Pooled features `g` for every row of `x`.
    pub fn pooled_features(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(self.forward_batch(x)?.pooled)
    }

    /// Mean cross-entropy of `labels` under the network.
    pub fn loss(&self, x: ArrayView2<'_, f64>, labels: &[usize]) -> Result<f64> {
        let t = self.forward_batch(x)?;
        self.check_labels(x.nrows(), labels)?;
        Ok(cross_entropy(&t.logits, labels))
    }

    pub(crate) fn check_labels(&self, rows: usize, labels: &[usize]) -> Result<()> {
        if labels.len() != rows {
            return Err(Error::DimensionMismatch {
                expected: rows,
                got: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= self.config.classes) {
            return Err(Error::LabelOutOfRange {
                label: bad,
                classes: self.config.classes,
            });
        }
        Ok(())
    }

    /// Mean cross-entropy and its gradient with respect to every parameter.
    pub fn loss_and_gradients(
        &self,
        x: ArrayView2<'_, f64>,
        labels: &[usize],
    ) -> Result<(f64, Gradients, BatchTrace)> {
        let trace = self.forward_batch(x)?;
        self.check_labels(x.nrows(), labels)?;
        let loss = cross_entropy(&trace.logits, labels);
        let grads = self.backward(x, labels, &trace);
        Ok((loss, grads, trace))
    }

    fn backward(&self, x: ArrayView2<'_, f64>, labels: &[usize], t: &BatchTrace) -> Gradients {
        let batch = x.nrows() as f64;
        let mut d_logits = t.probabilities.clone();
        for (mut row, &y) in d_logits.rows_mut().into_iter().zip(labels) {
            row[y] -= 1.0;
        }
        d_logits /= batch;

        let output_weight = t.pooled.t().dot(&d_logits);
        let output_bias = d_logits.sum_axis(Axis(0));
        let d_pooled = d_logits.dot(&self.output_weight.t());

        // back through g = z / max(|z|, floor)
        let mut d_concat = d_pooled;
        for ((mut dz, g), &n) in d_concat
            .rows_mut()
            .into_iter()
            .zip(t.pooled.rows())
            .zip(&t.norms)
        {
            if n > NORM_FLOOR {
                let proj = g.dot(&dz);
                dz.scaled_add(-proj, &g);
                dz /= n;
            } else {
                dz /= NORM_FLOOR;
            }
        }

        let layers = self.config.layers();
        let d_last = self.config.layer_dims[layers - 1];
        let mut heads: Vec<Vec<Array2<f64>>> = vec![Vec::with_capacity(self.config.heads); layers];
        for j in 0..self.config.heads {
            let mut upstream = d_concat.slice(s![.., j * d_last..(j + 1) * d_last]).to_owned();
            let mut per_layer = Vec::with_capacity(layers);
            for i in (0..layers).rev() {
                let input = if i == 0 {
                    x.view()
                } else {
                    t.activations[i - 1][j].view()
                };
                per_layer.push(input.t().dot(&upstream));
                if i > 0 {
                    upstream = upstream.dot(&self.heads[i][j].t());
                }
            }
            per_layer.reverse();
            for (i, g) in per_layer.into_iter().enumerate() {
                heads[i].push(g);
            }
        }
        Gradients {
            heads,
            output_weight,
            output_bias,
        }
    }
}

impl Gradients {
    pub(crate) fn groups(&self) -> impl Iterator<Item = &[f64]> {
        self.heads
            .iter()
            .flatten()
            .map(|w| w.as_slice().expect("standard layout"))
            .chain(std::iter::once(self.output_weight.as_slice().expect("standard layout")))
            .chain(std::iter::once(self.output_bias.as_slice().expect("standard layout")))
    }
}

pub(crate) fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

pub(crate) fn cross_entropy(logits: &Array2<f64>, labels: &[usize]) -> f64 {
    let total: f64 = logits
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(row, &y)| {
            let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            lse - row[y]
        })
        .sum();
    total / labels.len().max(1) as f64
}

/// Index of the largest value; the lowest index wins ties.
pub(crate) fn argmax(row: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
