use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::network::{argmax, ProbingNetwork};
use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const EVAL_CHUNK: usize = 512;

#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    /// Mean of the per-batch losses.
    pub train_loss: f64,
    pub dev_accuracy: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub network: ProbingNetwork,
    pub history: Vec<EpochMetrics>,
    /// Epoch of the returned snapshot; 0 means the initial weights.
    pub selected_epoch: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    /// `[gold][predicted]` counts.
    pub confusion: Array2<u64>,
    pub predictions: Vec<usize>,
}

pub(crate) struct Adam {
    step: i32,
    lr: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new<'a>(groups: impl Iterator<Item = &'a [f64]>, lr: f64) -> Self {
        let (m, v) = groups.map(|g| (vec![0.0; g.len()], vec![0.0; g.len()])).unzip();
        Self { step: 0, lr, m, v }
    }

    pub fn update<'a>(&mut self, params: Vec<&mut [f64]>, grads: impl Iterator<Item = &'a [f64]>) {
        self.step += 1;
        let c1 = 1.0 - BETA1.powi(self.step);
        let c2 = 1.0 - BETA2.powi(self.step);
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= self.lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        }
    }
}

/// Minibatch Adam on mean softmax cross-entropy, using the learning rate,
/// batch size, epoch count and seed of the network's config.
///
/// Rows are reshuffled every epoch. With a dev set the snapshot with the best
/// dev accuracy is returned (earliest on ties, the initial weights count as
/// epoch 0); otherwise the final epoch. Returned weights are rounded to `f32`.
pub fn train(
    net: ProbingNetwork,
    embeddings: &EmbeddingMatrix,
    labels: &[usize],
    dev: Option<(&EmbeddingMatrix, &[usize])>,
) -> Result<TrainOutcome> {
    let cfg = net.config().clone();
    cfg.validate()?;
    if embeddings.is_empty() {
        return Err(Error::EmptyInput);
    }
    let x = embeddings.to_f64();
    net.check_labels(x.nrows(), labels)?;
    if x.ncols() != cfg.input_dim {
        return Err(Error::DimensionMismatch {
            expected: cfg.input_dim,
            got: x.ncols(),
        });
    }
    let dev = match dev {
        Some((m, l)) => {
            let dx = m.to_f64();
            net.check_labels(dx.nrows(), l)?;
            Some((dx, l))
        }
        None => None,
    };

    let mut net = net;
    let mut adam = Adam::new(net.param_groups(), cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    let mut snapshot = net.clone();
    snapshot.round_to_f32();
    let mut best = match &dev {
        Some((dx, dl)) => Some((evaluate_f64(&snapshot, dx.view(), dl)?.accuracy, 0usize)),
        None => None,
    };
    let mut selected = snapshot;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let bx = x.select(Axis(0), chunk);
            let by: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let (loss, grads, _) = net.loss_and_gradients(bx.view(), &by)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            loss_sum += loss;
            batches += 1;
            adam.update(net.param_groups_mut(), grads.groups());
        }
        let mut snapshot = net.clone();
        snapshot.round_to_f32();
        let dev_accuracy = match &dev {
            Some((dx, dl)) => Some(evaluate_f64(&snapshot, dx.view(), dl)?.accuracy),
            None => None,
        };
        history.push(EpochMetrics {
            epoch,
            train_loss: loss_sum / batches as f64,
            dev_accuracy,
        });
        log::debug!(
            "epoch {epoch}: loss {:.5} dev {:?}",
            loss_sum / batches as f64,
            dev_accuracy
        );
        match (&mut best, dev_accuracy) {
            (Some((best_acc, best_epoch)), Some(acc)) => {
                if acc > *best_acc {
                    *best_acc = acc;
                    *best_epoch = epoch;
                    selected = snapshot;
                }
            }
            _ => selected = snapshot,
        }
    }
    let selected_epoch = match best {
        Some((_, e)) => e,
        None => cfg.epochs,
    };
    Ok(TrainOutcome {
        network: selected,
        history,
        selected_epoch,
    })
}

pub fn evaluate(net: &ProbingNetwork, embeddings: &EmbeddingMatrix, labels: &[usize]) -> Result<Evaluation> {
    evaluate_f64(net, embeddings.to_f64().view(), labels)
}

pub(crate) fn evaluate_f64(net: &ProbingNetwork, x: ArrayView2<'_, f64>, labels: &[usize]) -> Result<Evaluation> {
    if x.nrows() == 0 {
        return Err(Error::EmptyInput);
    }
    net.check_labels(x.nrows(), labels)?;
    let mut predictions = Vec::with_capacity(x.nrows());
    for start in (0..x.nrows()).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(x.nrows());
        let t = net.forward_batch(x.slice(ndarray::s![start..end, ..]))?;
        predictions.extend(t.logits.rows().into_iter().map(argmax));
    }
    Ok(score_predictions(predictions, labels, net.config().classes))
}

/// Accuracy and `[gold][predicted]` confusion counts.
pub(crate) fn score_predictions(predictions: Vec<usize>, gold: &[usize], classes: usize) -> Evaluation {
    let mut confusion = Array2::zeros((classes, classes));
    let mut correct = 0usize;
    for (&p, &g) in predictions.iter().zip(gold) {
        confusion[[g, p]] += 1;
        correct += usize::from(p == g);
    }
    Evaluation {
        accuracy: correct as f64 / gold.len() as f64,
        confusion,
        predictions,
    }
}

/// Mean and population standard deviation of accuracies, as percentages
/// with one decimal: `58.2 (±0.5)`.
pub fn format_mean_std(accuracies: &[f64]) -> (f64, f64, String) {
    let n = accuracies.len().max(1) as f64;
    let mean = accuracies.iter().sum::<f64>() / n;
    let var = accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    (mean, std, format!("{:.1} (±{:.1})", 100.0 * mean, 100.0 * std))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probing::ProbingConfig;
    use ndarray::array;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn clusters(classes: usize, per_class: usize, dim: usize, sep: f64, seed: u64) -> (EmbeddingMatrix, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers: Vec<Vec<f64>> = (0..classes)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0) * sep).collect())
            .collect();
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut data = Array2::<f32>::zeros((classes * per_class, dim));
        let mut labels = Vec::new();
        for (r, mut row) in data.rows_mut().into_iter().enumerate() {
            let c = r % classes;
            labels.push(c);
            for (v, &m) in row.iter_mut().zip(&centers[c]) {
                *v = (m + noise.sample(&mut rng)) as f32;
            }
        }
        let ids = (0..labels.len()).map(|i| format!("d{i}")).collect();
        (EmbeddingMatrix::new(ids, data).unwrap(), labels)
    }

    #[test]
    fn separable_clusters_are_learned() {
        let (x, y) = clusters(4, 16, 16, 4.0, 11);
        let cfg = ProbingConfig {
            layer_dims: vec![32],
            heads: 2,
            input_dim: 16,
            classes: 4,
            learning_rate: 1e-3,
            batch_size: 16,
            epochs: 200,
            seed: 3,
            ..Default::default()
        };
        let out = train(ProbingNetwork::init(&cfg).unwrap(), &x, &y, None).unwrap();
        assert_eq!(out.history.len(), 200);
        assert_eq!(evaluate(&out.network, &x, &y).unwrap().accuracy, 1.0);
    }

    #[test]
    fn zero_epochs_returns_init() {
        let (x, y) = clusters(2, 4, 8, 3.0, 1);
        let cfg = ProbingConfig {
            layer_dims: vec![4],
            heads: 1,
            input_dim: 8,
            classes: 2,
            epochs: 0,
            ..Default::default()
        };
        let init = ProbingNetwork::init(&cfg).unwrap();
        let out = train(init.clone(), &x, &y, Some((&x, &y))).unwrap();
        assert_eq!(out.network, init);
        assert_eq!(out.selected_epoch, 0);
        let out = train(init.clone(), &x, &y, None).unwrap();
        assert_eq!(out.network, init);
    }

    #[test]
    fn training_is_deterministic() {
        let (x, y) = clusters(3, 10, 8, 2.0, 5);
        let cfg = ProbingConfig {
            layer_dims: vec![6, 4],
            heads: 3,
            input_dim: 8,
            classes: 3,
            learning_rate: 1e-3,
            batch_size: 7,
            epochs: 5,
            ..Default::default()
        };
        let a = train(ProbingNetwork::init(&cfg).unwrap(), &x, &y, Some((&x, &y))).unwrap();
        let b = train(ProbingNetwork::init(&cfg).unwrap(), &x, &y, Some((&x, &y))).unwrap();
        assert_eq!(a.network, b.network);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn bad_labels_are_rejected() {
        let (x, _) = clusters(2, 2, 8, 1.0, 0);
        let cfg = ProbingConfig {
            layer_dims: vec![4],
            heads: 1,
            input_dim: 8,
            classes: 2,
            ..Default::default()
        };
        let net = ProbingNetwork::init(&cfg).unwrap();
        assert!(matches!(train(net.clone(), &x, &[0, 1, 2, 0], None), Err(Error::LabelOutOfRange { label: 2, .. })));
        assert!(matches!(evaluate(&net, &EmbeddingMatrix::empty(8), &[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn diverging_training_reports_non_finite_loss() {
        let (x, y) = clusters(2, 4, 8, 1.0, 0);
        let cfg = ProbingConfig {
            layer_dims: vec![4],
            heads: 1,
            input_dim: 8,
            classes: 2,
            epochs: 1,
            ..Default::default()
        };
        let mut net = ProbingNetwork::init(&cfg).unwrap();
        net.output_weight_mut().fill(f64::INFINITY);
        assert!(matches!(train(net, &x, &y, None), Err(Error::NonFiniteLoss { epoch: 1, batch: 0 })));
    }

    #[test]
    fn confusion_by_hand() {
        // gold 0,1,1 predicted 0,0,1
        let e = score_predictions(vec![0, 0, 1], &[0, 1, 1], 2);
        assert_eq!(e.confusion, array![[1, 0], [1, 1]]);
        assert!((e.accuracy - 2.0 / 3.0).abs() < 1e-15);

        let gold: Vec<usize> = (0..64).map(|i| i % 32).collect();
        let e = score_predictions(gold.clone(), &gold, 32);
        assert_eq!(e.accuracy, 1.0);
        assert_eq!(e.confusion.diag().sum(), 64);
        let e = score_predictions(vec![5; 64], &gold, 32);
        assert_eq!(e.accuracy, 1.0 / 32.0);
    }

    #[test]
    fn mean_std_format() {
        let (_, std, s) = format_mean_std(&[0.582]);
        assert_eq!(std, 0.0);
        assert_eq!(s, "58.2 (±0.0)");
        let (mean, std, s) = format_mean_std(&[0.5, 0.6]);
        assert!((mean - 0.55).abs() < 1e-12 && (std - 0.05).abs() < 1e-12);
        assert_eq!(s, "55.0 (±5.0)");
    }
}
