//! Layer-wise analysis: a logistic-regression probe per probing layer, the
//! resulting dev-set confusion percentages, the drift between adjacent layers,
//! and the emotion graph those drifts induce.
//!
//! For adjacent layers `i`, `j = i + 1` with confusion tables `P_i`, `P_j`:
//!
//! ```text
//! L(g, p) = P_j[g][p] − P_i[g][p]
//! H(s, t) = L(s, t) − L(t, s)
//! ```

use std::fmt::Write as _;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use crate::dataset::LabelSpace;
use crate::error::{Error, Result};
use crate::probing::ProbingNetwork;

/// Concatenated, unnormalized head outputs of each layer: one `n × (d_i·k)`
/// matrix per layer.
pub fn extract_layer_features(net: &ProbingNetwork, x: ArrayView2<'_, f64>) -> Result<Vec<Array2<f64>>> {
    let acts = net.head_activations(x)?;
    Ok(acts
        .into_iter()
        .map(|layer| {
            let views: Vec<_> = layer.iter().map(|a| a.view()).collect();
            ndarray::concatenate(Axis(1), &views).expect("equal row counts")
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeOptions {
    /// L2 penalty on the weight matrix (bias excluded).
    pub reg: f64,
    /// Stop once every gradient entry is below this in magnitude.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self {
            reg: 1e-3,
            tolerance: 1e-5,
            max_iterations: 5000,
        }
    }
}

/// Multinomial logistic regression over one layer's features.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerProbe {
    /// 1-based probing layer this probe reads.
    pub layer_index: usize,
    /// `(d_i·k) × m`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl LayerProbe {
    pub fn logits(&self, features: ArrayView2<'_, f64>) -> Array2<f64> {
        features.dot(&self.weights) + &self.bias
    }

    pub fn predict(&self, features: ArrayView2<'_, f64>) -> Vec<usize> {
        self.logits(features)
            .rows()
            .into_iter()
            .map(|r| {
                let mut best = 0;
                for (i, &v) in r.iter().enumerate() {
                    if v > r[best] {
                        best = i;
                    }
                }
                best
            })
            .collect()
    }

    pub fn accuracy(&self, features: ArrayView2<'_, f64>, gold: &[usize]) -> f64 {
        let hits = self
            .predict(features)
            .iter()
            .zip(gold)
            .filter(|(p, g)| p == g)
            .count();
        hits as f64 / gold.len().max(1) as f64
    }
}

struct Objective {
    loss: f64,
    grad_w: Array2<f64>,
    grad_b: Array1<f64>,
}

fn objective(
    x: ArrayView2<'_, f64>,
    onehot: &Array2<f64>,
    w: &Array2<f64>,
    b: &Array1<f64>,
    reg: f64,
) -> Objective {
    let n = x.nrows() as f64;
    let mut probs = x.dot(w) + b;
    let mut ce = 0.0;
    for (mut row, y) in probs.rows_mut().into_iter().zip(onehot.rows()) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        ce += lse - row.dot(&y);
        row.mapv_inplace(|v| (v - lse).exp());
    }
    let resid = (probs - onehot) / n;
    let mut grad_w = x.t().dot(&resid);
    grad_w.scaled_add(2.0 * reg, w);
    Objective {
        loss: ce / n + reg * w.iter().map(|v| v * v).sum::<f64>(),
        grad_w,
        grad_b: resid.sum_axis(Axis(0)),
    }
}

/// Largest eigenvalue of `[X 1]ᵀ[X 1] / n` by power iteration.
fn gram_spectral_norm(x: ArrayView2<'_, f64>) -> f64 {
    let n = x.nrows() as f64;
    let d = x.ncols();
    let mut v = Array1::<f64>::from_elem(d + 1, 1.0 / ((d + 1) as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..100 {
        let xv = x.dot(&v.slice(s![..d])) + v[d];
        let mut next = Array1::zeros(d + 1);
        next.slice_mut(s![..d]).assign(&x.t().dot(&xv));
        next[d] = xv.sum();
        next /= n;
        let norm = next.dot(&next).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = norm;
        v = next / norm;
    }
    lambda
}

/// Full-batch gradient descent on mean cross-entropy plus `reg·‖W‖²`.
///
/// The step starts at the inverse of a curvature bound and is halved whenever
/// a step would raise the objective. Stops when `‖∇‖∞ < tolerance` or after
/// `max_iterations` steps.
pub fn train_layer_probe(
    layer_index: usize,
    features: ArrayView2<'_, f64>,
    labels: &[usize],
    classes: usize,
    opts: &ProbeOptions,
) -> Result<LayerProbe> {
    if features.nrows() == 0 {
        return Err(Error::EmptyInput);
    }
    if labels.len() != features.nrows() {
        return Err(Error::DimensionMismatch {
            expected: features.nrows(),
            got: labels.len(),
        });
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteFeatures);
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::LabelOutOfRange { label: bad, classes });
    }
    let mut onehot = Array2::zeros((labels.len(), classes));
    for (i, &y) in labels.iter().enumerate() {
        onehot[[i, y]] = 1.0;
    }

    let d = features.ncols();
    let mut w = Array2::<f64>::zeros((d, classes));
    let mut b = Array1::<f64>::zeros(classes);
    let curvature = 0.5 * gram_spectral_norm(features) + 2.0 * opts.reg;
    let mut step = if curvature > 0.0 { 1.0 / curvature } else { 1.0 };

    let grad_inf = |o: &Objective| {
        o.grad_w
            .iter()
            .chain(o.grad_b.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    };
    let mut current = objective(features, &onehot, &w, &b, opts.reg);
    let mut iterations = 0;
    let mut converged = grad_inf(&current) < opts.tolerance;
    while !converged && iterations < opts.max_iterations {
        iterations += 1;
        loop {
            let w_next = &w - &(&current.grad_w * step);
            let b_next = &b - &(&current.grad_b * step);
            let next = objective(features, &onehot, &w_next, &b_next, opts.reg);
            if next.loss <= current.loss || step < 1e-20 {
                w = w_next;
                b = b_next;
                current = next;
                break;
            }
            step *= 0.5;
        }
        converged = grad_inf(&current) < opts.tolerance;
    }
    log::debug!(
        "layer {layer_index} probe: {iterations} iterations, converged {converged}, loss {:.6}",
        current.loss
    );
    Ok(LayerProbe {
        layer_index,
        weights: w,
        bias: b,
        iterations,
        converged,
    })
}

/// Gold-vs-predicted proportions in percent, `percent[gold][pred]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfusionTable {
    pub layer_index: usize,
    pub percent: Array2<f64>,
    /// Gold classes with no documents; their rows are all zero.
    pub absent: Vec<usize>,
}

pub fn confusion_percent(
    probe: &LayerProbe,
    features: ArrayView2<'_, f64>,
    gold: &[usize],
) -> Result<ConfusionTable> {
    if features.nrows() == 0 {
        return Err(Error::EmptyInput);
    }
    let predictions = probe.predict(features);
    confusion_from_predictions(probe.layer_index, &predictions, gold, probe.bias.len())
}

pub fn confusion_from_predictions(
    layer_index: usize,
    predictions: &[usize],
    gold: &[usize],
    classes: usize,
) -> Result<ConfusionTable> {
    if gold.is_empty() {
        return Err(Error::EmptyInput);
    }
    if predictions.len() != gold.len() {
        return Err(Error::DimensionMismatch {
            expected: gold.len(),
            got: predictions.len(),
        });
    }
    let mut counts = Array2::<f64>::zeros((classes, classes));
    for (&g, &p) in gold.iter().zip(predictions) {
        if g >= classes || p >= classes {
            return Err(Error::LabelOutOfRange {
                label: g.max(p),
                classes,
            });
        }
        counts[[g, p]] += 1.0;
    }
    let mut absent = Vec::new();
    for (g, mut row) in counts.rows_mut().into_iter().enumerate() {
        let total = row.sum();
        if total == 0.0 {
            absent.push(g);
        } else {
            row.mapv_inplace(|c| 100.0 * c / total);
        }
    }
    if !absent.is_empty() {
        log::info!("layer {layer_index}: gold classes without documents: {absent:?}");
    }
    Ok(ConfusionTable {
        layer_index,
        percent: counts,
        absent,
    })
}

/// `L(g, p)`: how much more the upper layer predicts `g` as `p`.
pub fn drift_l(lower: &ConfusionTable, upper: &ConfusionTable, g: usize, p: usize) -> f64 {
    upper.percent[[g, p]] - lower.percent[[g, p]]
}

/// `H(s, t) = L(s, t) − L(t, s)`.
pub fn drift_h(lower: &ConfusionTable, upper: &ConfusionTable, s: usize, t: usize) -> f64 {
    drift_l(lower, upper, s, t) - drift_l(lower, upper, t, s)
}

pub fn drift_l_matrix(lower: &ConfusionTable, upper: &ConfusionTable) -> Array2<f64> {
    &upper.percent - &lower.percent
}

pub fn drift_h_matrix(lower: &ConfusionTable, upper: &ConfusionTable) -> Array2<f64> {
    let l = drift_l_matrix(lower, upper);
    &l - &l.t()
}

/// Which adjacent-layer pairs put an edge over the threshold.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum EdgeKind {
    /// Layers 1→2 only (dashed).
    Lower,
    /// Layers 2→3 only (thin solid).
    Upper,
    /// Both (thick solid).
    Both,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmotionEdge {
    pub source: String,
    pub target: String,
    pub kind: EdgeKind,
    pub h12: f64,
    pub h23: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmotionGraph {
    pub nodes: Vec<String>,
    /// Sorted by `(source, target)` names.
    pub edges: Vec<EmotionEdge>,
    pub threshold: f64,
}

/// An edge `s → t` exists iff `H12(s,t) ≥ threshold` or `H23(s,t) ≥ threshold`.
pub fn build_emotion_graph(
    labels: &LabelSpace,
    h12: &Array2<f64>,
    h23: Option<&Array2<f64>>,
    threshold: f64,
) -> Result<EmotionGraph> {
    let m = labels.len();
    for h in std::iter::once(h12).chain(h23) {
        if h.dim() != (m, m) {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: h.nrows(),
            });
        }
    }
    let mut edges = Vec::new();
    for s in 0..m {
        for t in 0..m {
            if s == t {
                continue;
            }
            let lower = h12[[s, t]] >= threshold;
            let upper = h23.is_some_and(|h| h[[s, t]] >= threshold);
            let kind = match (lower, upper) {
                (true, true) => EdgeKind::Both,
                (true, false) => EdgeKind::Lower,
                (false, true) => EdgeKind::Upper,
                (false, false) => continue,
            };
            edges.push(EmotionEdge {
                source: labels.name(s).to_owned(),
                target: labels.name(t).to_owned(),
                kind,
                h12: h12[[s, t]],
                h23: h23.map(|h| h[[s, t]]),
            });
        }
    }
    edges.sort_by(|a, b| (&a.source, &a.target).cmp(&(&b.source, &b.target)));
    let mut nodes = labels.names().to_vec();
    nodes.sort();
    Ok(EmotionGraph {
        nodes,
        edges,
        threshold,
    })
}

impl EmotionGraph {
    pub fn to_dot(&self) -> String {
        let mut out = String::new();
        out.push_str("digraph emotions {\n");
        out.push_str("  rankdir=LR;\n");
        out.push_str("  node [shape=ellipse, fontname=\"Helvetica\"];\n");
        for n in &self.nodes {
            let _ = writeln!(out, "  \"{n}\";");
        }
        for e in &self.edges {
            let style = match e.kind {
                EdgeKind::Lower => "style=dashed, penwidth=1",
                EdgeKind::Upper => "style=solid, penwidth=1",
                EdgeKind::Both => "style=solid, penwidth=3",
            };
            let label = match e.h23 {
                Some(h23) => format!("{:.2}/{:.2}", e.h12, h23),
                None => format!("{:.2}", e.h12),
            };
            let _ = writeln!(
                out,
                "  \"{}\" -> \"{}\" [{style}, label=\"{label}\"];",
                e.source, e.target
            );
        }
        out.push_str("}\n");
        out
    }
}

/// Square matrix as TSV with emotion names on both axes (rows are gold /
/// source, columns predicted / target).
pub fn matrix_tsv(labels: &LabelSpace, matrix: &Array2<f64>) -> String {
    let mut out = String::from("gold\\pred");
    for n in labels.names() {
        out.push('\t');
        out.push_str(n);
    }
    out.push('\n');
    for (name, row) in labels.names().iter().zip(matrix.rows()) {
        out.push_str(name);
        for v in row {
            let _ = write!(out, "\t{v:.4}");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probing::ProbingConfig;
    use ndarray::array;
    use proptest::prelude::*;

    fn table(layer: usize, percent: Array2<f64>) -> ConfusionTable {
        ConfusionTable {
            layer_index: layer,
            percent,
            absent: vec![],
        }
    }

    fn labels(names: &[&str]) -> LabelSpace {
        LabelSpace::new(names.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    #[test]
    fn features_match_manual_products() {
        let cfg = ProbingConfig {
            layer_dims: vec![1, 1],
            heads: 2,
            input_dim: 1,
            classes: 2,
            ..Default::default()
        };
        let net = ProbingNetwork::from_parts(
            cfg,
            vec![vec![array![[2.0]], array![[-1.0]]], vec![array![[3.0]], array![[0.5]]]],
            array![[1.0, 0.0], [0.0, 1.0]],
            array![0.0, 0.0],
        )
        .unwrap();
        let x = array![[1.5]];
        let f = extract_layer_features(&net, x.view()).unwrap();
        assert_eq!(f[0], array![[3.0, -1.5]]);
        assert_eq!(f[1], array![[9.0, -0.75]]);
        // normalized final layer equals the pooled feature
        let g = net.pooled_features(x.view()).unwrap();
        let n = (81.0f64 + 0.5625).sqrt();
        assert!((g[[0, 0]] - 9.0 / n).abs() < 1e-15 && (g[[0, 1]] + 0.75 / n).abs() < 1e-15);
    }

    #[test]
    fn separable_toy_probe_is_perfect() {
        let x = array![[2.0, 0.1], [1.5, -0.3], [2.5, 0.4], [-2.0, 0.2], [-1.0, -0.5], [-1.7, 0.0]];
        let y = [0, 0, 0, 1, 1, 1];
        let p = train_layer_probe(1, x.view(), &y, 2, &ProbeOptions::default()).unwrap();
        assert_eq!(p.accuracy(x.view(), &y), 1.0);
        assert!(p.converged, "{} iterations", p.iterations);
    }

    #[test]
    fn heavy_regularization_flattens_weights() {
        let x = array![[2.0, 0.1], [1.5, -0.3], [-2.0, 0.2], [-1.0, -0.5]];
        let y = [0, 0, 1, 1];
        let p = train_layer_probe(1, x.view(), &y, 2, &ProbeOptions { reg: 1e6, ..Default::default() }).unwrap();
        assert!(p.weights.iter().all(|w| w.abs() < 1e-5));
        let logits = p.logits(x.view());
        for row in logits.rows() {
            assert!((row[0] - row[1]).abs() < 1e-4);
        }
    }

    #[test]
    fn probe_input_errors() {
        let x = array![[f64::NAN]];
        assert!(matches!(
            train_layer_probe(1, x.view(), &[0], 2, &ProbeOptions::default()),
            Err(Error::NonFiniteFeatures)
        ));
        let x = Array2::<f64>::zeros((0, 3));
        assert!(matches!(
            train_layer_probe(1, x.view(), &[], 2, &ProbeOptions::default()),
            Err(Error::EmptyInput)
        ));
    }

    #[test]
    fn confusion_by_hand() {
        // two docs of gold a: one predicted a, one predicted b
        let t = confusion_from_predictions(1, &[0, 1, 1], &[0, 0, 1], 3).unwrap();
        assert_eq!(t.percent.row(0), array![50.0, 50.0, 0.0]);
        assert_eq!(t.percent.row(1), array![0.0, 100.0, 0.0]);
        assert_eq!(t.percent.row(2), array![0.0, 0.0, 0.0]);
        assert_eq!(t.absent, vec![2]);
        let t = confusion_from_predictions(1, &[0, 1], &[0, 1], 2).unwrap();
        assert_eq!(t.percent, array![[100.0, 0.0], [0.0, 100.0]]);
        assert!(matches!(confusion_from_predictions(1, &[], &[], 2), Err(Error::EmptyInput)));
    }

    #[test]
    fn drift_arithmetic() {
        let lower = table(1, array![[96.0, 4.0], [2.0, 98.0]]);
        let upper = table(2, array![[90.0, 10.0], [3.0, 97.0]]);
        assert_eq!(drift_l(&lower, &upper, 0, 1), 6.0);
        assert_eq!(drift_l(&lower, &lower, 0, 1), 0.0);
        assert_eq!(drift_l(&lower, &lower, 1, 1), 0.0);
        assert_eq!(drift_h(&lower, &upper, 0, 1), 5.0);
        assert_eq!(drift_h(&lower, &upper, 1, 0), -5.0);
        assert_eq!(drift_h(&lower, &upper, 1, 1), 0.0);
        assert_eq!(drift_h_matrix(&lower, &upper), array![[0.0, 5.0], [-5.0, 0.0]]);
    }

    #[test]
    fn graph_edges_and_styles() {
        let l = labels(&["angry", "furious", "sad"]);
        let zero = Array2::zeros((3, 3));
        assert!(build_emotion_graph(&l, &zero, Some(&zero), 2.0).unwrap().edges.is_empty());

        let mut h12 = Array2::zeros((3, 3));
        let mut h23 = Array2::zeros((3, 3));
        h12[[0, 1]] = 3.0;
        h23[[0, 1]] = 2.5;
        h12[[2, 0]] = 1.99;
        h23[[1, 2]] = 2.0;
        h12[[2, 1]] = 2.0;
        let g = build_emotion_graph(&l, &h12, Some(&h23), 2.0).unwrap();
        let got: Vec<_> = g.edges.iter().map(|e| (e.source.as_str(), e.target.as_str(), e.kind)).collect();
        assert_eq!(
            got,
            [
                ("angry", "furious", EdgeKind::Both),
                ("furious", "sad", EdgeKind::Upper),
                ("sad", "furious", EdgeKind::Lower),
            ]
        );
        let dot = g.to_dot();
        assert!(dot.contains("\"angry\" -> \"furious\" [style=solid, penwidth=3, label=\"3.00/2.50\"];"));
        assert!(dot.contains("\"sad\" -> \"furious\" [style=dashed"));
        assert_eq!(dot, build_emotion_graph(&l, &h12, Some(&h23), 2.0).unwrap().to_dot());
    }

    #[test]
    fn graph_is_invariant_to_label_order() {
        let names = ["angry", "furious", "sad"];
        let perm = [2usize, 0, 1];
        let l = labels(&names);
        let lp = labels(&perm.map(|i| names[i]));
        let h = array![[0.0, 3.0, -1.0], [-3.0, 0.0, 2.5], [1.0, -2.5, 0.0]];
        let hp = Array2::from_shape_fn((3, 3), |(a, b)| h[[perm[a], perm[b]]]);
        let g = build_emotion_graph(&l, &h, None, 2.0).unwrap();
        let gp = build_emotion_graph(&lp, &hp, None, 2.0).unwrap();
        assert_eq!(g.edges, gp.edges);
        assert_eq!(g.to_dot(), gp.to_dot());
    }

    fn random_table(m: usize) -> impl Strategy<Value = Vec<usize>> {
        prop::collection::vec(0..m, m * 6)
    }

    proptest! {
        #[test]
        fn metric_algebra(pred_i in random_table(5), pred_j in random_table(5)) {
            let gold: Vec<usize> = (0..30).map(|i| i % 5).collect();
            let ti = confusion_from_predictions(1, &pred_i, &gold, 5).unwrap();
            let tj = confusion_from_predictions(2, &pred_j, &gold, 5).unwrap();
            for t in [&ti, &tj] {
                for row in t.percent.rows() {
                    prop_assert!((row.sum() - 100.0).abs() <= 1e-6);
                }
            }
            for s in 0..5 {
                prop_assert_eq!(drift_h(&ti, &tj, s, s), 0.0);
                let row: f64 = (0..5).map(|p| drift_l(&ti, &tj, s, p)).sum();
                prop_assert!(row.abs() <= 1e-6);
                for t in 0..5 {
                    prop_assert!((drift_h(&ti, &tj, s, t) + drift_h(&ti, &tj, t, s)).abs() <= 1e-9);
                }
            }
        }
    }
}
