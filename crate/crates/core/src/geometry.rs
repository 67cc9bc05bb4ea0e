//! Emotion embeddings and the emotion wheel.
//!
//! An emotion's embedding is the mean pooled feature `g` over the dev
//! documents labeled with it. Each complex emotion is then matched to the
//! blend `w·r_i + (1 − w)·r_j` of two basic emotions that maximizes cosine
//! similarity, searching unordered basic pairs and a grid of weights.

use std::collections::HashSet;
use std::fmt::Write as _;

use ndarray::{Array1, ArrayView1, ArrayView2};

use crate::dataset::LabelSpace;
use crate::error::{Error, Result};
use crate::probing::ProbingNetwork;

/// Norms below this are treated as this value in cosine similarity.
pub const COSINE_NORM_FLOOR: f64 = 1e-12;

/// A blend must beat the current best cosine by more than this to replace it,
/// so candidates tied up to rounding resolve to the earliest one.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct EmotionEmbedding {
    pub emotion: String,
    pub vector: Array1<f64>,
    /// Number of documents averaged.
    pub support: usize,
}

/// Arithmetic mean of the rows of `pooled` (one pooled feature per document).
pub fn mean_embedding(emotion: &str, pooled: ArrayView2<'_, f64>) -> Result<EmotionEmbedding> {
    if pooled.nrows() == 0 {
        return Err(Error::MissingEmotions(vec![emotion.to_owned()]));
    }
    let mut sum = Array1::<f64>::zeros(pooled.ncols());
    for row in pooled.rows() {
        sum += &row;
    }
    Ok(EmotionEmbedding {
        emotion: emotion.to_owned(),
        vector: sum / pooled.nrows() as f64,
        support: pooled.nrows(),
    })
}

/// One embedding per label (label order) from the network's pooled features
/// of `x`, grouped by `gold`. Fails listing every label with no documents.
pub fn emotion_embeddings(
    net: &ProbingNetwork,
    x: ArrayView2<'_, f64>,
    gold: &[usize],
    labels: &LabelSpace,
) -> Result<Vec<EmotionEmbedding>> {
    if gold.len() != x.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            got: gold.len(),
        });
    }
    let pooled = net.pooled_features(x)?;
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); labels.len()];
    for (i, &g) in gold.iter().enumerate() {
        rows.get_mut(g)
            .ok_or(Error::LabelOutOfRange {
                label: g,
                classes: labels.len(),
            })?
            .push(i);
    }
    let missing: Vec<String> = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.is_empty())
        .map(|(i, _)| labels.name(i).to_owned())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingEmotions(missing));
    }
    rows.iter()
        .enumerate()
        .map(|(i, r)| mean_embedding(labels.name(i), pooled.select(ndarray::Axis(0), r).view()))
        .collect()
}

/// `w·r_i + (1 − w)·r_j`.
pub fn blend(r_i: ArrayView1<'_, f64>, r_j: ArrayView1<'_, f64>, w: f64) -> Result<Array1<f64>> {
    if r_i.len() != r_j.len() {
        return Err(Error::DimensionMismatch {
            expected: r_i.len(),
            got: r_j.len(),
        });
    }
    Ok(&r_i * w + &r_j * (1.0 - w))
}

pub fn cosine(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    let na = a.dot(&a).sqrt().max(COSINE_NORM_FLOOR);
    let nb = b.dot(&b).sqrt().max(COSINE_NORM_FLOOR);
    a.dot(&b) / (na * nb)
}

/// Weights `t / divisions` lying in `[0.1, 0.9]`, ascending.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WeightGrid {
    pub divisions: u32,
}

impl Default for WeightGrid {
    fn default() -> Self {
        Self { divisions: 10 }
    }
}

impl WeightGrid {
    pub fn new(divisions: u32) -> Result<Self> {
        if divisions < 10 {
            return Err(Error::Config(format!(
                "weight grid needs at least 10 divisions, got {divisions}"
            )));
        }
        Ok(Self { divisions })
    }

    pub fn weights(&self) -> Vec<f64> {
        let d = self.divisions;
        (1..d)
            .filter(|t| 10 * t >= d && 10 * t <= 9 * d)
            .map(|t| f64::from(t) / f64::from(d))
            .collect()
    }
}

/// The basic emotions, in search order.
#[derive(Clone, Debug, PartialEq)]
pub struct BasicSet {
    members: Vec<EmotionEmbedding>,
}

pub const BASIC_COUNT: usize = 8;

impl BasicSet {
    pub fn new(members: Vec<EmotionEmbedding>) -> Result<Self> {
        if members.len() != BASIC_COUNT {
            return Err(Error::Config(format!(
                "need exactly {BASIC_COUNT} basic emotions, got {}",
                members.len()
            )));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = members.iter().find(|m| !seen.insert(m.emotion.as_str())) {
            return Err(Error::Config(format!("duplicate basic emotion {:?}", dup.emotion)));
        }
        Ok(Self { members })
    }

    /// Picks `names` out of `all`, ordered by their label index.
    pub fn select(all: &[EmotionEmbedding], names: &[String], labels: &LabelSpace) -> Result<Self> {
        let mut idx = names
            .iter()
            .map(|n| labels.require(n))
            .collect::<Result<Vec<_>>>()?;
        idx.sort_unstable();
        let members = idx
            .into_iter()
            .map(|i| {
                all.iter()
                    .find(|e| e.emotion == labels.name(i))
                    .cloned()
                    .ok_or_else(|| Error::MissingEmotions(vec![labels.name(i).to_owned()]))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(members)
    }

    pub fn members(&self) -> &[EmotionEmbedding] {
        &self.members
    }

    pub fn contains(&self, emotion: &str) -> bool {
        self.members.iter().any(|m| m.emotion == emotion)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WheelEntry {
    pub complex: String,
    pub basic_i: String,
    pub basic_j: String,
    /// Weight on `basic_i`.
    pub weight: f64,
    pub cosine: f64,
}

impl WheelEntry {
    /// Same blend with the basics swapped so that `weight ≥ 0.5`.
    pub fn canonical(&self) -> Self {
        if self.weight >= 0.5 {
            return self.clone();
        }
        Self {
            complex: self.complex.clone(),
            basic_i: self.basic_j.clone(),
            basic_j: self.basic_i.clone(),
            weight: 1.0 - self.weight,
            cosine: self.cosine,
        }
    }
}

/// Exhaustive search over pairs `i < j` (set order) and ascending grid
/// weights; the first strict maximum of cosine similarity wins.
///
/// Grid points whose blend has (near-)zero norm are skipped with a warning.
pub fn find_basic_pair(c: &EmotionEmbedding, basics: &BasicSet, grid: &WeightGrid) -> Result<WheelEntry> {
    if basics.contains(&c.emotion) {
        return Err(Error::Invalid(format!("{:?} is a basic emotion", c.emotion)));
    }
    let dim = c.vector.len();
    for v in std::iter::once(c).chain(basics.members()) {
        if v.vector.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: v.vector.len(),
            });
        }
        if v.vector.dot(&v.vector).sqrt() < COSINE_NORM_FLOOR {
            return Err(Error::Invalid(format!("zero embedding for {:?}", v.emotion)));
        }
    }
    let weights = grid.weights();
    let members = basics.members();
    let mut best: Option<(usize, usize, f64, f64)> = None;
    for i in 0..members.len() {
        for j in i + 1..members.len() {
            for &w in &weights {
                let mixed = blend(members[i].vector.view(), members[j].vector.view(), w)?;
                if mixed.dot(&mixed).sqrt() < COSINE_NORM_FLOOR {
                    log::warn!(
                        "{}: zero-norm blend of {} and {} at w={w}, skipped",
                        c.emotion,
                        members[i].emotion,
                        members[j].emotion
                    );
                    continue;
                }
                let cos = cosine(mixed.view(), c.vector.view());
                if best.is_none_or(|(_, _, _, b)| cos > b + TIE_TOLERANCE) {
                    best = Some((i, j, w, cos));
                }
            }
        }
    }
    let (i, j, weight, cosine) =
        best.ok_or_else(|| Error::Invalid(format!("no valid blend for {:?}", c.emotion)))?;
    Ok(WheelEntry {
        complex: c.emotion.clone(),
        basic_i: members[i].emotion.clone(),
        basic_j: members[j].emotion.clone(),
        weight,
        cosine,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Wheel {
    /// Complex emotions with `cosine ≥ min_cos`, by name.
    pub entries: Vec<WheelEntry>,
    /// Entries dropped by the threshold, by name.
    pub omitted: Vec<WheelEntry>,
    /// Basic emotion names in clockwise drawing order.
    pub layout: Vec<String>,
}

/// Runs [`find_basic_pair`] for every non-basic embedding and filters by
/// `min_cos`. `layout` fixes the clockwise order of basics in the SVG and
/// must name each basic exactly once.
pub fn build_wheel(
    embeddings: &[EmotionEmbedding],
    basics: &BasicSet,
    grid: &WeightGrid,
    min_cos: f64,
    layout: &[String],
) -> Result<Wheel> {
    let layout_set: HashSet<&str> = layout.iter().map(String::as_str).collect();
    if layout.len() != BASIC_COUNT
        || layout_set.len() != BASIC_COUNT
        || !basics.members().iter().all(|m| layout_set.contains(m.emotion.as_str()))
    {
        return Err(Error::Config(format!(
            "wheel layout {layout:?} must list each basic emotion once"
        )));
    }
    let mut entries = Vec::new();
    let mut omitted = Vec::new();
    for c in embeddings.iter().filter(|e| !basics.contains(&e.emotion)) {
        let entry = find_basic_pair(c, basics, grid)?;
        if entry.cosine >= min_cos {
            entries.push(entry);
        } else {
            log::info!(
                "omitting {} from the wheel: cosine {:.4} < {min_cos}",
                entry.complex,
                entry.cosine
            );
            omitted.push(entry);
        }
    }
    entries.sort_by(|a, b| a.complex.cmp(&b.complex));
    omitted.sort_by(|a, b| a.complex.cmp(&b.complex));
    Ok(Wheel {
        entries,
        omitted,
        layout: layout.to_vec(),
    })
}

impl Wheel {
    /// Columns `c, b_i, b_j, w, cos`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("c\tb_i\tb_j\tw\tcos\n");
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{:.4}",
                e.complex, e.basic_i, e.basic_j, e.weight, e.cosine
            );
        }
        out
    }

    /// Basics equally spaced on a circle (first at the top, clockwise); each
    /// complex emotion sits on the chord between its pair at
    /// `w·p_i + (1 − w)·p_j`, with dot radius proportional to its cosine.
    pub fn to_svg(&self) -> String {
        const SIZE: f64 = 800.0;
        const CENTER: f64 = SIZE / 2.0;
        const RADIUS: f64 = 300.0;
        let position = |name: &str| -> (f64, f64) {
            let k = self.layout.iter().position(|n| n == name).expect("basic in layout");
            let angle = -std::f64::consts::FRAC_PI_2
                + 2.0 * std::f64::consts::PI * k as f64 / self.layout.len() as f64;
            (CENTER + RADIUS * angle.cos(), CENTER + RADIUS * angle.sin())
        };
        let mut out = String::new();
        let _ = writeln!(
            out,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\" font-family=\"Helvetica, Arial, sans-serif\">"
        );
        let _ = writeln!(out, "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
        let _ = writeln!(
            out,
            "  <circle cx=\"{CENTER}\" cy=\"{CENTER}\" r=\"{RADIUS}\" fill=\"none\" stroke=\"#999\" stroke-width=\"2\"/>"
        );
        for e in &self.entries {
            let (x1, y1) = position(&e.basic_i);
            let (x2, y2) = position(&e.basic_j);
            let _ = writeln!(
                out,
                "  <line x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\" stroke=\"#ccc\" stroke-width=\"1\"/>"
            );
        }
        for name in &self.layout {
            let (x, y) = position(name);
            let (lx, ly) = (CENTER + (x - CENTER) * 1.12, CENTER + (y - CENTER) * 1.12);
            let _ = writeln!(
                out,
                "  <circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"10\" fill=\"#333\"/>\n  <text x=\"{lx:.2}\" y=\"{ly:.2}\" text-anchor=\"middle\" dominant-baseline=\"middle\" font-size=\"18\" font-weight=\"bold\">{name}</text>"
            );
        }
        for e in &self.entries {
            let (xi, yi) = position(&e.basic_i);
            let (xj, yj) = position(&e.basic_j);
            let x = e.weight * xi + (1.0 - e.weight) * xj;
            let y = e.weight * yi + (1.0 - e.weight) * yj;
            let r = 2.0 + 12.0 * e.cosine.max(0.0);
            let _ = writeln!(
                out,
                "  <circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"{r:.2}\" fill=\"#c0392b\" fill-opacity=\"0.7\"><title>{} = {} {} + {} {} (cos {:.2})</title></circle>\n  <text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\">{}</text>",
                e.complex,
                e.weight,
                e.basic_i,
                1.0 - e.weight,
                e.basic_j,
                e.cosine,
                x + r + 2.0,
                y + 4.0,
                e.complex
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn emb(name: &str, v: Array1<f64>) -> EmotionEmbedding {
        EmotionEmbedding {
            emotion: name.into(),
            vector: v,
            support: 1,
        }
    }

    fn orthonormal_basics() -> BasicSet {
        BasicSet::new(
            (0..8)
                .map(|i| {
                    let mut v = Array1::zeros(8);
                    v[i] = 1.0;
                    emb(&format!("b{i}"), v)
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn mean_of_one_and_of_opposites() {
        let g = array![[0.6, 0.8]];
        assert_eq!(mean_embedding("x", g.view()).unwrap().vector, array![0.6, 0.8]);
        let g = array![[0.6, 0.8], [-0.6, -0.8]];
        assert_eq!(mean_embedding("x", g.view()).unwrap().vector, array![0.0, 0.0]);
        let empty = Array2::<f64>::zeros((0, 2));
        assert!(matches!(mean_embedding("x", empty.view()), Err(Error::MissingEmotions(v)) if v == ["x"]));
    }

    #[test]
    fn blend_endpoints_and_symmetry() {
        let a = array![1.0, 0.0];
        let b = array![0.0, 1.0];
        assert_eq!(blend(a.view(), b.view(), 1.0).unwrap(), a);
        assert_eq!(blend(a.view(), b.view(), 0.0).unwrap(), b);
        assert_eq!(blend(a.view(), b.view(), 0.5).unwrap(), array![0.5, 0.5]);
        let x = array![0.3, -1.2];
        let y = array![2.0, 0.7];
        for w in WeightGrid::default().weights() {
            let l = blend(x.view(), y.view(), w).unwrap();
            let r = blend(y.view(), x.view(), 1.0 - w).unwrap();
            assert!((&l - &r).iter().all(|d| d.abs() < 1e-15));
        }
        assert!(blend(a.view(), array![1.0].view(), 0.5).is_err());
    }

    #[test]
    fn grid_values() {
        assert_eq!(WeightGrid::default().weights(), [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]);
        let fine = WeightGrid::new(20).unwrap().weights();
        assert_eq!(fine.len(), 17);
        assert_eq!((fine[0], fine[16]), (0.1, 0.9));
        assert!(WeightGrid::new(5).is_err());
    }

    #[test]
    fn exact_member_is_recovered() {
        let basics = orthonormal_basics();
        let mut v = Array1::zeros(8);
        v[2] = 0.5;
        v[5] = 0.5;
        let e = find_basic_pair(&emb("c", v), &basics, &WeightGrid::default()).unwrap();
        assert_eq!((e.basic_i.as_str(), e.basic_j.as_str(), e.weight), ("b2", "b5", 0.5));
        assert!((e.cosine - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scale_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let basics = BasicSet::new(
            (0..8)
                .map(|i| emb(&format!("b{i}"), Array1::from_shape_fn(16, |_| rng.random_range(-1.0..1.0))))
                .collect(),
        )
        .unwrap();
        let c = Array1::from_shape_fn(16, |_| rng.random_range(-1.0..1.0));
        let a = find_basic_pair(&emb("c", c.clone()), &basics, &WeightGrid::default()).unwrap();
        for s in [0.01, 3.0, 250.0] {
            let b = find_basic_pair(&emb("c", &c * s), &basics, &WeightGrid::default()).unwrap();
            assert_eq!((&a.basic_i, &a.basic_j, a.weight), (&b.basic_i, &b.basic_j, b.weight));
        }
    }

    #[test]
    fn unordered_pairs_cover_ordered_candidates() {
        // blend(i, j, w) == blend(j, i, 1 - w), so i < j with the full grid
        // spans every ordered candidate.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v: Vec<Array1<f64>> = (0..4).map(|_| Array1::from_shape_fn(3, |_| rng.random_range(-1.0..1.0))).collect();
        let key = |a: &Array1<f64>| a.iter().map(|x| format!("{x:.12}")).collect::<Vec<_>>().join(",");
        let grid = WeightGrid::default().weights();
        let mut unordered = HashSet::new();
        let mut ordered = HashSet::new();
        for i in 0..4 {
            for j in 0..4 {
                if i == j {
                    continue;
                }
                for &w in &grid {
                    let b = key(&blend(v[i].view(), v[j].view(), w).unwrap());
                    ordered.insert(b.clone());
                    if i < j {
                        unordered.insert(b);
                    }
                }
            }
        }
        assert_eq!(ordered, unordered);
    }

    #[test]
    fn search_errors() {
        let basics = orthonormal_basics();
        assert!(find_basic_pair(&emb("b1", Array1::ones(8)), &basics, &WeightGrid::default()).is_err());
        assert!(find_basic_pair(&emb("c", Array1::zeros(8)), &basics, &WeightGrid::default()).is_err());
        assert!(BasicSet::new(basics.members()[..7].to_vec()).is_err());
    }

    #[test]
    fn antiparallel_basics_skip_zero_blend() {
        let mut members: Vec<_> = orthonormal_basics().members().to_vec();
        members[1].vector = -&members[0].vector;
        let basics = BasicSet::new(members).unwrap();
        let mut v = Array1::zeros(8);
        v[0] = 1.0;
        let e = find_basic_pair(&emb("c", v), &basics, &WeightGrid::default()).unwrap();
        assert_eq!((e.basic_i.as_str(), e.basic_j.as_str(), e.weight), ("b0", "b1", 0.6));
    }

    #[test]
    fn wheel_filtering_and_outputs() {
        let unit = |i: usize| Array1::from_shape_fn(9, |k| if k == i { 1.0 } else { 0.0 });
        let basics = BasicSet::new((0..8).map(|i| emb(&format!("b{i}"), unit(i))).collect()).unwrap();
        let layout: Vec<String> = (0..8).map(|i| format!("b{i}")).collect();
        let strong = unit(0) * 0.3 + unit(1) * 0.7;
        // mostly along the ninth axis, so every blend has cosine below 0.1
        let weak = unit(0) * 0.09 + unit(8) * (1.0f64 - 0.09 * 0.09).sqrt();
        let mut all = basics.members().to_vec();
        all.extend([emb("weak", weak), emb("strong", strong)]);

        let wheel = build_wheel(&all, &basics, &WeightGrid::default(), 0.1, &layout).unwrap();
        assert_eq!(wheel.entries.len(), 1);
        assert_eq!(wheel.entries[0].complex, "strong");
        assert_eq!(wheel.omitted.len(), 1);
        assert!(wheel.omitted[0].cosine < 0.1);
        assert!(wheel.to_tsv().starts_with("c\tb_i\tb_j\tw\tcos\nstrong\tb0\tb1\t0.3\t1.0000\n"));
        let svg = wheel.to_svg();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains(">strong</text>"));
        assert!(!svg.contains(">weak</text>"));
        assert!(build_wheel(&all, &basics, &WeightGrid::default(), 0.1, &layout[..7]).is_err());
    }

    #[test]
    fn canonical_form_puts_majority_first() {
        let e = WheelEntry {
            complex: "c".into(),
            basic_i: "a".into(),
            basic_j: "b".into(),
            weight: 0.3,
            cosine: 0.5,
        };
        let c = e.canonical();
        assert_eq!((c.basic_i.as_str(), c.basic_j.as_str()), ("b", "a"));
        assert!((c.weight - 0.7).abs() < 1e-15);
        assert_eq!(c.canonical(), c);
    }

    mod props {
        use super::*;
        use proptest::collection::vec;
        use proptest::prelude::*;

        fn vector(dim: usize) -> impl Strategy<Value = Vec<f64>> {
            vec(-5.0f64..5.0, dim).prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-3))
        }

        proptest! {
            #[test]
            fn cosine_bounded_and_scale_free(a in vector(6), b in vector(6), k in 0.01f64..100.0) {
                let (a, b) = (Array1::from(a), Array1::from(b));
                let c = cosine(a.view(), b.view());
                prop_assert!(c.abs() <= 1.0 + 1e-12);
                prop_assert!((cosine((&a * k).view(), b.view()) - c).abs() <= 1e-9);
                prop_assert!((cosine(b.view(), a.view()) - c).abs() <= 1e-15);
            }

            #[test]
            fn best_pair_dominates_every_blend(
                basics in vec(vector(5), 8),
                c in vector(5),
            ) {
                let set = BasicSet::new(
                    basics.iter().enumerate().map(|(k, v)| emb(&format!("b{k}"), Array1::from(v.clone()))).collect(),
                ).unwrap();
                let found = find_basic_pair(&emb("c", Array1::from(c.clone())), &set, &WeightGrid::default()).unwrap();
                let i: usize = found.basic_i[1..].parse().unwrap();
                let j: usize = found.basic_j[1..].parse().unwrap();
                prop_assert!(i < j);
                prop_assert!((1..=9).any(|t| f64::from(t) / 10.0 == found.weight));
                let c = Array1::from(c);
                for p in 0..8 {
                    for q in p + 1..8 {
                        for t in 1..=9 {
                            let m = blend(set.members()[p].vector.view(), set.members()[q].vector.view(), f64::from(t) / 10.0).unwrap();
                            if m.dot(&m).sqrt() >= COSINE_NORM_FLOOR {
                                prop_assert!(cosine(m.view(), c.view()) <= found.cosine + TIE_TOLERANCE);
                            }
                        }
                    }
                }
            }
        }
    }
}
