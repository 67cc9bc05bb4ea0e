//! End-to-end commands: corpus statistics, encoding, multi-run training,
//! evaluation, layer analysis, the emotion wheel, PAD augmentation and the
//! full report that writes all of them to one directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dataset::{corpus_stats, load_corpus, CorpusFormat, DocumentRecord, LabelSpace, Split, SplitCorpus};
use crate::embedding::{hash_encode, read_embeddings, EmbeddingMatrix};
use crate::emotions::{russell_pad_tsv, DEFAULT_BASICS, WHEEL_ORDER};
use crate::error::{Error, Result};
use crate::geometry::{build_wheel, emotion_embeddings, BasicSet, EmotionEmbedding, Wheel, WeightGrid};
use crate::layers::{
    build_emotion_graph, confusion_percent, drift_h_matrix, drift_l_matrix, extract_layer_features, matrix_tsv,
    train_layer_probe, ConfusionTable, EmotionGraph, ProbeOptions,
};
use crate::pad::{augment_pad, EarlyStopping, KnownPad, PadModel, PadOptions, PadTable};
use crate::probing::{
    evaluate, format_mean_std, parse_preset, preset_string, train, write_model, Evaluation, ProbingConfig,
    ProbingNetwork,
};

/// Everything a run needs, as a flat TOML table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    /// EMB1 files covering the documents used. Empty means hash-encode the
    /// corpus with `input_dim` and `encode_seed`.
    pub embeddings: Vec<PathBuf>,
    /// Existing PRB1 model for eval/analysis commands.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    pub encode_seed: u64,
    pub preset: String,
    /// Preset of the model used for layer analysis when it differs from
    /// `preset`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analysis_preset: Option<String>,
    pub heads: usize,
    pub input_dim: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub max_doc_length: usize,
    pub seed: u64,
    pub runs: usize,
    pub threshold: f64,
    pub min_cos: f64,
    pub basics: Vec<String>,
    /// Known PAD values; the built-in 22-emotion table when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub known_pad: Option<PathBuf>,
    pub probe_reg: f64,
    pub pad_dropout: f64,
    pub pad_learning_rate: f64,
    pub pad_max_epochs: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let probing = ProbingConfig::default();
        Self {
            corpus: None,
            embeddings: Vec::new(),
            model: None,
            encode_seed: 0,
            preset: preset_string(&probing.layer_dims),
            analysis_preset: Some("128:64:32".into()),
            heads: probing.heads,
            input_dim: probing.input_dim,
            learning_rate: probing.learning_rate,
            batch_size: probing.batch_size,
            epochs: probing.epochs,
            max_doc_length: probing.max_doc_length,
            seed: 0,
            runs: 1,
            threshold: 2.0,
            min_cos: 0.1,
            basics: DEFAULT_BASICS.iter().map(|s| s.to_string()).collect(),
            known_pad: None,
            probe_reg: ProbeOptions::default().reg,
            pad_dropout: 0.3,
            pad_learning_rate: 1e-3,
            pad_max_epochs: 5000,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        if !self.threshold.is_finite() {
            return Err(Error::Config("threshold must be finite".into()));
        }
        if !(-1.0..=1.0).contains(&self.min_cos) {
            return Err(Error::Config(format!("min_cos {} outside [-1, 1]", self.min_cos)));
        }
        if !(0.0..1.0).contains(&self.pad_dropout) {
            return Err(Error::Config(format!("pad_dropout {} outside [0, 1)", self.pad_dropout)));
        }
        if !(self.probe_reg >= 0.0) {
            return Err(Error::Config("probe_reg must be non-negative".into()));
        }
        parse_preset(&self.preset)?;
        if let Some(p) = &self.analysis_preset {
            parse_preset(p)?;
        }
        Ok(())
    }

    pub fn corpus_path(&self) -> Result<&Path> {
        self.corpus
            .as_deref()
            .ok_or_else(|| Error::Config("no corpus given".into()))
    }

    pub fn probing_config(&self, preset: &str, input_dim: usize, classes: usize, seed: u64) -> Result<ProbingConfig> {
        let cfg = ProbingConfig {
            layer_dims: parse_preset(preset)?,
            heads: self.heads,
            input_dim,
            classes,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed,
            max_doc_length: self.max_doc_length,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn probe_options(&self) -> ProbeOptions {
        ProbeOptions {
            reg: self.probe_reg,
            ..Default::default()
        }
    }

    pub fn pad_options(&self) -> PadOptions {
        PadOptions {
            dropout: self.pad_dropout,
            learning_rate: self.pad_learning_rate,
            max_epochs: self.pad_max_epochs,
            early_stopping: Some(EarlyStopping::default()),
            seed: self.seed,
            ..Default::default()
        }
    }

    pub fn known_pad(&self, labels: &LabelSpace) -> Result<KnownPad> {
        match &self.known_pad {
            Some(p) => crate::pad::load_known_pad(p, labels),
            None => KnownPad::parse(&russell_pad_tsv(), labels),
        }
    }
}

/// A loaded corpus plus the embedding rows available for it.
#[derive(Clone, Debug)]
pub struct Inputs {
    pub corpus: SplitCorpus,
    embeddings: Option<EmbeddingMatrix>,
    encode_dim: usize,
    encode_seed: u64,
}

/// Corpus format from the file extension, TSV otherwise.
pub fn open_corpus(path: &Path) -> Result<SplitCorpus> {
    load_corpus(path, CorpusFormat::from_path(path).unwrap_or(CorpusFormat::Tsv))
}

/// Concatenates EMB1 files; ids must be unique across files.
pub fn read_embedding_files(paths: &[PathBuf]) -> Result<Option<EmbeddingMatrix>> {
    let mut parts = Vec::with_capacity(paths.len());
    for p in paths {
        parts.push(read_embeddings(p)?);
    }
    let Some(dim) = parts.first().map(EmbeddingMatrix::dim) else {
        return Ok(None);
    };
    if let Some(bad) = parts.iter().find(|m| m.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: bad.dim(),
        });
    }
    if parts.len() == 1 {
        return Ok(parts.pop());
    }
    let ids = parts.iter().flat_map(|m| m.doc_ids().iter().cloned()).collect();
    let views: Vec<_> = parts.iter().map(EmbeddingMatrix::data).collect();
    let data = ndarray::concatenate(ndarray::Axis(0), &views).expect("equal widths");
    EmbeddingMatrix::new(ids, data).map(Some).map_err(|e| Error::Invalid(e.to_string()))
}

impl Inputs {
    pub fn open(cfg: &PipelineConfig) -> Result<Self> {
        Ok(Self {
            corpus: open_corpus(cfg.corpus_path()?)?,
            embeddings: read_embedding_files(&cfg.embeddings)?,
            encode_dim: cfg.input_dim,
            encode_seed: cfg.encode_seed,
        })
    }

    pub fn from_parts(corpus: SplitCorpus, embeddings: Option<EmbeddingMatrix>, encode_dim: usize, encode_seed: u64) -> Self {
        Self {
            corpus,
            embeddings,
            encode_dim,
            encode_seed,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.embeddings.as_ref().map_or(self.encode_dim, EmbeddingMatrix::dim)
    }

    /// Embedding rows of `split`, in corpus order.
    pub fn split_embeddings(&self, split: Split) -> Result<EmbeddingMatrix> {
        let docs = self.corpus.split(split);
        match &self.embeddings {
            Some(m) => m.select_docs(docs),
            None => hash_encode(docs, self.encode_dim, self.encode_seed),
        }
    }

    /// Features and gold indices of `split` in the given label space.
    pub fn labeled(&self, split: Split, labels: &LabelSpace) -> Result<(EmbeddingMatrix, Vec<usize>)> {
        let docs = self.corpus.split(split);
        if docs.is_empty() {
            return Err(Error::EmptySplit);
        }
        Ok((self.split_embeddings(split)?, gold_indices(docs, labels)?))
    }
}

pub fn gold_indices(docs: &[DocumentRecord], labels: &LabelSpace) -> Result<Vec<usize>> {
    docs.iter().map(|d| labels.require(&d.label)).collect()
}

/// Per-split document counts and whitespace-token mean/std.
pub fn stats_table(corpus: &SplitCorpus) -> String {
    let mut out = String::from("split\tdocuments\ttokens_mean\ttokens_std\n");
    for split in Split::ALL {
        match corpus_stats(corpus.split(split)) {
            Ok(s) => {
                let _ = writeln!(out, "{split}\t{}\t{:.2}\t{:.2}", s.count, s.mean_tokens, s.std_tokens);
            }
            Err(_) => {
                let _ = writeln!(out, "{split}\t0\t-\t-");
            }
        }
    }
    out
}

/// Hash-encodes every document in trn, dev, tst order.
pub fn encode_corpus(corpus: &SplitCorpus, dim: usize, seed: u64) -> Result<EmbeddingMatrix> {
    let docs: Vec<DocumentRecord> = corpus.iter().map(|(_, d)| d.clone()).collect();
    hash_encode(&docs, dim, seed)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub seed: u64,
    pub selected_epoch: usize,
    pub dev_accuracy: Option<f64>,
    /// Accuracy on tst, or on dev when tst is empty.
    pub test_accuracy: f64,
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub preset: String,
    pub runs: Vec<RunSummary>,
    /// Run whose model is kept: best dev accuracy, earliest on ties.
    pub best_run: usize,
    pub network: ProbingNetwork,
    pub labels: LabelSpace,
    pub mean: f64,
    pub std: f64,
    /// `mean (±std)` in percent.
    pub summary: String,
}

impl TrainReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "preset\t{}", self.preset);
        let _ = writeln!(out, "run\tseed\tepoch\tdev\ttest");
        for (i, r) in self.runs.iter().enumerate() {
            let dev = r.dev_accuracy.map_or_else(|| "-".to_owned(), |a| format!("{a:.4}"));
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{dev}\t{:.4}",
                i + 1,
                r.seed,
                r.selected_epoch,
                r.test_accuracy
            );
        }
        let _ = writeln!(out, "kept\t{}", self.best_run + 1);
        let _ = writeln!(out, "accuracy\t{}", self.summary);
        out
    }
}

/// Trains `cfg.runs` models with seeds `seed, seed + 1, …`, selecting
/// epochs on dev and scoring on tst.
pub fn train_runs(inputs: &Inputs, cfg: &PipelineConfig, preset: &str) -> Result<TrainReport> {
    let labels = inputs.corpus.labels.clone();
    let (x, y) = inputs.labeled(Split::Trn, &labels)?;
    let dev = if inputs.corpus.dev.is_empty() {
        None
    } else {
        Some(inputs.labeled(Split::Dev, &labels)?)
    };
    let test = if inputs.corpus.tst.is_empty() {
        dev.clone()
    } else {
        Some(inputs.labeled(Split::Tst, &labels)?)
    };
    let mut runs = Vec::with_capacity(cfg.runs);
    let mut best: Option<(usize, f64, ProbingNetwork)> = None;
    for r in 0..cfg.runs {
        let seed = cfg.seed.wrapping_add(r as u64);
        let pcfg = cfg.probing_config(preset, inputs.input_dim(), labels.len(), seed)?;
        log::info!("training {preset} run {}/{} (seed {seed})", r + 1, cfg.runs);
        let outcome = train(
            ProbingNetwork::init(&pcfg)?,
            &x,
            &y,
            dev.as_ref().map(|(m, l)| (m, l.as_slice())),
        )?;
        let dev_accuracy = dev
            .as_ref()
            .map(|(m, l)| evaluate(&outcome.network, m, l).map(|e| e.accuracy))
            .transpose()?;
        let test_accuracy = match &test {
            Some((m, l)) => evaluate(&outcome.network, m, l)?.accuracy,
            None => evaluate(&outcome.network, &x, &y)?.accuracy,
        };
        runs.push(RunSummary {
            seed,
            selected_epoch: outcome.selected_epoch,
            dev_accuracy,
            test_accuracy,
        });
        let score = dev_accuracy.unwrap_or(test_accuracy);
        if best.as_ref().is_none_or(|(_, b, _)| score > *b) {
            best = Some((r, score, outcome.network));
        }
    }
    let (best_run, _, network) = best.expect("at least one run");
    let accs: Vec<f64> = runs.iter().map(|r| r.test_accuracy).collect();
    let (mean, std, summary) = format_mean_std(&accs);
    Ok(TrainReport {
        preset: preset.to_owned(),
        runs,
        best_run,
        network,
        labels,
        mean,
        std,
        summary,
    })
}

/// Evaluates `net` on a split; the corpus labels must exist in `labels`.
pub fn evaluate_split(net: &ProbingNetwork, labels: &LabelSpace, inputs: &Inputs, split: Split) -> Result<Evaluation> {
    let (x, y) = inputs.labeled(split, labels)?;
    evaluate(net, &x, &y)
}

/// `[gold][predicted]` counts with emotion-name headers.
pub fn confusion_counts_tsv(labels: &LabelSpace, confusion: &Array2<u64>) -> String {
    matrix_tsv(labels, &confusion.mapv(|c| c as f64))
}

#[derive(Clone, Debug)]
pub struct LayerReport {
    /// Dev accuracy of each layer's probe.
    pub probe_accuracy: Vec<f64>,
    pub tables: Vec<ConfusionTable>,
    /// `L` and `H` between layers `i` and `i + 1`, one per adjacent pair.
    pub drift_l: Vec<Array2<f64>>,
    pub drift_h: Vec<Array2<f64>>,
    /// Built from the first two `H` matrices.
    pub graph: EmotionGraph,
}

/// Trains a probe per layer on trn features and tabulates dev confusion.
pub fn analyze_layers(
    net: &ProbingNetwork,
    labels: &LabelSpace,
    trn: (ArrayView2<'_, f64>, &[usize]),
    dev: (ArrayView2<'_, f64>, &[usize]),
    opts: &ProbeOptions,
    threshold: f64,
) -> Result<LayerReport> {
    if net.config().layers() < 2 {
        return Err(Error::Config("layer analysis needs at least two probing layers".into()));
    }
    let trn_features = extract_layer_features(net, trn.0)?;
    let dev_features = extract_layer_features(net, dev.0)?;
    let mut tables = Vec::with_capacity(trn_features.len());
    let mut probe_accuracy = Vec::with_capacity(trn_features.len());
    for (i, (tf, df)) in trn_features.iter().zip(&dev_features).enumerate() {
        log::info!("probing layer {}", i + 1);
        let probe = train_layer_probe(i + 1, tf.view(), trn.1, labels.len(), opts)?;
        probe_accuracy.push(probe.accuracy(df.view(), dev.1));
        tables.push(confusion_percent(&probe, df.view(), dev.1)?);
    }
    let drift_l: Vec<_> = tables.windows(2).map(|w| drift_l_matrix(&w[0], &w[1])).collect();
    let drift_h: Vec<_> = tables.windows(2).map(|w| drift_h_matrix(&w[0], &w[1])).collect();
    let graph = build_emotion_graph(labels, &drift_h[0], drift_h.get(1), threshold)?;
    Ok(LayerReport {
        probe_accuracy,
        tables,
        drift_l,
        drift_h,
        graph,
    })
}

impl LayerReport {
    /// `(file name, contents)` for every table and the graph.
    pub fn artifacts(&self, labels: &LabelSpace) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let mut acc = String::from("layer\taccuracy\n");
        for (i, a) in self.probe_accuracy.iter().enumerate() {
            let _ = writeln!(acc, "{}\t{a:.4}", i + 1);
        }
        out.push(("layer_accuracy.tsv".to_owned(), acc));
        for t in &self.tables {
            out.push((format!("P{}.tsv", t.layer_index), matrix_tsv(labels, &t.percent)));
        }
        for (i, (l, h)) in self.drift_l.iter().zip(&self.drift_h).enumerate() {
            out.push((format!("L{}{}.tsv", i + 1, i + 2), matrix_tsv(labels, l)));
            out.push((format!("H{}{}.tsv", i + 1, i + 2), matrix_tsv(labels, h)));
        }
        out.push(("graph.dot".to_owned(), self.graph.to_dot()));
        out
    }
}

/// Clockwise wheel order: the default order when it covers exactly the
/// chosen basics, their label order otherwise.
pub fn wheel_layout(basics: &BasicSet) -> Vec<String> {
    let names: Vec<String> = basics.members().iter().map(|m| m.emotion.clone()).collect();
    if WHEEL_ORDER.iter().all(|w| names.iter().any(|n| n == w)) {
        WHEEL_ORDER.iter().map(|s| s.to_string()).collect()
    } else {
        names
    }
}

/// Mean dev embeddings of every emotion, then the wheel over `basics`.
pub fn wheel_analysis(
    net: &ProbingNetwork,
    labels: &LabelSpace,
    dev: (ArrayView2<'_, f64>, &[usize]),
    basics: &[String],
    min_cos: f64,
) -> Result<(Vec<EmotionEmbedding>, Wheel)> {
    let embeddings = emotion_embeddings(net, dev.0, dev.1, labels)?;
    let basic_set = BasicSet::select(&embeddings, basics, labels)?;
    let layout = wheel_layout(&basic_set);
    let wheel = build_wheel(&embeddings, &basic_set, &WeightGrid::default(), min_cos, &layout)?;
    Ok((embeddings, wheel))
}

pub fn pad_analysis(
    embeddings: &[EmotionEmbedding],
    known: &KnownPad,
    opts: &PadOptions,
) -> Result<(PadTable, Option<PadModel>)> {
    augment_pad(embeddings, known, opts)
}

pub fn pad_artifacts(table: &PadTable) -> Vec<(String, String)> {
    vec![
        ("pad.tsv".to_owned(), table.to_tsv()),
        ("pad_pa.svg".to_owned(), table.to_pa_svg()),
        ("pad_3d.tsv".to_owned(), table.to_3d_tsv()),
    ]
}

pub fn wheel_artifacts(wheel: &Wheel) -> Vec<(String, String)> {
    vec![
        ("wheel.tsv".to_owned(), wheel.to_tsv()),
        ("wheel.svg".to_owned(), wheel.to_svg()),
    ]
}

/// Writes `(name, contents)` pairs into `dir`.
pub fn write_artifacts(dir: &Path, artifacts: &[(String, Vec<u8>)]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, bytes) in artifacts {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub file: String,
    pub bytes: usize,
    pub crc32: u32,
}

pub const MANIFEST_FILE: &str = "manifest.tsv";

pub fn manifest_tsv(entries: &[ManifestEntry]) -> String {
    let mut out = String::from("file\tbytes\tcrc32\n");
    for e in entries {
        let _ = writeln!(out, "{}\t{}\t{:08x}", e.file, e.bytes, e.crc32);
    }
    out
}

/// Trains, analyzes and writes every artifact to `out_dir`. Returns the
/// manifest entries (sorted by file name, manifest itself excluded).
pub fn full_report(cfg: &PipelineConfig, out_dir: &Path) -> Result<Vec<ManifestEntry>> {
    cfg.validate()?;
    let inputs = Inputs::open(cfg)?;
    let labels = inputs.corpus.labels.clone();
    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    let text = |name: &str, s: String| (name.to_owned(), s.into_bytes());

    files.push(text("config.toml", cfg.to_toml()));
    files.push(text("stats.tsv", stats_table(&inputs.corpus)));

    let report = train_runs(&inputs, cfg, &cfg.preset)?;
    files.push(text("train_report.tsv", report.to_tsv()));
    let model_path = out_dir.join("model.prb1");
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_model(&model_path, &report.network, &labels)?;
    files.push(("model.prb1".to_owned(), fs::read(&model_path).map_err(|e| Error::io(&model_path, e))?));

    let (trn_x, trn_y) = inputs.labeled(Split::Trn, &labels)?;
    let (dev_x, dev_y) = inputs.labeled(Split::Dev, &labels)?;
    let (trn_x, dev_x) = (trn_x.to_f64(), dev_x.to_f64());

    let analysis_net = match cfg.analysis_preset.as_deref() {
        Some(p) if parse_preset(p)? != parse_preset(&cfg.preset)? => {
            let single = PipelineConfig {
                runs: 1,
                ..cfg.clone()
            };
            let r = train_runs(&inputs, &single, p)?;
            files.push(text("analysis_train_report.tsv", r.to_tsv()));
            r.network
        }
        _ => report.network.clone(),
    };
    let layers = analyze_layers(
        &analysis_net,
        &labels,
        (trn_x.view(), &trn_y),
        (dev_x.view(), &dev_y),
        &cfg.probe_options(),
        cfg.threshold,
    )?;
    files.extend(layers.artifacts(&labels).into_iter().map(|(n, s)| (n, s.into_bytes())));

    let (embeddings, wheel) = wheel_analysis(&report.network, &labels, (dev_x.view(), &dev_y), &cfg.basics, cfg.min_cos)?;
    files.extend(wheel_artifacts(&wheel).into_iter().map(|(n, s)| (n, s.into_bytes())));

    let known = cfg.known_pad(&labels)?;
    let (table, model) = pad_analysis(&embeddings, &known, &cfg.pad_options())?;
    if let Some(m) = &model {
        let mse = m.mse();
        files.push(text(
            "pad_mse.tsv",
            format!(
                "pleasure\tarousal\tdominance\n{:.6}\t{:.6}\t{:.6}\n",
                mse.pleasure, mse.arousal, mse.dominance
            ),
        ));
    }
    files.extend(pad_artifacts(&table).into_iter().map(|(n, s)| (n, s.into_bytes())));

    files.sort_by(|a, b| a.0.cmp(&b.0));
    write_artifacts(out_dir, &files)?;
    let manifest: Vec<ManifestEntry> = files
        .iter()
        .map(|(name, bytes)| ManifestEntry {
            file: name.clone(),
            bytes: bytes.len(),
            crc32: crc32fast::hash(bytes),
        })
        .collect();
    let path = out_dir.join(MANIFEST_FILE);
    fs::write(&path, manifest_tsv(&manifest)).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::RawRecord;

    fn tiny_corpus() -> SplitCorpus {
        let rows = [
            ("a1", "train", "joy", "what a lovely day"),
            ("a2", "train", "fear", "i am scared of the dark"),
            ("a3", "dev", "joy", "so happy"),
            ("a4", "test", "fear", "terrified"),
        ];
        SplitCorpus::from_records(rows.iter().map(|(id, s, l, t)| RawRecord {
            id: id.to_string(),
            split: s.to_string(),
            label: l.to_string(),
            text: t.to_string(),
        }))
        .unwrap()
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = PipelineConfig {
            corpus: Some("c.tsv".into()),
            embeddings: vec!["a.emb1".into()],
            runs: 3,
            ..Default::default()
        };
        let back: PipelineConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        let sparse: PipelineConfig = toml::from_str("preset = \"32\"\nruns = 2\n").unwrap();
        assert_eq!(sparse.preset, "32");
        assert_eq!(sparse.heads, 8);
        assert!(toml::from_str::<PipelineConfig>("bogus = 1").is_err());
    }

    #[test]
    fn config_validation() {
        let ok = PipelineConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            PipelineConfig { runs: 0, ..ok.clone() },
            PipelineConfig { min_cos: 2.0, ..ok.clone() },
            PipelineConfig { preset: "64:x".into(), ..ok.clone() },
            PipelineConfig { pad_dropout: 1.0, ..ok.clone() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))));
        }
    }

    #[test]
    fn stats_table_lists_every_split() {
        let t = stats_table(&tiny_corpus());
        assert_eq!(
            t,
            "split\tdocuments\ttokens_mean\ttokens_std\ntrn\t2\t5.00\t1.00\ndev\t1\t2.00\t0.00\ntst\t1\t1.00\t0.00\n"
        );
    }

    #[test]
    fn hash_inputs_follow_corpus_order() {
        let inputs = Inputs::from_parts(tiny_corpus(), None, 16, 0);
        let (m, gold) = inputs.labeled(Split::Trn, &inputs.corpus.labels).unwrap();
        assert_eq!(m.doc_ids(), ["a1", "a2"]);
        assert_eq!(gold, [1, 0]);
        let all = encode_corpus(&inputs.corpus, 16, 0).unwrap();
        assert_eq!(all.doc_ids(), ["a1", "a2", "a3", "a4"]);
        assert_eq!(all.select_docs(&inputs.corpus.trn).unwrap(), m);
    }

    #[test]
    fn foreign_labels_are_rejected() {
        let inputs = Inputs::from_parts(tiny_corpus(), None, 16, 0);
        let other = LabelSpace::new(vec!["joy".into(), "anger".into()]).unwrap();
        assert!(matches!(inputs.labeled(Split::Tst, &other), Err(Error::UnknownLabel(_))));
    }

    #[test]
    fn single_run_has_zero_std() {
        let inputs = Inputs::from_parts(tiny_corpus(), None, 16, 0);
        let cfg = PipelineConfig {
            preset: "4".into(),
            heads: 2,
            epochs: 3,
            ..Default::default()
        };
        let r = train_runs(&inputs, &cfg, "4").unwrap();
        assert_eq!(r.runs.len(), 1);
        assert_eq!(r.std, 0.0);
        assert!(r.summary.ends_with("(±0.0)"));
        assert!(r.to_tsv().contains("run\tseed\tepoch\tdev\ttest\n1\t0\t"));
    }

    #[test]
    fn manifest_format() {
        let m = [ManifestEntry {
            file: "a.tsv".into(),
            bytes: 3,
            crc32: 0xab,
        }];
        assert_eq!(manifest_tsv(&m), "file\tbytes\tcrc32\na.tsv\t3\t000000ab\n");
    }
}
