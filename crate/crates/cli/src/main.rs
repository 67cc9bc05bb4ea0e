use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use emoprobe::dataset::{LabelSpace, Split};
use emoprobe::embedding::{hash_encode, write_embeddings};
use emoprobe::pipeline::{
    analyze_layers, confusion_counts_tsv, encode_corpus, evaluate_split, full_report, open_corpus, pad_analysis,
    pad_artifacts, stats_table, train_runs, wheel_analysis, wheel_artifacts, write_artifacts, Inputs, PipelineConfig,
};
use emoprobe::probing::{read_model, write_model, ProbingNetwork};

#[derive(Parser)]
#[command(name = "emoprobe", version, about = "Multi-head emotion probing over document embeddings")]
struct Cli {
    /// More log output on stderr (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Document counts and token statistics per split.
    Stats {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Hash-encode a corpus into an EMB1 file.
    Encode {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 768)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Only this split (default: all, in trn/dev/tst order).
        #[arg(long)]
        split: Option<Split>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train probing models and keep the best one.
    Train {
        #[command(flatten)]
        opts: PipelineArgs,
        #[arg(long)]
        out: PathBuf,
        /// Per-run accuracy report (stdout if omitted).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Accuracy and confusion counts of a trained model.
    Eval {
        #[command(flatten)]
        opts: PipelineArgs,
        #[arg(long, default_value = "tst")]
        split: Split,
        /// Write `[gold][predicted]` counts here.
        #[arg(long)]
        confusion: Option<PathBuf>,
    },
    /// Per-layer probes, confusion drift tables and the emotion graph.
    AnalyzeLayers {
        #[command(flatten)]
        opts: PipelineArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Emotion wheel from mean dev embeddings.
    Wheel {
        #[command(flatten)]
        opts: PipelineArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict PAD values for emotions missing from the known table.
    Pad {
        #[command(flatten)]
        opts: PipelineArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train, analyze and write every artifact plus a CRC manifest.
    FullReport {
        #[command(flatten)]
        opts: PipelineArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Overrides for [`PipelineConfig`] fields.
#[derive(Args, Default)]
struct PipelineArgs {
    /// TOML file with pipeline settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// EMB1 file(s) with document embeddings (repeatable).
    #[arg(long = "embeddings", visible_alias = "dev")]
    embeddings: Vec<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    encode_seed: Option<u64>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    analysis_preset: Option<String>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    input_dim: Option<usize>,
    #[arg(long = "lr")]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    max_doc_length: Option<usize>,
    /// Base seed [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    threshold: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    min_cos: Option<f64>,
    /// Comma-separated basic emotions.
    #[arg(long, value_delimiter = ',')]
    basics: Vec<String>,
    #[arg(long = "known")]
    known_pad: Option<PathBuf>,
    #[arg(long)]
    probe_reg: Option<f64>,
    #[arg(long)]
    pad_dropout: Option<f64>,
    #[arg(long)]
    pad_max_epochs: Option<usize>,
}

impl PipelineArgs {
    fn resolve(&self) -> emoprobe::Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = &self.$field {
                    cfg.$field = v.clone().into();
                }
            )*};
        }
        set!(corpus, model, known_pad, analysis_preset);
        set!(encode_seed, preset, heads, input_dim, learning_rate, batch_size, epochs, max_doc_length);
        set!(runs, threshold, min_cos, probe_reg, pad_dropout, pad_max_epochs);
        if !self.embeddings.is_empty() {
            cfg.embeddings = self.embeddings.clone();
        }
        if !self.basics.is_empty() {
            cfg.basics = self.basics.clone();
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Loads `--model` and the corpus, hash-encoding with the model's input width
/// when no embeddings are given.
fn model_inputs(cfg: &mut PipelineConfig) -> emoprobe::Result<(ProbingNetwork, LabelSpace, Inputs)> {
    let path = cfg
        .model
        .clone()
        .ok_or_else(|| emoprobe::Error::Config("--model is required".into()))?;
    let (net, labels) = read_model(path)?;
    cfg.input_dim = net.config().input_dim;
    let inputs = Inputs::open(cfg)?;
    if inputs.input_dim() != net.config().input_dim {
        return Err(emoprobe::Error::DimensionMismatch {
            expected: net.config().input_dim,
            got: inputs.input_dim(),
        });
    }
    Ok((net, labels, inputs))
}

fn write_text(dir: &Path, files: Vec<(String, String)>) -> emoprobe::Result<()> {
    let files: Vec<(String, Vec<u8>)> = files.into_iter().map(|(n, s)| (n, s.into_bytes())).collect();
    write_artifacts(dir, &files)
}

fn print(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes());
}

fn run(cli: Cli) -> emoprobe::Result<()> {
    match cli.command {
        Command::Stats { corpus } => print(&stats_table(&open_corpus(&corpus)?)),
        Command::Encode {
            corpus,
            dim,
            seed,
            split,
            out,
        } => {
            let corpus = open_corpus(&corpus)?;
            let m = match split {
                Some(s) => hash_encode(corpus.split(s), dim, seed)?,
                None => encode_corpus(&corpus, dim, seed)?,
            };
            write_embeddings(&m, &out)?;
            log::info!("wrote {} × {} to {}", m.len(), m.dim(), out.display());
        }
        Command::Train { opts, out, report } => {
            let cfg = opts.resolve()?;
            let inputs = Inputs::open(&cfg)?;
            let r = train_runs(&inputs, &cfg, &cfg.preset)?;
            write_model(&out, &r.network, &r.labels)?;
            match report {
                Some(p) => fs::write(&p, r.to_tsv()).map_err(|e| emoprobe::Error::Invalid(format!("{}: {e}", p.display())))?,
                None => print(&r.to_tsv()),
            }
        }
        Command::Eval {
            opts,
            split,
            confusion,
        } => {
            let mut cfg = opts.resolve()?;
            let (net, labels, inputs) = model_inputs(&mut cfg)?;
            let e = evaluate_split(&net, &labels, &inputs, split)?;
            print(&format!("split\t{split}\naccuracy\t{:.4}\n", e.accuracy));
            if let Some(p) = confusion {
                fs::write(&p, confusion_counts_tsv(&labels, &e.confusion))
                    .map_err(|err| emoprobe::Error::Invalid(format!("{}: {err}", p.display())))?;
            }
        }
        Command::AnalyzeLayers { opts, out } => {
            let mut cfg = opts.resolve()?;
            let (net, labels, inputs) = model_inputs(&mut cfg)?;
            let (trn, trn_y) = inputs.labeled(Split::Trn, &labels)?;
            let (dev, dev_y) = inputs.labeled(Split::Dev, &labels)?;
            let report = analyze_layers(
                &net,
                &labels,
                (trn.to_f64().view(), &trn_y),
                (dev.to_f64().view(), &dev_y),
                &cfg.probe_options(),
                cfg.threshold,
            )?;
            write_text(&out, report.artifacts(&labels))?;
        }
        Command::Wheel { opts, out } => {
            let mut cfg = opts.resolve()?;
            let (net, labels, inputs) = model_inputs(&mut cfg)?;
            let (dev, dev_y) = inputs.labeled(Split::Dev, &labels)?;
            let (_, wheel) = wheel_analysis(&net, &labels, (dev.to_f64().view(), &dev_y), &cfg.basics, cfg.min_cos)?;
            for e in &wheel.omitted {
                log::warn!("{} omitted (cosine {:.4} < {})", e.complex, e.cosine, cfg.min_cos);
            }
            write_text(&out, wheel_artifacts(&wheel))?;
        }
        Command::Pad { opts, out } => {
            let mut cfg = opts.resolve()?;
            let (net, labels, inputs) = model_inputs(&mut cfg)?;
            let (dev, dev_y) = inputs.labeled(Split::Dev, &labels)?;
            let embeddings = emoprobe::geometry::emotion_embeddings(&net, dev.to_f64().view(), &dev_y, &labels)?;
            let (table, model) = pad_analysis(&embeddings, &cfg.known_pad(&labels)?, &cfg.pad_options())?;
            if let Some(m) = model {
                let mse = m.mse();
                log::info!(
                    "training MSE: pleasure {:.4}, arousal {:.4}, dominance {:.4}",
                    mse.pleasure,
                    mse.arousal,
                    mse.dominance
                );
            }
            write_text(&out, pad_artifacts(&table))?;
        }
        Command::FullReport { opts, out } => {
            let cfg = opts.resolve()?;
            let manifest = full_report(&cfg, &out)?;
            log::info!("wrote {} files to {}", manifest.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = format!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                msg.push_str(&format!(": {s}"));
                source = s.source();
            }
            eprintln!("{msg}");
            ExitCode::FAILURE
        }
    }
}
