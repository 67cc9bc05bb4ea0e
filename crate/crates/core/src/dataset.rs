//! Labeled-document corpora: loading, validation, splits and length statistics.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Trn,
    Dev,
    Tst,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Trn, Split::Dev, Split::Tst];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Trn => "trn",
            Split::Dev => "dev",
            Split::Tst => "tst",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "trn" | "train" | "training" => Ok(Split::Trn),
            "dev" | "valid" | "validation" => Ok(Split::Dev),
            "tst" | "test" => Ok(Split::Tst),
            other => Err(format!("unknown split tag {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CorpusFormat {
    Csv,
    Tsv,
    Jsonl,
}

impl CorpusFormat {
    /// Guesses the format from the file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(CorpusFormat::Csv),
            "tsv" | "tab" => Some(CorpusFormat::Tsv),
            "jsonl" | "ndjson" => Some(CorpusFormat::Jsonl),
            _ => None,
        }
    }
}

impl FromStr for CorpusFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(CorpusFormat::Csv),
            "tsv" => Ok(CorpusFormat::Tsv),
            "jsonl" => Ok(CorpusFormat::Jsonl),
            other => Err(format!("unknown corpus format {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentRecord {
    pub id: String,
    pub text: String,
    pub label: String,
}

/// Ordered emotion vocabulary with a reverse index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelSpace {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelSpace {
    /// Keeps the given order. Names must be unique and at least two.
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.len() < 2 {
            return Err(Error::LabelSpace(format!(
                "need at least 2 labels, got {}",
                names.len()
            )));
        }
        let mut index = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if index.insert(name.clone(), i).is_some() {
                return Err(Error::LabelSpace(format!("duplicate label {name:?}")));
            }
        }
        Ok(Self { names, index })
    }

    /// Sorted, de-duplicated vocabulary built from observed labels.
    pub fn from_observed<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut names: Vec<String> = labels
            .into_iter()
            .map(|l| normalize_label(l.as_ref()))
            .collect::<HashSet<_>>()
            .into_iter()
            .collect();
        names.sort_unstable();
        Self::new(names)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.index_of(name)
            .ok_or_else(|| Error::UnknownLabel(name.to_owned()))
    }
}

/// Trimmed, ASCII-lowercased label.
pub fn normalize_label(raw: &str) -> String {
    raw.trim().to_ascii_lowercase()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitCorpus {
    pub trn: Vec<DocumentRecord>,
    pub dev: Vec<DocumentRecord>,
    pub tst: Vec<DocumentRecord>,
    pub labels: LabelSpace,
}

impl SplitCorpus {
    pub fn split(&self, split: Split) -> &[DocumentRecord] {
        match split {
            Split::Trn => &self.trn,
            Split::Dev => &self.dev,
            Split::Tst => &self.tst,
        }
    }

    pub fn len(&self) -> usize {
        self.trn.len() + self.dev.len() + self.tst.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All documents in trn, dev, tst order.
    pub fn iter(&self) -> impl Iterator<Item = (Split, &DocumentRecord)> {
        Split::ALL
            .into_iter()
            .flat_map(move |s| self.split(s).iter().map(move |d| (s, d)))
    }

    /// Label indices of `docs` in this corpus' label space.
    pub fn label_indices(&self, docs: &[DocumentRecord]) -> Result<Vec<usize>> {
        docs.iter().map(|d| self.labels.require(&d.label)).collect()
    }

    /// Assembles and validates a corpus from tagged records.
    pub fn from_records<I>(records: I) -> Result<Self>
    where
        I: IntoIterator<Item = RawRecord>,
    {
        let mut seen = HashSet::new();
        let mut bad_split = Vec::new();
        let (mut trn, mut dev, mut tst) = (Vec::new(), Vec::new(), Vec::new());
        let mut total = 0usize;
        for raw in records {
            total += 1;
            if !seen.insert(raw.id.clone()) {
                return Err(Error::DuplicateDocument(raw.id));
            }
            if raw.text.trim().is_empty() {
                return Err(Error::EmptyText(raw.id));
            }
            let doc = DocumentRecord {
                label: normalize_label(&raw.label),
                text: raw.text,
                id: raw.id,
            };
            match raw.split.parse::<Split>() {
                Ok(Split::Trn) => trn.push(doc),
                Ok(Split::Dev) => dev.push(doc),
                Ok(Split::Tst) => tst.push(doc),
                Err(_) => bad_split.push(doc.id),
            }
        }
        if total == 0 {
            return Err(Error::EmptyCorpus);
        }
        if !bad_split.is_empty() {
            return Err(Error::UnknownSplit(bad_split));
        }
        let labels =
            LabelSpace::from_observed(trn.iter().chain(&dev).chain(&tst).map(|d| d.label.as_str()))?;
        Ok(Self {
            trn,
            dev,
            tst,
            labels,
        })
    }
}

/// One line of a corpus file before validation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RawRecord {
    pub id: String,
    pub split: String,
    pub label: String,
    pub text: String,
}

pub fn load_corpus(path: impl AsRef<Path>, format: CorpusFormat) -> Result<SplitCorpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let records = match format {
        CorpusFormat::Csv => read_delimited(file, b',')?,
        CorpusFormat::Tsv => read_delimited(file, b'\t')?,
        CorpusFormat::Jsonl => {
            let mut out = Vec::new();
            for (lineno, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: RawRecord = serde_json::from_str(&line)
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
                out.push(rec);
            }
            out
        }
    };
    SplitCorpus::from_records(records)
}

fn read_delimited(file: File, delimiter: u8) -> Result<Vec<RawRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .from_reader(BufReader::new(file));
    reader
        .deserialize()
        .map(|r| r.map_err(|e: csv::Error| Error::Parse(e.to_string())))
        .collect()
}

/// Writes every document with its split tag, trn first.
pub fn write_corpus(corpus: &SplitCorpus, path: impl AsRef<Path>, format: CorpusFormat) -> Result<()> {
    let path = path.as_ref();
    let rows = corpus.iter().map(|(split, d)| RawRecord {
        id: d.id.clone(),
        split: split.as_str().to_owned(),
        label: d.label.clone(),
        text: d.text.clone(),
    });
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    match format {
        CorpusFormat::Csv | CorpusFormat::Tsv => {
            let delimiter = if format == CorpusFormat::Csv { b',' } else { b'\t' };
            let mut w = csv::WriterBuilder::new()
                .delimiter(delimiter)
                .from_writer(BufWriter::new(file));
            for row in rows {
                w.serialize(row).map_err(|e| Error::Parse(e.to_string()))?;
            }
            w.flush().map_err(|e| Error::io(path, e))?;
        }
        CorpusFormat::Jsonl => {
            let mut w = BufWriter::new(file);
            for row in rows {
                let line = serde_json::to_string(&row).map_err(|e| Error::Parse(e.to_string()))?;
                writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
            }
            w.flush().map_err(|e| Error::io(path, e))?;
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorpusStats {
    pub count: usize,
    pub mean_tokens: f64,
    /// Population standard deviation.
    pub std_tokens: f64,
}

/// Whitespace token counts: count, mean and population std.
pub fn corpus_stats(split: &[DocumentRecord]) -> Result<CorpusStats> {
    if split.is_empty() {
        return Err(Error::EmptySplit);
    }
    let lengths: Vec<f64> = split
        .iter()
        .map(|d| d.text.split_whitespace().count() as f64)
        .collect();
    let n = lengths.len() as f64;
    let mean = lengths.iter().sum::<f64>() / n;
    let var = lengths.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n;
    Ok(CorpusStats {
        count: split.len(),
        mean_tokens: mean,
        std_tokens: var.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, text: &str) -> DocumentRecord {
        DocumentRecord {
            id: id.into(),
            text: text.into(),
            label: "a".into(),
        }
    }

    fn write_tmp(ext: &str, body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(ext).tempfile().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    #[test]
    fn three_line_tsv_gives_two_labels() {
        let f = write_tmp(
            ".tsv",
            "id\tsplit\tlabel\ttext\n1\ttrn\ta\tfirst doc\n2\tdev\tB\tsecond doc\n3\ttst\ta\tthird\n",
        );
        let c = load_corpus(f.path(), CorpusFormat::Tsv).unwrap();
        assert_eq!(c.labels.len(), 2);
        assert_eq!(c.labels.names(), ["a", "b"]);
        assert_eq!(c.trn, vec![DocumentRecord { id: "1".into(), text: "first doc".into(), label: "a".into() }]);
        assert_eq!(c.dev[0].label, "b");
        assert_eq!(c.tst[0].text, "third");
    }

    #[test]
    fn empty_corpus_is_rejected() {
        let f = write_tmp(".tsv", "id\tsplit\tlabel\ttext\n");
        assert!(matches!(load_corpus(f.path(), CorpusFormat::Tsv), Err(Error::EmptyCorpus)));
        let f = write_tmp(".jsonl", "");
        assert!(matches!(load_corpus(f.path(), CorpusFormat::Jsonl), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn bad_records_are_rejected() {
        let f = write_tmp(
            ".csv",
            "id,split,label,text\n1,trn,a,x\n2,holdout,b,y\n3,later,b,z\n",
        );
        match load_corpus(f.path(), CorpusFormat::Csv) {
            Err(Error::UnknownSplit(ids)) => assert_eq!(ids, ["2", "3"]),
            other => panic!("{other:?}"),
        }
        let f = write_tmp(".csv", "id,split,label,text\n1,trn,a,x\n1,dev,b,y\n");
        assert!(matches!(load_corpus(f.path(), CorpusFormat::Csv), Err(Error::DuplicateDocument(id)) if id == "1"));
        let f = write_tmp(".csv", "id,split,label,text\n1,trn,a,x\n2,dev,b,\"  \"\n");
        assert!(matches!(load_corpus(f.path(), CorpusFormat::Csv), Err(Error::EmptyText(id)) if id == "2"));
        let f = write_tmp(".csv", "id,split,label,text\n1,trn,a,x\n2,dev,a,y\n");
        assert!(matches!(load_corpus(f.path(), CorpusFormat::Csv), Err(Error::LabelSpace(_))));
    }

    #[test]
    fn jsonl_and_quoted_text_round_trip() {
        let f = write_tmp(
            ".jsonl",
            "{\"id\":\"x1\",\"split\":\"train\",\"label\":\"Proud\",\"text\":\"I finally got that promotion at work!\"}\n\
             {\"id\":\"x2\",\"split\":\"test\",\"label\":\"sad\",\"text\":\"she said \\\"bye\\\"\\tand left\"}\n",
        );
        let c = load_corpus(f.path(), CorpusFormat::Jsonl).unwrap();
        assert_eq!(c.trn[0].label, "proud");
        for format in [CorpusFormat::Csv, CorpusFormat::Tsv, CorpusFormat::Jsonl] {
            let out = tempfile::NamedTempFile::new().unwrap();
            write_corpus(&c, out.path(), format).unwrap();
            assert_eq!(load_corpus(out.path(), format).unwrap(), c, "{format:?}");
        }
    }

    #[test]
    fn stats_examples() {
        let s = corpus_stats(&[doc("1", "a b c")]).unwrap();
        assert_eq!((s.count, s.mean_tokens, s.std_tokens), (1, 3.0, 0.0));
        let s = corpus_stats(&[doc("1", "a b"), doc("2", " a  b\tc\nd ")]).unwrap();
        assert_eq!((s.count, s.mean_tokens, s.std_tokens), (2, 3.0, 1.0));
        assert!(matches!(corpus_stats(&[]), Err(Error::EmptySplit)));
    }

    #[test]
    fn label_space_rules() {
        assert!(LabelSpace::new(vec!["a".into()]).is_err());
        assert!(LabelSpace::new(vec!["a".into(), "a".into()]).is_err());
        let s = LabelSpace::new(vec!["z".into(), "a".into()]).unwrap();
        assert_eq!(s.index_of("a"), Some(1));
        let s = LabelSpace::from_observed([" Z ", "a", "z"]).unwrap();
        assert_eq!(s.names(), ["a", "z"]);
    }
}
