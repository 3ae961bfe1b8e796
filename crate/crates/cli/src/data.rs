//! Corpus preparation and loading of the prepared artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chordgram::corpus::{encode, parse_corpus, split, subsample, EncodedDataset, Vocabulary};
use serde::Serialize;

use crate::config::ExperimentConfig;

pub const VOCAB_FILE: &str = "vocab.txt";
pub const TRAIN_FILE: &str = "train.txt";
pub const TEST_FILE: &str = "test.txt";

pub fn subsample_file(n: usize) -> String {
    format!("train_n{n}.txt")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrepareSummary {
    pub sequences: usize,
    pub dropped_short: usize,
    pub vocab_size: usize,
    pub vocab_hash: String,
    pub train: usize,
    pub test: usize,
    pub subsamples: Vec<usize>,
    pub files: Vec<PathBuf>,
}

/// Writes the vocabulary, the encoded split and every requested subsample.
/// Rerunning with the same config rewrites identical bytes.
pub fn prepare(config: &ExperimentConfig) -> Result<PrepareSummary> {
    let text = fs::read_to_string(&config.corpus)
        .with_context(|| format!("reading corpus {}", config.corpus.display()))?;
    let all = parse_corpus(&text);
    let total = all.len();
    let corpus: Vec<_> = all.into_iter().filter(|s| s.tokens.len() >= config.min_length).collect();
    if corpus.is_empty() {
        bail!("corpus {} has no sequences of length >= {}", config.corpus.display(), config.min_length);
    }
    if config.test_count >= corpus.len() {
        bail!(
            "test_count {} leaves no training data ({} sequences available)",
            config.test_count,
            corpus.len()
        );
    }
    let vocab = Vocabulary::build(&corpus, config.vocab_size)?;
    let dataset = encode(&corpus, &vocab);
    let (train, test) = split(&dataset, config.test_count, config.data_seed)?;

    fs::create_dir_all(&config.out_dir)
        .with_context(|| format!("creating {}", config.out_dir.display()))?;
    let mut files = Vec::new();
    let mut write = |name: &str, contents: String| -> Result<()> {
        let path = config.out_dir.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        files.push(path);
        Ok(())
    };
    write(VOCAB_FILE, vocab.to_text())?;
    write(TRAIN_FILE, train.to_text())?;
    write(TEST_FILE, test.to_text())?;
    let mut subsamples = Vec::new();
    for &n in &config.train_sizes {
        if n > train.len() {
            bail!("train size {n} exceeds the {} training sequences", train.len());
        }
        let sub = subsample(&train, n, config.data_seed)?;
        write(&subsample_file(n), sub.to_text())?;
        subsamples.push(n);
    }
    Ok(PrepareSummary {
        sequences: corpus.len(),
        dropped_short: total - corpus.len(),
        vocab_size: vocab.len(),
        vocab_hash: vocab.hash(),
        train: train.len(),
        test: test.len(),
        subsamples,
        files,
    })
}

pub fn load_vocab(path: &Path) -> Result<Vocabulary> {
    let text = fs::read_to_string(path).with_context(|| format!("reading vocabulary {}", path.display()))?;
    Vocabulary::from_text(&text).with_context(|| format!("parsing vocabulary {}", path.display()))
}

fn load_dataset(path: &Path, vocab: &Vocabulary) -> Result<EncodedDataset> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}; run `prepare` first", path.display()))?;
    EncodedDataset::from_text(&text, vocab.clone()).with_context(|| format!("parsing {}", path.display()))
}

/// The prepared split as read back from `out_dir`.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub vocab: Vocabulary,
    pub train: EncodedDataset,
    pub test: EncodedDataset,
    dir: PathBuf,
}

impl Prepared {
    pub fn load(config: &ExperimentConfig) -> Result<Self> {
        let dir = config.out_dir.clone();
        let vocab = load_vocab(&dir.join(VOCAB_FILE))?;
        let train = load_dataset(&dir.join(TRAIN_FILE), &vocab)?;
        let test = load_dataset(&dir.join(TEST_FILE), &vocab)?;
        Ok(Prepared { vocab, train, test, dir })
    }

    /// The training set of size `n`, or the full one for `None`.
    pub fn training(&self, n: Option<usize>) -> Result<EncodedDataset> {
        match n {
            None => Ok(self.train.clone()),
            Some(n) if n == self.train.len() => Ok(self.train.clone()),
            Some(n) => load_dataset(&self.dir.join(subsample_file(n)), &self.vocab),
        }
    }
}
