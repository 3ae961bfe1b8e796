//! Corpus ingestion: tokenizing raw chord text, building a truncated
//! vocabulary, encoding, and seeded train/test splitting and subsampling.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use sha2::{Digest, Sha256};

use crate::dist::rng_from_seed;
use crate::error::{invalid, Error, Result};

/// Name of the reserved out-of-vocabulary symbol.
pub const OTHER: &str = "Other";

const VOCAB_HEADER: &str = "#chordgram-vocabulary v1";

/// A raw sequence of symbol strings, one line of the corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChordSequence {
    pub tokens: Vec<String>,
}

/// Integer-encoded sequence.
pub type EncodedSequence = Vec<usize>;

/// Parses one sequence per line with whitespace-separated tokens. Blank lines are skipped.
pub fn parse_corpus(text: &str) -> Vec<ChordSequence> {
    text.lines()
        .map(|line| line.split_whitespace().map(str::to_owned).collect::<Vec<_>>())
        .filter(|tokens| !tokens.is_empty())
        .map(|tokens| ChordSequence { tokens })
        .collect()
}

/// Bijection between the retained symbols (plus `Other`) and dense ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    symbols: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Keeps the `k` most frequent symbols, ties broken lexicographically,
    /// and appends `Other` carrying the count of every replaced token.
    ///
    /// A literal `Other` token in the corpus is folded into the reserved symbol.
    pub fn build(sequences: &[ChordSequence], k: usize) -> Result<Self> {
        if k == 0 {
            return Err(invalid("vocabulary size K must be at least 1"));
        }
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for seq in sequences {
            for tok in &seq.tokens {
                *counts.entry(tok.as_str()).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, u64)> = counts
            .iter()
            .filter(|(s, _)| **s != OTHER)
            .map(|(s, c)| (*s, *c))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let total: u64 = counts.values().sum();
        ranked.truncate(k);

        let mut symbols: Vec<String> = ranked.iter().map(|(s, _)| s.to_string()).collect();
        let mut kept: Vec<u64> = ranked.iter().map(|(_, c)| *c).collect();
        let other_count = total - kept.iter().sum::<u64>();
        symbols.push(OTHER.to_string());
        kept.push(other_count);
        Ok(Self::from_parts(symbols, kept))
    }

    fn from_parts(symbols: Vec<String>, counts: Vec<u64>) -> Self {
        let index = symbols
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        Vocabulary {
            symbols,
            counts,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn other_id(&self) -> usize {
        self.symbols.len() - 1
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn symbol(&self, id: usize) -> &str {
        &self.symbols[id]
    }

    /// Id of `symbol`, or the `Other` id when it is out of vocabulary.
    pub fn id(&self, symbol: &str) -> usize {
        self.index.get(symbol).copied().unwrap_or(self.other_id())
    }

    pub fn decode(&self, seq: &[usize]) -> Vec<&str> {
        seq.iter().map(|&i| self.symbol(i)).collect()
    }

    /// Short content hash tying model files to the vocabulary they were trained on.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        for s in &self.symbols {
            hasher.update(s.as_bytes());
            hasher.update(b"\n");
        }
        let digest = hasher.finalize();
        let mut out = String::with_capacity(16);
        for b in digest.iter().take(8) {
            write!(out, "{b:02x}").unwrap();
        }
        out
    }

    /// Serializes as `id<TAB>symbol<TAB>count` lines under a version header.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(VOCAB_HEADER);
        out.push('\n');
        for (i, (s, c)) in self.symbols.iter().zip(&self.counts).enumerate() {
            writeln!(out, "{i}\t{s}\t{c}").unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == VOCAB_HEADER => {}
            _ => {
                return Err(Error::Format {
                    line: 1,
                    message: format!("expected header `{VOCAB_HEADER}`"),
                })
            }
        }
        let mut symbols = Vec::new();
        let mut counts = Vec::new();
        for (ln, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: String| Error::Format {
                line: ln + 1,
                message,
            };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(bad("expected id<TAB>symbol<TAB>count".into()));
            }
            let id: usize = fields[0]
                .parse()
                .map_err(|_| bad(format!("bad id `{}`", fields[0])))?;
            if id != symbols.len() {
                return Err(bad(format!("ids must be dense, got {id}")));
            }
            let count: u64 = fields[2]
                .parse()
                .map_err(|_| bad(format!("bad count `{}`", fields[2])))?;
            symbols.push(fields[1].to_string());
            counts.push(count);
        }
        if symbols.last().map(String::as_str) != Some(OTHER) {
            return Err(Error::Format {
                line: symbols.len() + 1,
                message: format!("`{OTHER}` must be the last entry"),
            });
        }
        if symbols[..symbols.len() - 1].iter().any(|s| s == OTHER) {
            return Err(Error::Format {
                line: 0,
                message: format!("`{OTHER}` appears more than once"),
            });
        }
        Ok(Self::from_parts(symbols, counts))
    }
}

/// Encoded sequences paired with the vocabulary used to encode them.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDataset {
    pub sequences: Vec<EncodedSequence>,
    pub vocab: Vocabulary,
}

impl EncodedDataset {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    /// Total number of symbols across all sequences.
    pub fn n_symbols(&self) -> usize {
        self.sequences.iter().map(Vec::len).sum()
    }

    fn with_indices(&self, idx: &[usize]) -> EncodedDataset {
        EncodedDataset {
            sequences: idx.iter().map(|&i| self.sequences[i].clone()).collect(),
            vocab: self.vocab.clone(),
        }
    }

    /// One line per sequence, space-separated ids.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for seq in &self.sequences {
            let line: Vec<String> = seq.iter().map(usize::to_string).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str, vocab: Vocabulary) -> Result<Self> {
        let mut sequences = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let seq = line
                .split_whitespace()
                .map(|t| match t.parse::<usize>() {
                    Ok(id) if id < vocab.len() => Ok(id),
                    _ => Err(Error::Format {
                        line: ln + 1,
                        message: format!("bad symbol id `{t}`"),
                    }),
                })
                .collect::<Result<Vec<_>>>()?;
            sequences.push(seq);
        }
        Ok(EncodedDataset { sequences, vocab })
    }
}

/// Maps tokens to ids; out-of-vocabulary tokens become `Other`.
pub fn encode(sequences: &[ChordSequence], vocab: &Vocabulary) -> EncodedDataset {
    EncodedDataset {
        sequences: sequences
            .iter()
            .map(|s| s.tokens.iter().map(|t| vocab.id(t)).collect())
            .collect(),
        vocab: vocab.clone(),
    }
}

fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_from_seed(seed));
    idx
}

/// Seeded random split into `(train, test)` with exactly `test_count` test
/// sequences. Both halves keep the original relative order.
pub fn split(
    dataset: &EncodedDataset,
    test_count: usize,
    seed: u64,
) -> Result<(EncodedDataset, EncodedDataset)> {
    if test_count > dataset.len() {
        return Err(invalid(format!(
            "test_count {test_count} exceeds the {} available sequences",
            dataset.len()
        )));
    }
    let idx = shuffled_indices(dataset.len(), seed);
    let mut test: Vec<usize> = idx[..test_count].to_vec();
    let mut train: Vec<usize> = idx[test_count..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((dataset.with_indices(&train), dataset.with_indices(&test)))
}

/// Uniform subsample without replacement. For a fixed seed the subsets are
/// nested: the first `n` entries of one seeded permutation are taken.
pub fn subsample(train: &EncodedDataset, n: usize, seed: u64) -> Result<EncodedDataset> {
    if n == 0 || n > train.len() {
        return Err(invalid(format!(
            "subsample size {n} must be in 1..={}",
            train.len()
        )));
    }
    let mut idx = shuffled_indices(train.len(), seed);
    idx.truncate(n);
    idx.sort_unstable();
    Ok(train.with_indices(&idx))
}
