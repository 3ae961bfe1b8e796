//! Sampling sequences from trained models.

use anyhow::{bail, Result};
use chordgram::dist::rng_from_seed;
use chordgram::pcfg::{sample_tree_with, DEFAULT_EXPANSION_CAP};
use chordgram::{AnyModel, Vocabulary};

/// One generated sequence; `tree` is filled for grammars.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub symbols: Vec<String>,
    pub tree: Option<String>,
}

/// Draws `count` sequences from one seeded stream. Markov models and HMMs need
/// a `length`; grammars decide their own length and reject one.
pub fn generate(model: &AnyModel, vocab: &Vocabulary, count: usize, seed: u64, length: Option<usize>) -> Result<Vec<Generated>> {
    if crate::analyze::model_vocab_size(model) != vocab.len() {
        bail!("model and vocabulary sizes differ");
    }
    let mut rng = rng_from_seed(seed);
    let decode = |seq: &[usize]| vocab.decode(seq).into_iter().map(str::to_owned).collect();
    let mut out = Vec::with_capacity(count);
    match model {
        AnyModel::Markov(_) | AnyModel::Hmm(_) => {
            let Some(len) = length else {
                bail!("--length is required for {} models", model.kind());
            };
            for _ in 0..count {
                let seq = match model {
                    AnyModel::Markov(m) => m.sample_with(len, &mut rng),
                    AnyModel::Hmm(h) => h.sample_with(len, &mut rng).1,
                    AnyModel::Pcfg(_) => unreachable!(),
                };
                out.push(Generated { symbols: decode(&seq), tree: None });
            }
        }
        AnyModel::Pcfg(g) => {
            if length.is_some() {
                bail!("grammars choose their own length; drop --length");
            }
            for _ in 0..count {
                let tree = sample_tree_with(g, &mut rng, DEFAULT_EXPANSION_CAP)?;
                let seq = tree.yield_symbols();
                let bracketed = tree.bracketed(|x| vocab.symbol(x).to_string());
                out.push(Generated { symbols: decode(&seq), tree: Some(bracketed) });
            }
        }
    }
    Ok(out)
}
