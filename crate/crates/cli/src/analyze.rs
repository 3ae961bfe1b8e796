//! Structure reports for trained HMMs and grammars.

use anyhow::{bail, Result};
use chordgram::hmm::{info_measures, stationary_distribution, HmmParams, InfoMeasures};
use chordgram::pcfg::PcfgParams;
use chordgram::{AnyModel, Vocabulary};
use serde::Serialize;

pub const DEFAULT_TOP: usize = 12;
pub const DEFAULT_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Weighted {
    pub symbol: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateReport {
    pub state: usize,
    pub stationary: f64,
    pub top_symbols: Vec<Weighted>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HmmReport {
    pub n_states: usize,
    pub stationary_perplexity: f64,
    pub output_perplexity: f64,
    pub association_variety: f64,
    pub transition_perplexity: f64,
    pub states: Vec<StateReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rule {
    pub lhs: String,
    pub rhs: [String; 2],
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonterminalReport {
    pub nonterminal: String,
    /// Total probability of emitting a terminal.
    pub emission_mass: f64,
    pub top_symbols: Vec<Weighted>,
    pub rules: Vec<Rule>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PcfgReport {
    pub n_nonterminals: usize,
    pub threshold: f64,
    pub start_rules: Vec<Rule>,
    pub nonterminals: Vec<NonterminalReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Report {
    Hmm(HmmReport),
    Pcfg(PcfgReport),
}

/// The `top` most probable entries, ties by lowest id.
fn top_symbols(row: &[f64], vocab: &Vocabulary, top: usize) -> Vec<Weighted> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    idx.into_iter()
        .take(top)
        .map(|x| Weighted { symbol: vocab.symbol(x).to_string(), probability: row[x] })
        .collect()
}

fn nt(z: usize) -> String {
    format!("z{}", z + 1)
}

fn rules_above(lhs: &str, row: &[f64], n: usize, threshold: f64) -> Vec<Rule> {
    let mut idx: Vec<usize> = (0..row.len()).filter(|&i| row[i] > threshold).collect();
    idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    idx.into_iter()
        .map(|i| Rule { lhs: lhs.to_string(), rhs: [nt(i / n), nt(i % n)], probability: row[i] })
        .collect()
}

pub fn analyze_hmm(h: &HmmParams, vocab: &Vocabulary, top: usize) -> Result<HmmReport> {
    let stat = stationary_distribution(h)?;
    let InfoMeasures { stationary_perplexity, output_perplexity, association_variety, transition_perplexity } = info_measures(h)?;
    let states = (0..h.n_states())
        .map(|z| StateReport { state: z, stationary: stat[z], top_symbols: top_symbols(h.output_row(z), vocab, top) })
        .collect();
    Ok(HmmReport {
        n_states: h.n_states(),
        stationary_perplexity,
        output_perplexity,
        association_variety,
        transition_perplexity,
        states,
    })
}

pub fn analyze_pcfg(g: &PcfgParams, vocab: &Vocabulary, top: usize, threshold: f64) -> PcfgReport {
    let n = g.n_nonterminals();
    let nonterminals = (0..n)
        .map(|z| NonterminalReport {
            nonterminal: nt(z),
            emission_mass: g.emit_row(z).iter().sum(),
            top_symbols: top_symbols(g.emit_row(z), vocab, top),
            rules: rules_above(&nt(z), g.binary_row(z), n, threshold),
        })
        .collect();
    PcfgReport {
        n_nonterminals: n,
        threshold,
        start_rules: rules_above("S", g.start_binary(), n, threshold),
        nonterminals,
    }
}

pub fn analyze(model: &AnyModel, vocab: &Vocabulary, top: usize, threshold: f64) -> Result<Report> {
    if model_vocab_size(model) != vocab.len() {
        bail!("model has {} symbols but the vocabulary has {}", model_vocab_size(model), vocab.len());
    }
    match model {
        AnyModel::Markov(_) => bail!("Markov models have no latent structure to analyze"),
        AnyModel::Hmm(h) => Ok(Report::Hmm(analyze_hmm(h, vocab, top)?)),
        AnyModel::Pcfg(g) => Ok(Report::Pcfg(analyze_pcfg(g, vocab, top, threshold))),
    }
}

pub(crate) fn model_vocab_size(model: &AnyModel) -> usize {
    model.as_sequence_model().vocab_size()
}
