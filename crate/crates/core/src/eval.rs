//! Model-agnostic evaluation: perplexity, symbol-wise error rate and RMRR.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{argmax, rank_of};
use crate::error::{invalid, Error, Result};
use crate::hmm::HmmParams;
use crate::markov::MarkovModel;
use crate::pcfg::PcfgParams;

/// What the evaluation needs from a model.
pub trait SequenceModel: Sync {
    fn vocab_size(&self) -> usize;

    /// Natural-log evidence of a whole sequence. Grammars report the evidence
    /// normalized over sequences of the same length.
    fn log_evidence(&self, seq: &[usize]) -> f64;

    /// `P(x_pos = y | x_¬pos)` for every symbol `y`.
    fn predict_distribution(&self, seq: &[usize], pos: usize) -> Result<Vec<f64>>;
}

impl SequenceModel for MarkovModel {
    fn vocab_size(&self) -> usize {
        MarkovModel::vocab_size(self)
    }

    fn log_evidence(&self, seq: &[usize]) -> f64 {
        MarkovModel::log_evidence(self, seq)
    }

    fn predict_distribution(&self, seq: &[usize], pos: usize) -> Result<Vec<f64>> {
        let out = MarkovModel::predict_distribution(self, seq, pos);
        if out.iter().all(|&p| p == 0.0) || out.iter().any(|p| p.is_nan()) {
            return Err(Error::NoCompletion { position: pos });
        }
        Ok(out)
    }
}

impl SequenceModel for HmmParams {
    fn vocab_size(&self) -> usize {
        HmmParams::vocab_size(self)
    }

    fn log_evidence(&self, seq: &[usize]) -> f64 {
        HmmParams::log_evidence(self, seq)
    }

    fn predict_distribution(&self, seq: &[usize], pos: usize) -> Result<Vec<f64>> {
        HmmParams::predict_distribution(self, seq, pos)
    }
}

impl SequenceModel for PcfgParams {
    fn vocab_size(&self) -> usize {
        PcfgParams::vocab_size(self)
    }

    fn log_evidence(&self, seq: &[usize]) -> f64 {
        self.normalized_log_evidence(seq).unwrap_or(f64::NEG_INFINITY)
    }

    fn predict_distribution(&self, seq: &[usize], pos: usize) -> Result<Vec<f64>> {
        PcfgParams::predict_distribution(self, seq, pos)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub perplexity: f64,
    pub error_rate: f64,
    pub rmrr: f64,
    /// Total number of symbols `|X|`.
    pub n_symbols: usize,
    /// Positions where the model could not produce a prediction; they count as
    /// errors with the worst possible rank.
    pub unpredictable: usize,
}

fn check_test<M: SequenceModel + ?Sized>(model: &M, test: &[Vec<usize>]) -> Result<usize> {
    if test.is_empty() || test.iter().all(|s| s.is_empty()) {
        return Err(Error::EmptyData);
    }
    let v = model.vocab_size();
    if test.iter().flatten().any(|&x| x >= v) {
        return Err(invalid("test symbol id exceeds the vocabulary"));
    }
    Ok(test.iter().map(Vec::len).sum())
}

fn perplexity_from(total_log_evidence: f64, n_symbols: usize) -> f64 {
    if total_log_evidence == f64::NEG_INFINITY {
        return f64::INFINITY;
    }
    (-total_log_evidence / n_symbols as f64).exp()
}

/// `exp(-Σ ln P(x) / |X|)`; any zero-probability sequence gives `+∞`.
pub fn perplexity<M: SequenceModel + ?Sized>(model: &M, test: &[Vec<usize>]) -> Result<f64> {
    let n = check_test(model, test)?;
    let parts: Vec<f64> = test.par_iter().map(|s| model.log_evidence(s)).collect();
    Ok(perplexity_from(parts.iter().sum(), n))
}

#[derive(Debug, Clone, Copy, Default)]
struct PredictionTally {
    errors: usize,
    reciprocal_rank: f64,
    unpredictable: usize,
}

fn tally<M: SequenceModel + ?Sized>(model: &M, seq: &[usize]) -> Result<PredictionTally> {
    let mut t = PredictionTally::default();
    for (pos, &x) in seq.iter().enumerate() {
        match model.predict_distribution(seq, pos) {
            Ok(p) => {
                if argmax(&p) != x {
                    t.errors += 1;
                }
                t.reciprocal_rank += 1.0 / rank_of(&p, x) as f64;
            }
            Err(Error::NoCompletion { .. }) => {
                t.errors += 1;
                t.unpredictable += 1;
                t.reciprocal_rank += 1.0 / model.vocab_size() as f64;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(t)
}

fn prediction_tally<M: SequenceModel + ?Sized>(model: &M, test: &[Vec<usize>]) -> Result<PredictionTally> {
    let parts: Vec<Result<PredictionTally>> = test.par_iter().map(|s| tally(model, s)).collect();
    let mut total = PredictionTally::default();
    for p in parts {
        let p = p?;
        total.errors += p.errors;
        total.reciprocal_rank += p.reciprocal_rank;
        total.unpredictable += p.unpredictable;
    }
    Ok(total)
}

/// Fraction of positions whose most probable completion (lowest id on ties)
/// differs from the observed symbol.
pub fn error_rate<M: SequenceModel + ?Sized>(model: &M, test: &[Vec<usize>]) -> Result<f64> {
    let n = check_test(model, test)?;
    Ok(prediction_tally(model, test)?.errors as f64 / n as f64)
}

/// Reciprocal of the mean reciprocal rank of the observed symbols.
pub fn rmrr<M: SequenceModel + ?Sized>(model: &M, test: &[Vec<usize>]) -> Result<f64> {
    let n = check_test(model, test)?;
    Ok(n as f64 / prediction_tally(model, test)?.reciprocal_rank)
}

/// All three metrics from one pass over the test data.
pub fn evaluate<M: SequenceModel + ?Sized>(model: &M, test: &[Vec<usize>]) -> Result<EvalReport> {
    let n = check_test(model, test)?;
    let log_ev: Vec<f64> = test.par_iter().map(|s| model.log_evidence(s)).collect();
    let t = prediction_tally(model, test)?;
    Ok(EvalReport {
        perplexity: perplexity_from(log_ev.iter().sum(), n),
        error_rate: t.errors as f64 / n as f64,
        rmrr: n as f64 / t.reciprocal_rank,
        n_symbols: n,
        unpredictable: t.unpredictable,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Markov,
    Hmm,
    Pcfg,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Markov => "markov",
            ModelKind::Hmm => "hmm",
            ModelKind::Pcfg => "pcfg",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "markov" => Ok(ModelKind::Markov),
            "hmm" => Ok(ModelKind::Hmm),
            "pcfg" => Ok(ModelKind::Pcfg),
            other => Err(invalid(format!("unknown model kind `{other}`"))),
        }
    }
}

/// Free parameters after normalization. `size` is the order `k`, `N_Γ` or `N_Δ`.
pub fn param_count(kind: ModelKind, size: usize, vocab_size: usize) -> u64 {
    let v = vocab_size as u64;
    let s = size as u64;
    match kind {
        ModelKind::Markov => {
            let mut contexts = 0u64;
            let mut power = 1u64;
            for _ in 0..=size {
                contexts = contexts.saturating_add(power);
                power = power.saturating_mul(v);
            }
            contexts.saturating_mul(v.saturating_sub(1))
        }
        ModelKind::Hmm => (1 + s) * s.saturating_sub(1) + s * v.saturating_sub(1),
        ModelKind::Pcfg => (1 + s) * (s * s - 1) + s * v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_unigram(v: usize) -> HmmParams {
        HmmParams::new(1, v, vec![1.0], vec![1.0], vec![1.0 / v as f64; v]).unwrap()
    }

    #[test]
    fn table_parameter_counts() {
        assert_eq!(param_count(ModelKind::Markov, 1, 11), 120);
        assert_eq!(param_count(ModelKind::Hmm, 4, 21), 95);
        assert_eq!(param_count(ModelKind::Pcfg, 4, 21), 159);
        assert_eq!(param_count(ModelKind::Markov, 0, 5), 4);
    }

    #[test]
    fn kind_round_trip() {
        for k in [ModelKind::Markov, ModelKind::Hmm, ModelKind::Pcfg] {
            assert_eq!(k.to_string().parse::<ModelKind>().unwrap(), k);
        }
        assert!("ngram".parse::<ModelKind>().is_err());
    }

    #[test]
    fn uniform_model_perplexity_is_vocab_size() {
        let m = uniform_unigram(8);
        let test = vec![vec![0, 3, 7], vec![1, 1]];
        let p = perplexity(&m, &test).unwrap();
        assert!((p - 8.0).abs() < 1e-12, "{p}");
        // ties everywhere: argmax is symbol 0 and the truth's rank is its id + 1
        let r = evaluate(&m, &test).unwrap();
        assert!((r.error_rate - 4.0 / 5.0).abs() < 1e-12);
        let mrr = (1.0 + 1.0 / 4.0 + 1.0 / 8.0 + 0.5 + 0.5) / 5.0;
        assert!((r.rmrr - 1.0 / mrr).abs() < 1e-12);
    }

    #[test]
    fn deterministic_model_is_perfect() {
        let h = HmmParams::new(1, 2, vec![1.0], vec![1.0], vec![1.0, 0.0]).unwrap();
        let r = evaluate(&h, &[vec![0, 0, 0]]).unwrap();
        assert_eq!(r.perplexity, 1.0);
        assert_eq!(r.error_rate, 0.0);
        assert_eq!(r.rmrr, 1.0);
        let p = perplexity(&h, &[vec![0, 1]]).unwrap();
        assert_eq!(p, f64::INFINITY);
    }

    #[test]
    fn empty_test_rejected() {
        let m = uniform_unigram(3);
        assert!(matches!(perplexity(&m, &[]), Err(Error::EmptyData)));
        assert!(evaluate(&m, &[vec![5]]).is_err());
    }
}
