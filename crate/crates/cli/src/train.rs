//! Training and evaluating a single experiment cell.

use std::fmt::Write as _;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use chordgram::eval::{evaluate, param_count, perplexity};
use chordgram::hmm::{self, EmConfig, GibbsConfig, HmmHyper, HmmParams};
use chordgram::markov::{MarkovModel, Smoothing};
use chordgram::pcfg::{self, PcfgEmConfig, PcfgGibbsConfig, PcfgHyper, PcfgParams};
use chordgram::{AnyModel, ModelKind};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, PcfgInit};

/// One point of the experiment grid.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub kind: ModelKind,
    pub size: usize,
    pub algo: String,
    pub seed: u64,
    /// Requested training subset size; `None` is the full training set.
    pub n_train: Option<usize>,
}

impl Cell {
    /// File stem shared by the model and its training log.
    pub fn stem(&self) -> String {
        let n = self.n_train.map_or_else(|| "full".to_string(), |n| n.to_string());
        format!("{}-{}-n{}-size{}-seed{}", self.kind, self.algo, n, self.size, self.seed)
    }

    /// Seed for the random initial parameters. It depends on the cell
    /// coordinates but not on the algorithm, so EM and Gibbs runs with the same
    /// seed start from the same point.
    pub fn init_seed(&self) -> u64 {
        mix(&[self.seed, kind_code(self.kind), self.size as u64, self.n_train.map_or(u64::MAX, |n| n as u64)])
    }

    pub fn sampler_seed(&self) -> u64 {
        mix(&[self.init_seed(), 0x6773])
    }
}

fn kind_code(kind: ModelKind) -> u64 {
    match kind {
        ModelKind::Markov => 1,
        ModelKind::Hmm => 2,
        ModelKind::Pcfg => 3,
    }
}

/// SplitMix64 over a list of words.
fn mix(words: &[u64]) -> u64 {
    let mut h: u64 = 0x9e37_79b9_7f4a_7c15;
    for &w in words {
        h ^= w;
        h = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h = z ^ (z >> 31);
    }
    h
}

/// One line of a training log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogEntry {
    pub phase: &'static str,
    pub iteration: usize,
    pub log_likelihood: f64,
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: AnyModel,
    pub log: Vec<LogEntry>,
    /// Training sequences the model could actually be fitted on.
    pub used: Vec<Vec<usize>>,
    /// Sequences skipped because their length is not trainable (PCFGs only).
    pub skipped: usize,
}

fn push_trace(log: &mut Vec<LogEntry>, phase: &'static str, trace: &[f64]) {
    log.extend(trace.iter().enumerate().map(|(iteration, &ll)| LogEntry {
        phase,
        iteration,
        log_likelihood: ll,
    }));
}

pub fn log_to_csv(log: &[LogEntry]) -> String {
    let mut out = String::from("phase,iteration,log_likelihood\n");
    for e in log {
        writeln!(out, "{},{},{}", e.phase, e.iteration, e.log_likelihood).unwrap();
    }
    out
}

/// `κ` such that the chain grammar's expected length equals `mean_length`.
pub fn kappa_for_mean_length(mean_length: f64) -> Result<f64> {
    if !(mean_length >= 2.0) {
        bail!("mean training length {mean_length} is below 2; κ cannot be derived (set hyper.kappa)");
    }
    Ok(mean_length / (2.0 * (mean_length - 1.0)))
}

fn train_hmm(config: &ExperimentConfig, cell: &Cell, n_states: usize, v: usize, train: &[Vec<usize>], log: &mut Vec<LogEntry>) -> Result<HmmParams> {
    let h = &config.hyper;
    let init = HmmParams::init_random(n_states, v, cell.init_seed())?;
    match cell.algo.as_str() {
        "em" => {
            let fit = hmm::em_fit(&init, train, EmConfig { max_iter: h.hmm_em_iters, rel_tol: h.rel_tol })?;
            push_trace(log, "em", &fit.trace);
            Ok(fit.params)
        }
        "gs" => {
            let cfg = GibbsConfig {
                n_samples: h.hmm_gibbs_samples,
                polish_iters: h.polish_iters,
                rel_tol: h.rel_tol,
                seed: cell.sampler_seed(),
            };
            let hyper = HmmHyper::symmetric(n_states, v, h.dirichlet_alpha);
            let fit = hmm::gibbs_fit(&init, train, &hyper, cfg)?;
            push_trace(log, "sample", &fit.sample_trace);
            push_trace(log, "polish", &fit.polish_trace);
            Ok(fit.params)
        }
        other => bail!("unknown HMM algorithm `{other}`"),
    }
}

/// Trains the model of `cell` on `train`.
pub fn train_cell(config: &ExperimentConfig, cell: &Cell, vocab_size: usize, train: &[Vec<usize>]) -> Result<Trained> {
    let h = &config.hyper;
    let mut log = Vec::new();
    let v = vocab_size;
    match cell.kind {
        ModelKind::Markov => {
            let smoothing = match cell.algo.as_str() {
                "additive" => Smoothing::Additive(h.additive_epsilon),
                "kn" => Smoothing::KneserNey,
                "mkn" => Smoothing::ModifiedKneserNey,
                other => bail!("unknown Markov smoothing `{other}`"),
            };
            let m = MarkovModel::fit(train, v, cell.size, smoothing)?;
            let ll = train.iter().map(|s| m.log_evidence(s)).sum();
            log.push(LogEntry { phase: "fit", iteration: 0, log_likelihood: ll });
            Ok(Trained { model: m.into(), log, used: train.to_vec(), skipped: 0 })
        }
        ModelKind::Hmm => {
            let params = train_hmm(config, cell, cell.size, v, train, &mut log)?;
            Ok(Trained { model: params.into(), log, used: train.to_vec(), skipped: 0 })
        }
        ModelKind::Pcfg => {
            let used: Vec<Vec<usize>> = train
                .iter()
                .filter(|s| s.len() >= 2 && s.len() <= h.pcfg_max_length)
                .cloned()
                .collect();
            let skipped = train.len() - used.len();
            if used.is_empty() {
                bail!("no training sequence has a length in 2..={}", h.pcfg_max_length);
            }
            let n = cell.size;
            let init = match h.pcfg_init {
                PcfgInit::Random => PcfgParams::init_random(n, v, cell.init_seed())?,
                PcfgInit::Hmm => {
                    let mut hmm_log = Vec::new();
                    let hmm_params = train_hmm(config, cell, n, v, &used, &mut hmm_log)?;
                    for e in &mut hmm_log {
                        e.phase = match e.phase {
                            "em" => "hmm_em",
                            "sample" => "hmm_sample",
                            _ => "hmm_polish",
                        };
                    }
                    log.extend(hmm_log);
                    let kappa = match h.kappa {
                        Some(k) => k,
                        None => {
                            let total: usize = used.iter().map(Vec::len).sum();
                            kappa_for_mean_length(total as f64 / used.len() as f64)?
                        }
                    };
                    let eta = h.eta.unwrap_or(0.01 / n as f64);
                    PcfgParams::init_from_hmm(&hmm_params, kappa, eta)?
                }
            };
            let params = match cell.algo.as_str() {
                "em" => {
                    let cfg = PcfgEmConfig { max_iter: h.pcfg_em_iters, rel_tol: h.rel_tol, max_length: h.pcfg_max_length };
                    let fit = pcfg::em_fit(&init, &used, cfg)?;
                    push_trace(&mut log, "em", &fit.trace);
                    fit.params
                }
                "gs" => {
                    let cfg = PcfgGibbsConfig {
                        n_samples: h.pcfg_gibbs_samples,
                        polish_iters: h.polish_iters,
                        rel_tol: h.rel_tol,
                        max_length: h.pcfg_max_length,
                        seed: cell.sampler_seed(),
                    };
                    let hyper = PcfgHyper::symmetric(n, v, h.dirichlet_alpha);
                    let fit = pcfg::gibbs_fit(&init, &used, &hyper, cfg)?;
                    push_trace(&mut log, "sample", &fit.sample_trace);
                    push_trace(&mut log, "polish", &fit.polish_trace);
                    fit.params
                }
                other => bail!("unknown PCFG algorithm `{other}`"),
            };
            Ok(Trained { model: params.into(), log, used, skipped })
        }
    }
}

/// One line of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub model: ModelKind,
    pub size: usize,
    pub param_count: u64,
    pub n_x: usize,
    pub seed: u64,
    pub algo: String,
    pub train_perplexity: f64,
    pub test_perplexity: f64,
    pub error_rate: f64,
    pub rmrr: f64,
    pub wall_time: f64,
    /// Lowest training perplexity among the seeds of this (model, size, algo, N_X).
    pub best_by_train: bool,
    /// Lowest test perplexity among the seeds of this (model, size, algo, N_X).
    pub best_by_test: bool,
    /// `ok`, or the error that stopped this cell.
    pub status: String,
}

impl ResultRow {
    pub fn failed(cell: &Cell, vocab_size: usize, n_x: usize, error: &anyhow::Error) -> Self {
        ResultRow {
            model: cell.kind,
            size: cell.size,
            param_count: param_count(cell.kind, cell.size, vocab_size),
            n_x,
            seed: cell.seed,
            algo: cell.algo.clone(),
            train_perplexity: f64::NAN,
            test_perplexity: f64::NAN,
            error_rate: f64::NAN,
            rmrr: f64::NAN,
            wall_time: 0.0,
            best_by_train: false,
            best_by_test: false,
            status: format!("{error:#}"),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Trains, evaluates and returns the row together with the model.
pub fn run_cell(
    config: &ExperimentConfig,
    cell: &Cell,
    vocab_size: usize,
    train: &[Vec<usize>],
    test: &[Vec<usize>],
) -> Result<(Trained, ResultRow)> {
    let start = Instant::now();
    let trained = train_cell(config, cell, vocab_size, train).with_context(|| format!("training {}", cell.stem()))?;
    let model = trained.model.as_sequence_model();
    let train_perplexity = perplexity(model, &trained.used)?;
    let report = evaluate(model, test).with_context(|| format!("evaluating {}", cell.stem()))?;
    let wall_time = if config.record_wall_time { start.elapsed().as_secs_f64() } else { 0.0 };
    let row = ResultRow {
        model: cell.kind,
        size: cell.size,
        param_count: param_count(cell.kind, cell.size, vocab_size),
        n_x: train.len(),
        seed: cell.seed,
        algo: cell.algo.clone(),
        train_perplexity,
        test_perplexity: report.perplexity,
        error_rate: report.error_rate,
        rmrr: report.rmrr,
        wall_time,
        best_by_train: false,
        best_by_test: false,
        status: "ok".into(),
    };
    Ok((trained, row))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kappa_inverts_expected_length() {
        let k = kappa_for_mean_length(6.0).unwrap();
        assert!((k - 0.6).abs() < 1e-12);
        let k = kappa_for_mean_length(13.0).unwrap();
        assert!((2.0 * k / (2.0 * k - 1.0) - 13.0).abs() < 1e-9);
        assert!(kappa_for_mean_length(1.5).is_err());
        assert_eq!(kappa_for_mean_length(2.0).unwrap(), 1.0);
    }

    #[test]
    fn seeds_depend_on_coordinates_only() {
        let a = Cell { kind: ModelKind::Hmm, size: 3, algo: "em".into(), seed: 1, n_train: Some(30) };
        let b = Cell { algo: "gs".into(), ..a.clone() };
        assert_eq!(a.init_seed(), b.init_seed());
        let c = Cell { size: 4, ..a.clone() };
        assert_ne!(a.init_seed(), c.init_seed());
        assert_eq!(a.stem(), "hmm-em-n30-size3-seed1");
    }
}
