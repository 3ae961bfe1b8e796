//! Experiment configuration, read from a TOML file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chordgram::ModelKind;
use serde::{Deserialize, Serialize};

/// Everything needed to reproduce a run. Missing fields take the protocol
/// defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Raw corpus, one whitespace-tokenized sequence per line.
    pub corpus: PathBuf,
    /// Directory for prepared data, models and results.
    pub out_dir: PathBuf,
    /// Number of most frequent symbols kept (`K`); `N_Ω = K + 1`.
    pub vocab_size: usize,
    pub test_count: usize,
    /// Training subset sizes `N_X`; an empty list means the full training set.
    pub train_sizes: Vec<usize>,
    /// Seed for the train/test split and the subsamples.
    pub data_seed: u64,
    /// Corpus lines shorter than this are dropped before the split.
    pub min_length: usize,
    pub model: ModelConfig,
    pub hyper: Hyper,
    /// Write measured wall time into results; disable for byte-identical reruns.
    pub record_wall_time: bool,
    /// Keep every trained sweep model under `out_dir/models`.
    pub save_models: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Markov order `k`, `N_Γ` or `N_Δ`. Empty means the default grid for the kind.
    pub sizes: Vec<usize>,
    /// `em`/`gs` for latent models, `additive`/`kn`/`mkn` for Markov models.
    pub algos: Vec<String>,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PcfgInit {
    Random,
    /// Chain grammar built from an HMM trained with the same size, algorithm and seed.
    Hmm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyper {
    pub additive_epsilon: f64,
    pub dirichlet_alpha: f64,
    pub hmm_em_iters: usize,
    pub pcfg_em_iters: usize,
    pub hmm_gibbs_samples: usize,
    pub pcfg_gibbs_samples: usize,
    pub polish_iters: usize,
    pub rel_tol: f64,
    pub pcfg_max_length: usize,
    pub pcfg_init: PcfgInit,
    /// Fixed κ for HMM initialization; derived from the mean training length when absent.
    pub kappa: Option<f64>,
    /// Fixed η; `0.01 / N_Δ` when absent.
    pub eta: Option<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            corpus: PathBuf::from("corpus.txt"),
            out_dir: PathBuf::from("out"),
            vocab_size: 10,
            test_count: 171,
            train_sizes: vec![30, 300],
            data_seed: 0,
            min_length: 2,
            model: ModelConfig::default(),
            hyper: Hyper::default(),
            record_wall_time: true,
            save_models: true,
        }
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: ModelKind::Hmm,
            sizes: Vec::new(),
            algos: vec!["em".into(), "gs".into()],
            seeds: vec![0, 1, 2],
        }
    }
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            additive_epsilon: 0.1,
            dirichlet_alpha: 0.1,
            hmm_em_iters: 500,
            pcfg_em_iters: 200,
            hmm_gibbs_samples: 500,
            pcfg_gibbs_samples: 200,
            polish_iters: 50,
            rel_tol: 1e-5,
            pcfg_max_length: chordgram::pcfg::DEFAULT_MAX_LENGTH,
            pcfg_init: PcfgInit::Random,
            kappa: None,
            eta: None,
        }
    }
}

/// Size grid used when `sizes` is empty.
pub fn default_sizes(kind: ModelKind) -> Vec<usize> {
    match kind {
        ModelKind::Markov => vec![1, 2, 3],
        ModelKind::Hmm => (1..=10)
            .chain([15, 20, 25, 30])
            .chain((40..=100).step_by(10))
            .collect(),
        ModelKind::Pcfg => (1..=10).chain([15, 20]).collect(),
    }
}

const LATENT_ALGOS: [&str; 2] = ["em", "gs"];
const MARKOV_ALGOS: [&str; 3] = ["additive", "kn", "mkn"];

fn allowed_algos(kind: ModelKind) -> &'static [&'static str] {
    match kind {
        ModelKind::Markov => &MARKOV_ALGOS,
        _ => &LATENT_ALGOS,
    }
}

pub fn default_algos(kind: ModelKind) -> Vec<String> {
    allowed_algos(kind).iter().map(|a| a.to_string()).collect()
}

pub fn algos_fit_kind(algos: &[String], kind: ModelKind) -> bool {
    algos.iter().all(|a| allowed_algos(kind).contains(&a.as_str()))
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let config: ExperimentConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 {
            bail!("vocab_size must be at least 1");
        }
        if self.min_length == 0 {
            bail!("min_length must be at least 1");
        }
        if self.train_sizes.contains(&0) {
            bail!("train_sizes must be positive");
        }
        let allowed = allowed_algos(self.model.kind);
        if self.model.algos.is_empty() {
            bail!("model.algos must not be empty");
        }
        for a in &self.model.algos {
            if !allowed.contains(&a.as_str()) {
                bail!("algorithm `{a}` is not valid for {} models (expected one of {allowed:?})", self.model.kind);
            }
        }
        if self.model.seeds.is_empty() {
            bail!("model.seeds must not be empty");
        }
        if self.sizes().contains(&0) {
            bail!("model sizes must be positive");
        }
        let h = &self.hyper;
        if !(h.additive_epsilon > 0.0) || !(h.dirichlet_alpha > 0.0) {
            bail!("additive_epsilon and dirichlet_alpha must be positive");
        }
        if !(h.rel_tol >= 0.0) {
            bail!("rel_tol must be non-negative");
        }
        if h.hmm_gibbs_samples == 0 || h.pcfg_gibbs_samples == 0 {
            bail!("Gibbs sample counts must be positive");
        }
        if h.pcfg_max_length < 2 {
            bail!("pcfg_max_length must be at least 2");
        }
        if let Some(k) = h.kappa {
            if !(k > 0.5 && k <= 1.0) {
                bail!("kappa must lie in (0.5, 1]");
            }
        }
        if let Some(e) = h.eta {
            if !(e >= 0.0) {
                bail!("eta must be non-negative");
            }
        }
        Ok(())
    }

    pub fn sizes(&self) -> Vec<usize> {
        if self.model.sizes.is_empty() {
            default_sizes(self.model.kind)
        } else {
            self.model.sizes.clone()
        }
    }

    /// Markov models are deterministic, so only the first seed is used for them.
    pub fn effective_seeds(&self) -> Vec<u64> {
        match self.model.kind {
            ModelKind::Markov => self.model.seeds[..1].to_vec(),
            _ => self.model.seeds.clone(),
        }
    }
}
