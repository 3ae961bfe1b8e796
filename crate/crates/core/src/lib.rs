//! Latent grammar induction for symbol sequences such as chord progressions.
//!
//! Three model families share one evaluation interface:
//!
//! * [`markov::MarkovModel`]: k-th order Markov models with additive,
//!   Kneser-Ney or modified Kneser-Ney smoothing.
//! * [`hmm::HmmParams`]: first-order hidden Markov models trained by
//!   Baum-Welch EM or blocked Gibbs sampling.
//! * [`pcfg::PcfgParams`]: binary probabilistic context-free grammars trained
//!   by inside-outside EM or Gibbs sampling of derivation trees.
//!
//! Symbols are dense ids `0..N_Ω` produced by [`corpus::Vocabulary`].

// `!(x > 0.0)` deliberately rejects NaN, and index loops mirror the recursions.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod corpus;
pub mod dist;
pub mod error;
pub mod eval;
pub mod format;
pub mod hmm;
pub mod markov;
pub mod pcfg;

pub use corpus::{encode, parse_corpus, split, subsample, ChordSequence, EncodedDataset, EncodedSequence, Vocabulary, OTHER};
pub use error::{Error, Result};
pub use eval::{error_rate, evaluate, param_count, perplexity, rmrr, EvalReport, ModelKind, SequenceModel};
pub use format::{AnyModel, ModelFile};
pub use hmm::{HmmParams, InfoMeasures};
pub use markov::{MarkovModel, Smoothing};
pub use pcfg::{DerivationTree, PcfgParams};

/// Dense symbol id.
pub type Symbol = usize;
