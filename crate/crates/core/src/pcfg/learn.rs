//! Inside-outside EM and Gibbs sampling of derivation trees.

use rand::Rng;
use rayon::prelude::*;

use super::chart::{inside, outside, Charts};
use super::tree::{DerivationTree, Label, Node};
use super::PcfgParams;
use crate::dist::{fill_uniform, normalize_in_place, rng_from_seed, sample_categorical, sample_dirichlet};
use crate::error::{invalid, Error, Result};

/// Default maximum trainable sequence length.
pub const DEFAULT_MAX_LENGTH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcfgEmConfig {
    pub max_iter: usize,
    pub rel_tol: f64,
    pub max_length: usize,
}

impl Default for PcfgEmConfig {
    fn default() -> Self {
        PcfgEmConfig {
            max_iter: 200,
            rel_tol: 1e-5,
            max_length: DEFAULT_MAX_LENGTH,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PcfgEmFit {
    pub params: PcfgParams,
    /// Training log-likelihood per visited parameter set; the last entry belongs
    /// to the returned parameters.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcfgGibbsConfig {
    pub n_samples: usize,
    pub polish_iters: usize,
    pub rel_tol: f64,
    pub max_length: usize,
    pub seed: u64,
}

impl Default for PcfgGibbsConfig {
    fn default() -> Self {
        PcfgGibbsConfig {
            n_samples: 200,
            polish_iters: 50,
            rel_tol: 1e-5,
            max_length: DEFAULT_MAX_LENGTH,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PcfgGibbsFit {
    pub params: PcfgParams,
    pub best_sample: PcfgParams,
    pub best_sample_log_likelihood: f64,
    pub best_iteration: usize,
    pub sample_trace: Vec<f64>,
    pub polish_trace: Vec<f64>,
}

/// Dirichlet hyperparameters `(ξ_S, ζ_S, ξ_z, ζ_z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PcfgHyper {
    /// `N_Δ²`.
    pub start_binary: Vec<f64>,
    /// `N_Ω`; unused while `ψ_S ≡ 0`.
    pub start_emit: Vec<f64>,
    /// `N_Δ³`, one `N_Δ²` block per nonterminal.
    pub binary: Vec<f64>,
    /// `N_Δ × N_Ω`.
    pub emit: Vec<f64>,
}

impl PcfgHyper {
    pub fn symmetric(n_nonterminals: usize, vocab_size: usize, alpha: f64) -> Self {
        let n = n_nonterminals;
        PcfgHyper {
            start_binary: vec![alpha; n * n],
            start_emit: vec![alpha; vocab_size],
            binary: vec![alpha; n * n * n],
            emit: vec![alpha; n * vocab_size],
        }
    }

    fn validate(&self, params: &PcfgParams) -> Result<()> {
        let (n, v) = (params.n_nonterminals(), params.vocab_size());
        if self.start_binary.len() != n * n
            || self.start_emit.len() != v
            || self.binary.len() != n * n * n
            || self.emit.len() != n * v
        {
            return Err(invalid("hyperparameter dimensions do not match the grammar"));
        }
        let all = self
            .start_binary
            .iter()
            .chain(&self.start_emit)
            .chain(&self.binary)
            .chain(&self.emit);
        if all.clone().any(|&a| !(a > 0.0) || !a.is_finite()) {
            return Err(invalid("Dirichlet parameters must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct RuleCounts {
    start_binary: Vec<f64>,
    binary: Vec<f64>,
    emit: Vec<f64>,
    log_likelihood: f64,
}

impl RuleCounts {
    fn zeros(n: usize, v: usize) -> Self {
        RuleCounts {
            start_binary: vec![0.0; n * n],
            binary: vec![0.0; n * n * n],
            emit: vec![0.0; n * v],
            log_likelihood: 0.0,
        }
    }

    fn add(&mut self, o: &RuleCounts) {
        for (a, b) in self.start_binary.iter_mut().zip(&o.start_binary) {
            *a += b;
        }
        for (a, b) in self.binary.iter_mut().zip(&o.binary) {
            *a += b;
        }
        for (a, b) in self.emit.iter_mut().zip(&o.emit) {
            *a += b;
        }
        self.log_likelihood += o.log_likelihood;
    }
}

fn check_data(params: &PcfgParams, train: &[Vec<usize>], max_length: usize) -> Result<()> {
    if params.has_start_emissions() {
        return Err(invalid(
            "training requires a grammar without start emissions (S → x must be zero)",
        ));
    }
    if train.is_empty() {
        return Err(Error::EmptyData);
    }
    for (index, seq) in train.iter().enumerate() {
        if seq.len() < 2 {
            return Err(Error::UntrainableLength {
                index,
                len: seq.len(),
                reason: "the start symbol only produces pairs",
            });
        }
        if seq.len() > max_length {
            return Err(Error::UntrainableLength {
                index,
                len: seq.len(),
                reason: "above the maximum trainable length",
            });
        }
        if seq.iter().any(|&x| x >= params.vocab_size()) {
            return Err(invalid("training symbol id exceeds the vocabulary"));
        }
    }
    Ok(())
}

/// Expected rule counts for one sequence from the inside and outside charts.
fn expected_counts(params: &PcfgParams, seq: &[usize]) -> RuleCounts {
    let n = params.n_nonterminals();
    let v = params.vocab_size();
    let len = seq.len();
    let mut rc = RuleCounts::zeros(n, v);
    let charts = inside(params, seq);
    rc.log_likelihood = charts.log_evidence;
    if !charts.log_evidence.is_finite() {
        return rc;
    }
    let charts = outside(params, seq, charts);
    let lp = charts.log_evidence;

    for (i, &x) in seq.iter().enumerate() {
        let sc = charts.outside_log_scale(i, i) + charts.inside_log_scale(i, i) - lp;
        if sc == f64::NEG_INFINITY {
            continue;
        }
        let f = sc.exp();
        let a = charts.outside_scaled(i, i);
        let b = charts.inside_scaled(i, i);
        for z in 0..n {
            rc.emit[z * v + x] += f * a[z] * b[z];
        }
    }

    let mut m = vec![0.0; n * n];
    for width in 2..=len {
        for i in 0..=len - width {
            let j = i + width - 1;
            let is_root = width == len;
            let ascale = if is_root { 0.0 } else { charts.outside_log_scale(i, j) };
            if ascale == f64::NEG_INFINITY {
                continue;
            }
            let refs = charts.split_matrix(i, j, &mut m);
            if refs == f64::NEG_INFINITY {
                continue;
            }
            let f = (ascale + refs - lp).exp();
            if is_root {
                for ((c, &t), &mv) in rc.start_binary.iter_mut().zip(params.start_binary()).zip(&m) {
                    *c += f * t * mv;
                }
                continue;
            }
            let a = charts.outside_scaled(i, j);
            for (z, &az) in a.iter().enumerate() {
                if az == 0.0 {
                    continue;
                }
                let w = f * az;
                let block = &mut rc.binary[z * n * n..(z + 1) * n * n];
                for ((c, &t), &mv) in block.iter_mut().zip(params.binary_row(z)).zip(&m) {
                    *c += w * t * mv;
                }
            }
        }
    }
    rc
}

fn gather<F>(train: &[Vec<usize>], per_seq: F) -> Vec<RuleCounts>
where
    F: Fn(&[usize]) -> RuleCounts + Sync,
{
    train.par_iter().map(|seq| per_seq(seq)).collect()
}

fn reduce(parts: &[RuleCounts], n: usize, v: usize) -> RuleCounts {
    let mut total = RuleCounts::zeros(n, v);
    for p in parts {
        total.add(p);
    }
    total
}

fn maximize(params: &PcfgParams, counts: RuleCounts) -> PcfgParams {
    let n = params.n_nonterminals();
    let v = params.vocab_size();
    let mut start_binary = counts.start_binary;
    if normalize_in_place(&mut start_binary) <= 0.0 {
        fill_uniform(&mut start_binary);
    }
    let mut binary = counts.binary;
    let mut emit = counts.emit;
    let mut row = vec![0.0; n * n + v];
    for z in 0..n {
        row[..n * n].copy_from_slice(&binary[z * n * n..(z + 1) * n * n]);
        row[n * n..].copy_from_slice(&emit[z * v..(z + 1) * v]);
        if normalize_in_place(&mut row) <= 0.0 {
            fill_uniform(&mut row);
        }
        binary[z * n * n..(z + 1) * n * n].copy_from_slice(&row[..n * n]);
        emit[z * v..(z + 1) * v].copy_from_slice(&row[n * n..]);
    }
    PcfgParams {
        n_nonterminals: n,
        vocab_size: v,
        start_binary,
        start_emit: vec![0.0; v],
        binary,
        emit,
    }
}

/// Inside-outside EM.
pub fn em_fit(params: &PcfgParams, train: &[Vec<usize>], config: PcfgEmConfig) -> Result<PcfgEmFit> {
    check_data(params, train, config.max_length)?;
    let n = params.n_nonterminals();
    let v = params.vocab_size();
    let mut current = params.clone();
    let mut trace = Vec::new();
    let mut iter = 0;
    loop {
        let parts = gather(train, |seq| expected_counts(&current, seq));
        if let Some(index) = parts.iter().position(|p| !p.log_likelihood.is_finite()) {
            return Err(Error::ZeroEvidence { index });
        }
        let counts = reduce(&parts, n, v);
        let ll = counts.log_likelihood;
        let converged = trace
            .last()
            .map(|&prev: &f64| (ll - prev).abs() <= config.rel_tol * prev.abs())
            .unwrap_or(false);
        trace.push(ll);
        if converged || iter >= config.max_iter {
            break;
        }
        current = maximize(&current, counts);
        iter += 1;
    }
    Ok(PcfgEmFit {
        params: current,
        trace,
    })
}

/// Samples `(k, z_L, z_R)` for span `i..=j` proportional to
/// `rule(z_L, z_R) · B_{ik}(z_L) · B_{k+1,j}(z_R)`.
fn sample_split<R: Rng>(charts: &Charts, rule: &[f64], i: usize, j: usize, rng: &mut R) -> Option<(usize, usize, usize)> {
    let n = charts.n_nonterminals;
    let refs = (i..j)
        .map(|k| charts.inside_log_scale(i, k) + charts.inside_log_scale(k + 1, j))
        .fold(f64::NEG_INFINITY, f64::max);
    if refs == f64::NEG_INFINITY {
        return None;
    }
    let mut weights = vec![0.0; (j - i) * n * n];
    for k in i..j {
        let sc = charts.inside_log_scale(i, k) + charts.inside_log_scale(k + 1, j);
        if sc == f64::NEG_INFINITY {
            continue;
        }
        let f = (sc - refs).exp();
        let bl = charts.inside_scaled(i, k);
        let br = charts.inside_scaled(k + 1, j);
        let w = &mut weights[(k - i) * n * n..(k - i + 1) * n * n];
        for zl in 0..n {
            for zr in 0..n {
                w[zl * n + zr] = f * rule[zl * n + zr] * bl[zl] * br[zr];
            }
        }
    }
    let pick = sample_categorical(rng, &weights)?;
    let k = i + pick / (n * n);
    let r = pick % (n * n);
    Some((k, r / n, r % n))
}

/// Draws a derivation of `seq` from its posterior: inside filtering, then
/// top-down sampling of rules and split points.
pub(crate) fn sample_derivation<R: Rng>(params: &PcfgParams, seq: &[usize], rng: &mut R) -> Option<DerivationTree> {
    let charts = inside(params, seq);
    if !charts.log_evidence.is_finite() {
        return None;
    }
    let len = seq.len();
    if len == 1 {
        return Some(DerivationTree {
            nodes: vec![Node::Emit {
                label: Label::Start,
                symbol: seq[0],
            }],
        });
    }
    let mut nodes = vec![Node::Emit {
        label: Label::Start,
        symbol: 0,
    }];
    let mut pending = vec![(0usize, Label::Start, 0usize, len - 1)];
    while let Some((slot, label, i, j)) = pending.pop() {
        if i == j {
            nodes[slot] = Node::Emit { label, symbol: seq[i] };
            continue;
        }
        let rule = match label {
            Label::Start => params.start_binary(),
            Label::Nonterminal(z) => params.binary_row(z),
        };
        let (k, zl, zr) = sample_split(&charts, rule, i, j, rng)?;
        let left = nodes.len();
        nodes.push(Node::Emit { label, symbol: 0 });
        nodes.push(Node::Emit { label, symbol: 0 });
        nodes[slot] = Node::Split {
            label,
            left,
            right: left + 1,
        };
        pending.push((left + 1, Label::Nonterminal(zr), k + 1, j));
        pending.push((left, Label::Nonterminal(zl), i, k));
    }
    Some(DerivationTree { nodes })
}

fn tree_counts(tree: &DerivationTree, n: usize, v: usize) -> RuleCounts {
    let mut rc = RuleCounts::zeros(n, v);
    for node in &tree.nodes {
        match *node {
            Node::Split { label, left, right } => {
                let zl = match tree.nodes[left].label() {
                    Label::Nonterminal(z) => z,
                    Label::Start => unreachable!("start symbol only at the root"),
                };
                let zr = match tree.nodes[right].label() {
                    Label::Nonterminal(z) => z,
                    Label::Start => unreachable!("start symbol only at the root"),
                };
                match label {
                    Label::Start => rc.start_binary[zl * n + zr] += 1.0,
                    Label::Nonterminal(z) => rc.binary[(z * n + zl) * n + zr] += 1.0,
                }
            }
            Node::Emit { label: Label::Nonterminal(z), symbol } => rc.emit[z * v + symbol] += 1.0,
            Node::Emit { label: Label::Start, .. } => {}
        }
    }
    rc
}

fn sample_posterior<R: Rng>(hyper: &PcfgHyper, counts: &RuleCounts, n: usize, v: usize, rng: &mut R) -> PcfgParams {
    let alpha: Vec<f64> = hyper
        .start_binary
        .iter()
        .zip(&counts.start_binary)
        .map(|(a, c)| a + c)
        .collect();
    let mut start_binary = vec![0.0; n * n];
    sample_dirichlet(rng, &alpha, &mut start_binary);
    let mut binary = vec![0.0; n * n * n];
    let mut emit = vec![0.0; n * v];
    let mut alpha = vec![0.0; n * n + v];
    let mut row = vec![0.0; n * n + v];
    for z in 0..n {
        let nn = n * n;
        for (k, a) in alpha[..nn].iter_mut().enumerate() {
            *a = hyper.binary[z * nn + k] + counts.binary[z * nn + k];
        }
        for (x, a) in alpha[nn..].iter_mut().enumerate() {
            *a = hyper.emit[z * v + x] + counts.emit[z * v + x];
        }
        sample_dirichlet(rng, &alpha, &mut row);
        binary[z * nn..(z + 1) * nn].copy_from_slice(&row[..nn]);
        emit[z * v..(z + 1) * v].copy_from_slice(&row[nn..]);
    }
    PcfgParams {
        n_nonterminals: n,
        vocab_size: v,
        start_binary,
        start_emit: vec![0.0; v],
        binary,
        emit,
    }
}

fn total_log_likelihood(params: &PcfgParams, train: &[Vec<usize>]) -> f64 {
    let parts: Vec<f64> = train.par_iter().map(|s| inside(params, s).log_evidence).collect();
    parts.iter().sum()
}

/// Alternates exact tree sampling and Dirichlet parameter draws, keeps the
/// sample with the highest training evidence, then polishes it with EM.
pub fn gibbs_fit(
    params: &PcfgParams,
    train: &[Vec<usize>],
    hyper: &PcfgHyper,
    config: PcfgGibbsConfig,
) -> Result<PcfgGibbsFit> {
    check_data(params, train, config.max_length)?;
    hyper.validate(params)?;
    if config.n_samples == 0 {
        return Err(invalid("Gibbs sampling needs at least one sample"));
    }
    let n = params.n_nonterminals();
    let v = params.vocab_size();
    let mut rng = rng_from_seed(config.seed);
    let mut current = params.clone();
    let mut best: Option<(f64, usize, PcfgParams)> = None;
    let mut sample_trace = Vec::with_capacity(config.n_samples);
    for it in 0..config.n_samples {
        let seeds: Vec<u64> = train.iter().map(|_| rng.random()).collect();
        let trees: Vec<Option<DerivationTree>> = train
            .par_iter()
            .zip(&seeds)
            .map(|(seq, &seed)| sample_derivation(&current, seq, &mut rng_from_seed(seed)))
            .collect();
        let mut counts = RuleCounts::zeros(n, v);
        for (index, t) in trees.iter().enumerate() {
            let t = t.as_ref().ok_or(Error::ZeroEvidence { index })?;
            counts.add(&tree_counts(t, n, v));
        }
        current = sample_posterior(hyper, &counts, n, v, &mut rng);
        let ll = total_log_likelihood(&current, train);
        sample_trace.push(ll);
        if best.as_ref().is_none_or(|(b, _, _)| ll > *b) {
            best = Some((ll, it, current.clone()));
        }
    }
    let (best_ll, best_iteration, best_sample) = best.expect("n_samples > 0");
    let polish = em_fit(
        &best_sample,
        train,
        PcfgEmConfig {
            max_iter: config.polish_iters,
            rel_tol: config.rel_tol,
            max_length: config.max_length,
        },
    )?;
    Ok(PcfgGibbsFit {
        params: polish.params,
        best_sample,
        best_sample_log_likelihood: best_ll,
        best_iteration,
        sample_trace,
        polish_trace: polish.trace,
    })
}
