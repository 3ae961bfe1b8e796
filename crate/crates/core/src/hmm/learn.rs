//! Maximum-likelihood (Baum-Welch) and Bayesian (Gibbs) learning.

use rand::Rng;
use rayon::prelude::*;

use super::forward_backward::{forward_backward, forward_log_evidence};
use super::HmmParams;
use crate::dist::{fill_uniform, normalize_in_place, rng_from_seed, sample_categorical, sample_dirichlet};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmConfig {
    pub max_iter: usize,
    /// Stop once `|ΔLL| / |LL|` drops below this.
    pub rel_tol: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            max_iter: 500,
            rel_tol: 1e-5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmFit {
    pub params: HmmParams,
    /// Training log-likelihood of every parameter set visited; the last entry
    /// belongs to the returned parameters.
    pub trace: Vec<f64>,
}

/// Dirichlet hyperparameters for the initial, transition and output rows.
#[derive(Debug, Clone, PartialEq)]
pub struct HmmHyper {
    pub initial: Vec<f64>,
    /// `N_Γ × N_Γ`, row-major.
    pub transition: Vec<f64>,
    /// `N_Γ × N_Ω`, row-major.
    pub output: Vec<f64>,
}

impl HmmHyper {
    pub fn symmetric(n_states: usize, vocab_size: usize, alpha: f64) -> Self {
        HmmHyper {
            initial: vec![alpha; n_states],
            transition: vec![alpha; n_states * n_states],
            output: vec![alpha; n_states * vocab_size],
        }
    }

    fn validate(&self, params: &HmmParams) -> Result<()> {
        let (s, v) = (params.n_states, params.vocab_size);
        if self.initial.len() != s || self.transition.len() != s * s || self.output.len() != s * v {
            return Err(invalid("hyperparameter dimensions do not match the model"));
        }
        let all = self.initial.iter().chain(&self.transition).chain(&self.output);
        if all.clone().any(|&a| !(a > 0.0) || !a.is_finite()) {
            return Err(invalid("Dirichlet parameters must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GibbsConfig {
    pub n_samples: usize,
    pub polish_iters: usize,
    pub rel_tol: f64,
    pub seed: u64,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        GibbsConfig {
            n_samples: 500,
            polish_iters: 50,
            rel_tol: 1e-5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GibbsFit {
    /// EM-polished parameters.
    pub params: HmmParams,
    /// The retained raw sample (maximum training evidence).
    pub best_sample: HmmParams,
    pub best_sample_log_likelihood: f64,
    /// Zero-based iteration at which the retained sample was drawn.
    pub best_iteration: usize,
    /// Training log-likelihood of every sampled parameter set.
    pub sample_trace: Vec<f64>,
    /// EM trace starting from the retained sample.
    pub polish_trace: Vec<f64>,
}

/// Sufficient statistics, expected (EM) or sampled (Gibbs).
#[derive(Debug, Clone)]
struct Stats {
    initial: Vec<f64>,
    transition: Vec<f64>,
    output: Vec<f64>,
    log_likelihood: f64,
}

impl Stats {
    fn zeros(s: usize, v: usize) -> Self {
        Stats {
            initial: vec![0.0; s],
            transition: vec![0.0; s * s],
            output: vec![0.0; s * v],
            log_likelihood: 0.0,
        }
    }

    fn add(&mut self, other: &Stats) {
        for (a, b) in self.initial.iter_mut().zip(&other.initial) {
            *a += b;
        }
        for (a, b) in self.transition.iter_mut().zip(&other.transition) {
            *a += b;
        }
        for (a, b) in self.output.iter_mut().zip(&other.output) {
            *a += b;
        }
        self.log_likelihood += other.log_likelihood;
    }
}

fn check_data(params: &HmmParams, train: &[Vec<usize>]) -> Result<()> {
    if train.is_empty() || train.iter().all(Vec::is_empty) {
        return Err(Error::EmptyData);
    }
    if train.iter().flatten().any(|&x| x >= params.vocab_size) {
        return Err(invalid("training symbol id exceeds the vocabulary"));
    }
    Ok(())
}

fn expected_counts(params: &HmmParams, seq: &[usize]) -> Stats {
    let (s, v) = (params.n_states, params.vocab_size);
    let mut st = Stats::zeros(s, v);
    if seq.is_empty() {
        return st;
    }
    let fb = forward_backward(params, seq);
    st.log_likelihood = fb.log_evidence;
    if !fb.log_evidence.is_finite() {
        return st;
    }
    for (n, &x) in seq.iter().enumerate() {
        let a = fb.alpha(n);
        let b = fb.beta(n);
        for z in 0..s {
            let g = a[z] * b[z];
            if n == 0 {
                st.initial[z] += g;
            }
            st.output[z * v + x] += g;
        }
        if n + 1 < seq.len() {
            let next = fb.beta(n + 1);
            let c = fb.scale[n + 1];
            let xn = seq[n + 1];
            for z in 0..s {
                if a[z] == 0.0 {
                    continue;
                }
                for w in 0..s {
                    st.transition[z * s + w] += a[z] * params.trans(z, w) * params.emit(w, xn) * next[w] / c;
                }
            }
        }
    }
    st
}

fn gather<F>(train: &[Vec<usize>], s: usize, v: usize, per_seq: F) -> Stats
where
    F: Fn(usize, &[usize]) -> Stats + Sync,
{
    let parts: Vec<Stats> = train
        .par_iter()
        .enumerate()
        .map(|(i, seq)| per_seq(i, seq))
        .collect();
    // sequential reduction keeps results independent of the worker count
    let mut total = Stats::zeros(s, v);
    for p in &parts {
        total.add(p);
    }
    total
}

fn total_log_likelihood(params: &HmmParams, train: &[Vec<usize>]) -> f64 {
    let parts: Vec<f64> = train.par_iter().map(|seq| forward_log_evidence(params, seq)).collect();
    parts.iter().sum()
}

fn normalize_rows(counts: &mut [f64], row_len: usize) {
    for row in counts.chunks_mut(row_len) {
        if normalize_in_place(row) <= 0.0 {
            fill_uniform(row);
        }
    }
}

fn maximize(s: usize, v: usize, mut st: Stats) -> HmmParams {
    normalize_rows(&mut st.initial, s);
    normalize_rows(&mut st.transition, s);
    normalize_rows(&mut st.output, v);
    HmmParams {
        n_states: s,
        vocab_size: v,
        initial: st.initial,
        transition: st.transition,
        output: st.output,
    }
}

/// Baum-Welch over all training sequences.
pub fn em_fit(params: &HmmParams, train: &[Vec<usize>], config: EmConfig) -> Result<EmFit> {
    check_data(params, train)?;
    let (s, v) = (params.n_states, params.vocab_size);
    let mut current = params.clone();
    let mut trace = Vec::new();
    let mut iter = 0;
    loop {
        let stats = gather(train, s, v, |_, seq| expected_counts(&current, seq));
        let ll = stats.log_likelihood;
        let converged = trace
            .last()
            .map(|&prev: &f64| (ll - prev).abs() <= config.rel_tol * prev.abs())
            .unwrap_or(false);
        trace.push(ll);
        if converged || iter >= config.max_iter || !ll.is_finite() {
            break;
        }
        current = maximize(s, v, stats);
        iter += 1;
    }
    Ok(EmFit {
        params: current,
        trace,
    })
}

/// Forward filtering, backward sampling of one state sequence; accumulates its counts.
fn sample_states<R: Rng>(params: &HmmParams, seq: &[usize], rng: &mut R) -> Option<Stats> {
    let (s, v) = (params.n_states, params.vocab_size);
    let mut st = Stats::zeros(s, v);
    if seq.is_empty() {
        return Some(st);
    }
    let fb_alpha = {
        // forward filter only
        let mut alpha = vec![0.0; seq.len() * s];
        for (n, &x) in seq.iter().enumerate() {
            for z in 0..s {
                let prior = if n == 0 {
                    params.initial[z]
                } else {
                    (0..s).map(|w| alpha[(n - 1) * s + w] * params.trans(w, z)).sum()
                };
                alpha[n * s + z] = prior * params.emit(z, x);
            }
            if normalize_in_place(&mut alpha[n * s..(n + 1) * s]) <= 0.0 {
                return None;
            }
        }
        alpha
    };
    let last = seq.len() - 1;
    let mut z = sample_categorical(rng, &fb_alpha[last * s..])?;
    st.output[z * v + seq[last]] += 1.0;
    let mut weights = vec![0.0; s];
    for n in (0..last).rev() {
        for w in 0..s {
            weights[w] = fb_alpha[n * s + w] * params.trans(w, z);
        }
        let prev = sample_categorical(rng, &weights)?;
        st.transition[prev * s + z] += 1.0;
        st.output[prev * v + seq[n]] += 1.0;
        z = prev;
    }
    st.initial[z] += 1.0;
    Some(st)
}

fn sample_posterior<R: Rng>(hyper: &HmmHyper, counts: &Stats, s: usize, v: usize, rng: &mut R) -> HmmParams {
    let mut draw = |prior: &[f64], count: &[f64], row_len: usize| {
        let mut out = vec![0.0; prior.len()];
        let mut alpha = vec![0.0; row_len];
        for ((p, c), o) in prior.chunks(row_len).zip(count.chunks(row_len)).zip(out.chunks_mut(row_len)) {
            for ((a, pi), ci) in alpha.iter_mut().zip(p).zip(c) {
                *a = pi + ci;
            }
            sample_dirichlet(rng, &alpha, o);
        }
        out
    };
    let initial = draw(&hyper.initial, &counts.initial, s);
    let transition = draw(&hyper.transition, &counts.transition, s);
    let output = draw(&hyper.output, &counts.output, v);
    HmmParams {
        n_states: s,
        vocab_size: v,
        initial,
        transition,
        output,
    }
}

/// Blocked Gibbs sampling of state sequences and parameters, retaining the
/// sample with the highest training evidence and polishing it with EM.
pub fn gibbs_fit(
    params: &HmmParams,
    train: &[Vec<usize>],
    hyper: &HmmHyper,
    config: GibbsConfig,
) -> Result<GibbsFit> {
    check_data(params, train)?;
    hyper.validate(params)?;
    if config.n_samples == 0 {
        return Err(invalid("Gibbs sampling needs at least one sample"));
    }
    let (s, v) = (params.n_states, params.vocab_size);
    let mut rng = rng_from_seed(config.seed);
    let mut current = params.clone();
    let mut best: Option<(f64, usize, HmmParams)> = None;
    let mut sample_trace = Vec::with_capacity(config.n_samples);

    for it in 0..config.n_samples {
        let seeds: Vec<u64> = train.iter().map(|_| rng.random()).collect();
        let parts: Vec<Option<Stats>> = train
            .par_iter()
            .zip(&seeds)
            .map(|(seq, &seed)| sample_states(&current, seq, &mut rng_from_seed(seed)))
            .collect();
        let mut counts = Stats::zeros(s, v);
        for (i, p) in parts.iter().enumerate() {
            counts.add(p.as_ref().ok_or(Error::ZeroEvidence { index: i })?);
        }
        current = sample_posterior(hyper, &counts, s, v, &mut rng);
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
        EmConfig {
            max_iter: config.polish_iters,
            rel_tol: config.rel_tol,
        },
    )?;
    Ok(GibbsFit {
        params: polish.params,
        best_sample,
        best_sample_log_likelihood: best_ll,
        best_iteration,
        sample_trace,
        polish_trace: polish.trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_state_em_is_unigram_mle() {
        let train = vec![vec![0, 1, 1, 2], vec![1, 1], vec![2, 0, 1]];
        let init = HmmParams::init_random(1, 3, 4).unwrap();
        let fit = em_fit(&init, &train, EmConfig::default()).unwrap();
        let expect = [2.0 / 9.0, 5.0 / 9.0, 2.0 / 9.0];
        for (a, b) in fit.params.output().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        // one M-step reaches the fixed point, the next E-step detects convergence
        assert_eq!(fit.trace.len(), 3);
    }

    #[test]
    fn em_trace_is_monotone() {
        let train = vec![vec![0, 1, 2, 3, 1, 0], vec![3, 3, 2], vec![1, 0, 0, 2, 3]];
        for seed in 0..5 {
            let init = HmmParams::init_random(3, 4, seed).unwrap();
            let fit = em_fit(&init, &train, EmConfig { max_iter: 100, rel_tol: 0.0 }).unwrap();
            for w in fit.trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-9 * w[0].abs(), "{:?}", w);
            }
            assert!((fit.trace.last().unwrap() - total_log_likelihood(&fit.params, &train)).abs() < 1e-9);
        }
    }

    #[test]
    fn em_respects_iteration_cap() {
        let train = vec![vec![0, 1, 0, 1, 1]];
        let init = HmmParams::init_random(2, 2, 1).unwrap();
        let fit = em_fit(&init, &train, EmConfig { max_iter: 3, rel_tol: 0.0 }).unwrap();
        assert_eq!(fit.trace.len(), 4);
    }

    #[test]
    fn gibbs_is_seed_deterministic_and_polish_helps() {
        let train = vec![vec![0, 1, 2, 1, 0], vec![2, 2, 1], vec![0, 0, 1, 2]];
        let init = HmmParams::init_random(2, 3, 0).unwrap();
        let hyper = HmmHyper::symmetric(2, 3, 0.1);
        let cfg = GibbsConfig {
            n_samples: 40,
            polish_iters: 10,
            rel_tol: 1e-5,
            seed: 17,
        };
        let a = gibbs_fit(&init, &train, &hyper, cfg).unwrap();
        let b = gibbs_fit(&init, &train, &hyper, cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.sample_trace, b.sample_trace);
        let max = a.sample_trace.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(a.best_sample_log_likelihood, max);
        assert!(*a.polish_trace.last().unwrap() >= a.best_sample_log_likelihood - 1e-9);
    }

    #[test]
    fn single_state_posterior_rows_are_proper() {
        let train = [vec![0, 0, 1], vec![2, 0]];
        let init = HmmParams::init_random(1, 3, 0).unwrap();
        let hyper = HmmHyper::symmetric(1, 3, 0.1);
        let mut rng = rng_from_seed(2);
        let counts = sample_states(&init, &train[0], &mut rng).unwrap();
        assert_eq!(counts.output, [2.0, 1.0, 0.0]);
        for _ in 0..50 {
            let p = sample_posterior(&hyper, &counts, 1, 3, &mut rng);
            assert!((p.output().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_empty_data_and_bad_hyper() {
        let init = HmmParams::init_random(2, 3, 0).unwrap();
        assert!(matches!(em_fit(&init, &[], EmConfig::default()), Err(Error::EmptyData)));
        let bad = HmmHyper::symmetric(2, 3, 0.0);
        assert!(gibbs_fit(&init, &[vec![0]], &bad, GibbsConfig::default()).is_err());
    }
}
