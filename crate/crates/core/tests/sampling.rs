//! Statistical checks on generators and samplers.

mod common;

use chordgram::hmm::{self, GibbsConfig, HmmHyper, HmmParams};
use chordgram::markov::{MarkovModel, Smoothing};
use chordgram::pcfg::{self, sample_tree, sample_tree_with, PcfgGibbsConfig, PcfgHyper, PcfgParams, DEFAULT_EXPANSION_CAP};
use common::*;

/// `|observed - expected| < 4σ` for a binomial proportion.
fn within_sigma(hits: usize, trials: usize, p: f64) -> bool {
    let sigma = (p * (1.0 - p) / trials as f64).sqrt();
    (hits as f64 / trials as f64 - p).abs() < 4.0 * sigma.max(1e-12)
}

#[test]
fn hmm_samples_follow_the_output_distribution() {
    let h = HmmParams::new(1, 3, vec![1.0], vec![1.0], vec![0.2, 0.5, 0.3]).unwrap();
    let seq = h.sample_sequence(20_000, 7);
    for (x, &p) in [0.2, 0.5, 0.3].iter().enumerate() {
        let hits = seq.iter().filter(|&&s| s == x).count();
        assert!(within_sigma(hits, seq.len(), p), "symbol {x}: {hits}");
    }
}

#[test]
fn markov_samples_follow_transitions() {
    let train = vec![vec![0, 1, 0, 0, 1, 1, 0, 1]];
    let m = MarkovModel::fit(&train, 2, 1, Smoothing::Additive(0.5)).unwrap();
    let seq = m.sample_sequence(40_000, 3);
    let after0: Vec<usize> = seq.windows(2).filter(|w| w[0] == 0).map(|w| w[1]).collect();
    let hits = after0.iter().filter(|&&x| x == 1).count();
    assert!(within_sigma(hits, after0.len(), m.conditional(&[0, 1], 1)));
}

#[test]
fn tree_lengths_follow_length_probability() {
    let g = random_pcfg(5, 2, 3, 0.4);
    let trials = 20_000;
    let mut rng = rng(11);
    let mut twos = 0;
    let mut threes = 0;
    for _ in 0..trials {
        let t = sample_tree_with(&g, &mut rng, DEFAULT_EXPANSION_CAP).unwrap();
        match t.yield_symbols().len() {
            2 => twos += 1,
            3 => threes += 1,
            _ => {}
        }
    }
    assert!(within_sigma(twos, trials, g.length_probability(2)));
    assert!(within_sigma(threes, trials, g.length_probability(3)));
}

#[test]
fn chain_grammar_mean_length() {
    let h = random_hmm(1, 3, 4);
    let g = PcfgParams::init_from_hmm(&h, 0.6, 0.0).unwrap();
    let trials = 20_000;
    let mut rng = rng(2);
    let total: usize = (0..trials)
        .map(|_| sample_tree_with(&g, &mut rng, DEFAULT_EXPANSION_CAP).unwrap().yield_symbols().len())
        .sum();
    let mean = total as f64 / trials as f64;
    // Var(N) is large near criticality; ±0.3 is about 4σ here
    assert!((mean - 6.0).abs() < 0.3, "{mean}");
}

#[test]
fn chain_grammar_splits_keep_their_label_on_the_left() {
    use chordgram::pcfg::{Label, Node};
    let h = random_hmm(4, 3, 4);
    let g = PcfgParams::init_from_hmm(&h, 0.7, 0.0).unwrap();
    let mut rng = rng(5);
    for _ in 0..500 {
        let t = sample_tree_with(&g, &mut rng, DEFAULT_EXPANSION_CAP).unwrap();
        for node in &t.nodes {
            if let Node::Split { label: label @ Label::Nonterminal(_), left, .. } = *node {
                assert_eq!(t.nodes[left].label(), label);
            }
        }
    }
}

#[test]
fn sampled_trees_are_seed_stable() {
    let g = random_pcfg(8, 3, 4, 0.45);
    let a = sample_tree(&g, 99, DEFAULT_EXPANSION_CAP).unwrap();
    let b = sample_tree(&g, 99, DEFAULT_EXPANSION_CAP).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.0.yield_symbols(), a.1);
}

#[test]
fn hmm_gibbs_improves_on_its_start() {
    let planted = random_hmm(21, 2, 4);
    let train: Vec<Vec<usize>> = (0..20).map(|i| planted.sample_sequence(15, i)).collect();
    let init = HmmParams::init_random(2, 4, 0).unwrap();
    let cfg = GibbsConfig { n_samples: 100, polish_iters: 20, seed: 5, ..Default::default() };
    let fit = hmm::gibbs_fit(&init, &train, &HmmHyper::symmetric(2, 4, 0.1), cfg).unwrap();
    let start: f64 = train.iter().map(|s| init.log_evidence(s)).sum();
    let end: f64 = train.iter().map(|s| fit.params.log_evidence(s)).sum();
    assert!(end > start);
    assert_eq!(fit.sample_trace.len(), 100);
    assert_eq!(fit.best_sample_log_likelihood, fit.sample_trace[fit.best_iteration]);
    let again = hmm::gibbs_fit(&init, &train, &HmmHyper::symmetric(2, 4, 0.1), cfg).unwrap();
    assert_eq!(again.params, fit.params);
}

#[test]
fn pcfg_gibbs_improves_on_its_start() {
    let planted = random_pcfg(31, 2, 3, 0.45);
    let train: Vec<Vec<usize>> = (0..40)
        .map(|i| sample_tree(&planted, i, DEFAULT_EXPANSION_CAP).unwrap().1)
        .filter(|s| s.len() <= 20)
        .collect();
    let init = PcfgParams::init_random(2, 3, 0).unwrap();
    let cfg = PcfgGibbsConfig { n_samples: 40, polish_iters: 10, seed: 1, ..Default::default() };
    let fit = pcfg::gibbs_fit(&init, &train, &PcfgHyper::symmetric(2, 3, 0.1), cfg).unwrap();
    let start: f64 = train.iter().map(|s| init.log_evidence(s)).sum();
    let end: f64 = train.iter().map(|s| fit.params.log_evidence(s)).sum();
    assert!(end > start);
    assert_eq!(fit.best_sample_log_likelihood, fit.sample_trace[fit.best_iteration]);
}
