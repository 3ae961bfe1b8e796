//! Brute-force oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use chordgram::hmm::HmmParams;
use chordgram::pcfg::PcfgParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Every sequence of length `len` over `0..v`, in lexicographic order.
pub fn all_sequences(v: usize, len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..v).map(move |x| {
                    let mut q = p.clone();
                    q.push(x);
                    q
                })
            })
            .collect();
    }
    out
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    if a == b {
        return true;
    }
    (a - b).abs() <= tol * a.abs().max(b.abs())
}

fn random_row<R: Rng>(rng: &mut R, len: usize) -> Vec<f64> {
    // bounded away from zero so no row is degenerate
    let mut row: Vec<f64> = (0..len).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = row.iter().sum();
    row.iter_mut().for_each(|x| *x /= total);
    row
}

fn random_rows<R: Rng>(rng: &mut R, rows: usize, len: usize) -> Vec<f64> {
    (0..rows).flat_map(|_| random_row(rng, len)).collect()
}

pub fn random_hmm(seed: u64, s: usize, v: usize) -> HmmParams {
    let mut r = rng(seed);
    let initial = random_row(&mut r, s);
    let transition = random_rows(&mut r, s, s);
    let output = random_rows(&mut r, s, v);
    HmmParams::new(s, v, initial, transition, output).unwrap()
}

/// A grammar without start emissions whose nonterminals split with
/// probability `split_mass` in total.
pub fn random_pcfg(seed: u64, n: usize, v: usize, split_mass: f64) -> PcfgParams {
    let mut r = rng(seed);
    let start_binary = random_row(&mut r, n * n);
    let mut binary = Vec::new();
    let mut emit = Vec::new();
    for _ in 0..n {
        binary.extend(random_row(&mut r, n * n).into_iter().map(|x| x * split_mass));
        emit.extend(random_row(&mut r, v).into_iter().map(|x| x * (1.0 - split_mass)));
    }
    PcfgParams::new(n, v, start_binary, vec![0.0; v], binary, emit).unwrap()
}

/// `P(x)` as an explicit sum over all `S^N` state paths.
pub fn hmm_path_sum(h: &HmmParams, seq: &[usize]) -> f64 {
    hmm_path_sum_with_end(h, seq, None)
}

/// Path sum with an optional end factor `end_z` applied after the last state
/// and transitions rescaled by `1 - end_z`.
pub fn hmm_path_sum_with_end(h: &HmmParams, seq: &[usize], end: Option<&[f64]>) -> f64 {
    let s = h.n_states();
    let mut total = 0.0;
    for path in all_sequences(s, seq.len()) {
        let mut p = h.initial()[path[0]] * h.emit(path[0], seq[0]);
        for n in 1..seq.len() {
            let stay = end.map_or(1.0, |e| 1.0 - e[path[n - 1]]);
            p *= stay * h.trans(path[n - 1], path[n]) * h.emit(path[n], seq[n]);
        }
        if let Some(e) = end {
            p *= e[path[seq.len() - 1]];
        }
        total += p;
    }
    total
}

#[derive(Clone, Copy)]
enum Sym {
    Start,
    Nt(usize),
}

/// Probabilities of every derivation of `seq[i..=j]` from `sym`, listed one
/// tree at a time.
fn derivations(g: &PcfgParams, sym: Sym, seq: &[usize], i: usize, j: usize) -> Vec<f64> {
    let n = g.n_nonterminals();
    let v = g.vocab_size();
    if i == j {
        let p = match sym {
            Sym::Start => g.start_emit()[seq[i]],
            Sym::Nt(z) => g.emit()[z * v + seq[i]],
        };
        return vec![p];
    }
    let mut out = Vec::new();
    for k in i..j {
        for zl in 0..n {
            for zr in 0..n {
                let rule = match sym {
                    Sym::Start => g.start_binary()[zl * n + zr],
                    Sym::Nt(z) => g.binary()[(z * n + zl) * n + zr],
                };
                let left = derivations(g, Sym::Nt(zl), seq, i, k);
                let right = derivations(g, Sym::Nt(zr), seq, k + 1, j);
                for a in &left {
                    for b in &right {
                        out.push(rule * a * b);
                    }
                }
            }
        }
    }
    out
}

/// `P(x)` as an explicit sum over all derivation trees.
pub fn pcfg_tree_sum(g: &PcfgParams, seq: &[usize]) -> f64 {
    derivations(g, Sym::Start, seq, 0, seq.len() - 1).iter().sum()
}

/// `P(x_pos = y | x_¬pos)` from evidence ratios: substitute every `y` and
/// normalize the resulting evidences.
pub fn evidence_ratio<F: Fn(&[usize]) -> f64>(evidence: F, seq: &[usize], pos: usize, v: usize) -> Vec<f64> {
    let mut work = seq.to_vec();
    let mut out: Vec<f64> = (0..v)
        .map(|y| {
            work[pos] = y;
            evidence(&work)
        })
        .collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= total);
    out
}
