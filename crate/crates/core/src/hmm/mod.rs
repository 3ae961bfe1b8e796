//! First-order hidden Markov models over a finite symbol alphabet.
//!
//! Parameters are the initial distribution `π^ini`, the row-stochastic
//! transition matrix `π` and the output matrix `φ`, all stored row-major.

mod analysis;
mod forward_backward;
mod learn;

pub use analysis::{info_measures, stationary_distribution, InfoMeasures, STATIONARY_MAX_ITER, STATIONARY_TOL};
pub use forward_backward::{forward_backward, forward_log_evidence, FbTables};
pub use learn::{em_fit, gibbs_fit, EmConfig, EmFit, GibbsConfig, GibbsFit, HmmHyper};

use rand::Rng;

use crate::dist::{check_rows, normalize_in_place, rng_from_seed, sample_categorical, sample_dirichlet};
use crate::error::{invalid, Error, Result};
use crate::markov::MarkovModel;

#[derive(Debug, Clone, PartialEq)]
pub struct HmmParams {
    n_states: usize,
    vocab_size: usize,
    initial: Vec<f64>,
    transition: Vec<f64>,
    output: Vec<f64>,
}

impl HmmParams {
    pub fn new(
        n_states: usize,
        vocab_size: usize,
        initial: Vec<f64>,
        transition: Vec<f64>,
        output: Vec<f64>,
    ) -> Result<Self> {
        if n_states == 0 || vocab_size == 0 {
            return Err(invalid("HMM sizes must be positive"));
        }
        if initial.len() != n_states
            || transition.len() != n_states * n_states
            || output.len() != n_states * vocab_size
        {
            return Err(invalid("HMM table dimensions do not match the sizes"));
        }
        check_rows("hmm initial", &initial, n_states)?;
        check_rows("hmm transition", &transition, n_states)?;
        check_rows("hmm output", &output, vocab_size)?;
        Ok(HmmParams {
            n_states,
            vocab_size,
            initial,
            transition,
            output,
        })
    }

    /// Every row drawn from a symmetric Dirichlet(1).
    pub fn init_random(n_states: usize, vocab_size: usize, seed: u64) -> Result<Self> {
        if n_states == 0 || vocab_size == 0 {
            return Err(invalid("HMM sizes must be positive"));
        }
        let mut rng = rng_from_seed(seed);
        let mut draw = |len: usize, rows: usize| {
            let alpha = vec![1.0; len];
            let mut out = vec![0.0; len * rows];
            for row in out.chunks_mut(len) {
                sample_dirichlet(&mut rng, &alpha, row);
            }
            out
        };
        let initial = draw(n_states, 1);
        let transition = draw(n_states, n_states);
        let output = draw(vocab_size, n_states);
        Ok(HmmParams {
            n_states,
            vocab_size,
            initial,
            transition,
            output,
        })
    }

    /// The HMM that mimics a first-order Markov model: states are symbols and
    /// every state emits its own symbol.
    pub fn from_markov(markov: &MarkovModel) -> Result<Self> {
        if markov.order() != 1 {
            return Err(invalid(format!(
                "only first-order Markov models embed directly, got order {}",
                markov.order()
            )));
        }
        let v = markov.vocab_size();
        let mut output = vec![0.0; v * v];
        for z in 0..v {
            output[z * v + z] = 1.0;
        }
        HmmParams::new(
            v,
            v,
            markov.initial_tables()[0].clone(),
            markov.transition_table().to_vec(),
            output,
        )
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn transition(&self) -> &[f64] {
        &self.transition
    }

    pub fn output(&self) -> &[f64] {
        &self.output
    }

    #[inline]
    pub fn trans(&self, from: usize, to: usize) -> f64 {
        self.transition[from * self.n_states + to]
    }

    #[inline]
    pub fn emit(&self, state: usize, symbol: usize) -> f64 {
        self.output[state * self.vocab_size + symbol]
    }

    pub fn transition_row(&self, from: usize) -> &[f64] {
        &self.transition[from * self.n_states..(from + 1) * self.n_states]
    }

    pub fn output_row(&self, state: usize) -> &[f64] {
        &self.output[state * self.vocab_size..(state + 1) * self.vocab_size]
    }

    pub fn log_evidence(&self, seq: &[usize]) -> f64 {
        forward_log_evidence(self, seq)
    }

    /// `P(x_pos = y | all other symbols)` for every `y`, with `pos` zero-based.
    ///
    /// Uses a forward pass over `x_{..pos}` and a backward pass over
    /// `x_{pos+1..}`, each renormalized per step, so the result never depends on
    /// the observed `x_pos`.
    pub fn predict_distribution(&self, seq: &[usize], pos: usize) -> Result<Vec<f64>> {
        assert!(pos < seq.len(), "position out of range");
        let s = self.n_states;

        // weight over z_pos given x_{<pos}
        let mut prior = self.initial.clone();
        if pos > 0 {
            let mut alpha: Vec<f64> = (0..s).map(|z| self.initial[z] * self.emit(z, seq[0])).collect();
            normalize_in_place(&mut alpha);
            for &x in &seq[1..pos] {
                let mut next = vec![0.0; s];
                for (w, &a) in alpha.iter().enumerate() {
                    if a == 0.0 {
                        continue;
                    }
                    for (z, nz) in next.iter_mut().enumerate() {
                        *nz += a * self.trans(w, z);
                    }
                }
                for (z, nz) in next.iter_mut().enumerate() {
                    *nz *= self.emit(z, x);
                }
                normalize_in_place(&mut next);
                alpha = next;
            }
            prior = vec![0.0; s];
            for (w, &a) in alpha.iter().enumerate() {
                for (z, p) in prior.iter_mut().enumerate() {
                    *p += a * self.trans(w, z);
                }
            }
        }

        // P(x_{>pos} | z_pos) up to a constant
        let mut beta = vec![1.0; s];
        for &x in seq[pos + 1..].iter().rev() {
            let mut prev = vec![0.0; s];
            for (z, pz) in prev.iter_mut().enumerate() {
                *pz = (0..s).map(|w| self.trans(z, w) * self.emit(w, x) * beta[w]).sum();
            }
            normalize_in_place(&mut prev);
            beta = prev;
        }

        let mut out = vec![0.0; self.vocab_size];
        for z in 0..s {
            let weight = prior[z] * beta[z];
            if weight == 0.0 {
                continue;
            }
            for (y, o) in out.iter_mut().enumerate() {
                *o += weight * self.emit(z, y);
            }
        }
        if normalize_in_place(&mut out) <= 0.0 {
            return Err(Error::NoCompletion { position: pos });
        }
        Ok(out)
    }

    /// Ancestral sampling of states and symbols.
    pub fn sample_sequence(&self, len: usize, seed: u64) -> Vec<usize> {
        let mut rng = rng_from_seed(seed);
        self.sample_with(len, &mut rng).1
    }

    /// Returns `(states, symbols)`.
    pub fn sample_with<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
        let mut states = Vec::with_capacity(len);
        let mut symbols = Vec::with_capacity(len);
        for n in 0..len {
            let row = if n == 0 {
                &self.initial[..]
            } else {
                self.transition_row(states[n - 1])
            };
            let z = sample_categorical(rng, row).expect("rows are normalized");
            states.push(z);
            symbols.push(sample_categorical(rng, self.output_row(z)).expect("rows are normalized"));
        }
        (states, symbols)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::Smoothing;

    #[test]
    fn random_init_is_proper_and_seeded() {
        let a = HmmParams::init_random(4, 6, 7).unwrap();
        assert_eq!(a, HmmParams::init_random(4, 6, 7).unwrap());
        assert_ne!(a, HmmParams::init_random(4, 6, 8).unwrap());
        HmmParams::new(4, 6, a.initial.clone(), a.transition.clone(), a.output.clone()).unwrap();
        let one = HmmParams::init_random(1, 3, 0).unwrap();
        assert_eq!(one.initial(), [1.0]);
        assert_eq!(one.transition(), [1.0]);
    }

    #[test]
    fn from_markov_builds_identity_emissions() {
        let train = vec![vec![0, 1, 2, 1], vec![2, 2, 0]];
        let m = MarkovModel::fit(&train, 3, 1, Smoothing::KneserNey).unwrap();
        let h = HmmParams::from_markov(&m).unwrap();
        assert_eq!(h.n_states(), 3);
        for z in 0..3 {
            for x in 0..3 {
                assert_eq!(h.emit(z, x), if z == x { 1.0 } else { 0.0 });
            }
        }
        let m2 = MarkovModel::fit(&train, 3, 2, Smoothing::KneserNey).unwrap();
        assert!(HmmParams::from_markov(&m2).is_err());
    }

    #[test]
    fn single_state_predicts_emission_row() {
        let h = HmmParams::new(1, 3, vec![1.0], vec![1.0], vec![0.2, 0.5, 0.3]).unwrap();
        for pos in 0..4 {
            let p = h.predict_distribution(&[0, 1, 2, 1], pos).unwrap();
            for (a, b) in p.iter().zip([0.2, 0.5, 0.3]) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn deterministic_model_samples_forced_sequence() {
        let h = HmmParams::new(
            2,
            2,
            vec![1.0, 0.0],
            vec![0.0, 1.0, 1.0, 0.0],
            vec![1.0, 0.0, 0.0, 1.0],
        )
        .unwrap();
        assert_eq!(h.sample_sequence(5, 3), [0, 1, 0, 1, 0]);
        let r = HmmParams::init_random(3, 4, 1).unwrap();
        assert_eq!(r.sample_sequence(20, 9), r.sample_sequence(20, 9));
    }

    #[test]
    fn new_rejects_bad_rows() {
        assert!(HmmParams::new(1, 2, vec![1.0], vec![1.0], vec![0.6, 0.6]).is_err());
        assert!(HmmParams::new(1, 2, vec![1.0], vec![1.0], vec![1.0]).is_err());
    }
}
