//! Structure measures of a trained HMM built on its stationary state distribution.

use super::HmmParams;
use crate::dist::entropy;
use crate::error::{Error, Result};

/// Residual (L1) at which power iteration stops.
pub const STATIONARY_TOL: f64 = 1e-12;
pub const STATIONARY_MAX_ITER: usize = 1_000_000;

/// Fixed point of `p = p π`, by power iteration from the uniform vector.
///
/// For reducible chains the result is the fixed point reached from the uniform
/// start; periodic chains that keep oscillating produce [`Error::NoConvergence`].
pub fn stationary_distribution(params: &HmmParams) -> Result<Vec<f64>> {
    let s = params.n_states();
    let mut p = vec![1.0 / s as f64; s];
    let mut next = vec![0.0; s];
    let mut residual = f64::INFINITY;
    for _ in 0..STATIONARY_MAX_ITER {
        next.fill(0.0);
        for (w, &pw) in p.iter().enumerate() {
            if pw == 0.0 {
                continue;
            }
            for (z, t) in params.transition_row(w).iter().enumerate() {
                next[z] += pw * t;
            }
        }
        let total: f64 = next.iter().sum();
        for v in next.iter_mut() {
            *v /= total;
        }
        residual = p.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut p, &mut next);
        if residual < STATIONARY_TOL {
            return Ok(p);
        }
    }
    Err(Error::NoConvergence {
        iterations: STATIONARY_MAX_ITER,
        residual,
    })
}

/// Exponentiated entropies describing how an HMM uses its state space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfoMeasures {
    /// `P_Γ`: perplexity of the stationary state distribution.
    pub stationary_perplexity: f64,
    /// `P_φ`: stationary-weighted perplexity of the output rows.
    pub output_perplexity: f64,
    /// `V`: symbol-weighted perplexity of `P̂(z | x)`.
    pub association_variety: f64,
    /// `P_π`: stationary-weighted perplexity of the transition rows.
    pub transition_perplexity: f64,
}

pub fn info_measures(params: &HmmParams) -> Result<InfoMeasures> {
    let stat = stationary_distribution(params)?;
    Ok(info_measures_with(params, &stat))
}

pub(crate) fn info_measures_with(params: &HmmParams, stat: &[f64]) -> InfoMeasures {
    let s = params.n_states();
    let v = params.vocab_size();
    let weighted = |row_entropy: &dyn Fn(usize) -> f64| -> f64 {
        (0..s).map(|z| stat[z] * row_entropy(z)).sum()
    };
    let h_output = weighted(&|z| entropy(params.output_row(z)));
    let h_trans = weighted(&|z| entropy(params.transition_row(z)));

    let mut h_assoc = 0.0;
    let mut joint = vec![0.0; s];
    for x in 0..v {
        for z in 0..s {
            joint[z] = stat[z] * params.emit(z, x);
        }
        let px: f64 = joint.iter().sum();
        if px <= 0.0 {
            continue;
        }
        let cond: Vec<f64> = joint.iter().map(|j| j / px).collect();
        h_assoc += px * entropy(&cond);
    }
    InfoMeasures {
        stationary_perplexity: entropy(stat).exp(),
        output_perplexity: h_output.exp(),
        association_variety: h_assoc.exp(),
        transition_perplexity: h_trans.exp(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_transition(s: usize, transition: Vec<f64>) -> HmmParams {
        let v = 2;
        HmmParams::new(s, v, vec![1.0 / s as f64; s], transition, vec![0.5; s * v]).unwrap()
    }

    #[test]
    fn two_state_chain() {
        let h = with_transition(2, vec![0.9, 0.1, 0.5, 0.5]);
        let p = stationary_distribution(&h).unwrap();
        assert!((p[0] - 5.0 / 6.0).abs() < 1e-10);
        assert!((p[1] - 1.0 / 6.0).abs() < 1e-10);
        let m = info_measures(&h).unwrap();
        let expected = (-(5.0f64 / 6.0) * (5.0f64 / 6.0).ln() - (1.0f64 / 6.0) * (1.0f64 / 6.0).ln()).exp();
        assert!((m.stationary_perplexity - expected).abs() < 1e-9);
        assert!((m.stationary_perplexity - 1.5694).abs() < 1e-3);
    }

    #[test]
    fn uniform_and_identity_chains() {
        let h = with_transition(4, vec![0.25; 16]);
        let m = info_measures(&h).unwrap();
        assert!((m.stationary_perplexity - 4.0).abs() < 1e-12);
        assert!((m.transition_perplexity - 4.0).abs() < 1e-12);

        let mut eye = vec![0.0; 9];
        for z in 0..3 {
            eye[z * 3 + z] = 1.0;
        }
        let p = stationary_distribution(&with_transition(3, eye)).unwrap();
        assert!(p.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn identity_emissions_have_unit_perplexities() {
        let mut eye = vec![0.0; 9];
        for z in 0..3 {
            eye[z * 3 + z] = 1.0;
        }
        let h = HmmParams::new(3, 3, vec![1.0 / 3.0; 3], vec![1.0 / 3.0; 9], eye).unwrap();
        let m = info_measures(&h).unwrap();
        assert_eq!(m.output_perplexity, 1.0);
        assert_eq!(m.association_variety, 1.0);
    }

    #[test]
    fn oscillating_chain_does_not_converge() {
        let h = with_transition(3, vec![0.0, 1.0, 0.0, 0.5, 0.0, 0.5, 0.0, 1.0, 0.0]);
        assert!(matches!(stationary_distribution(&h), Err(Error::NoConvergence { .. })));
    }
}
