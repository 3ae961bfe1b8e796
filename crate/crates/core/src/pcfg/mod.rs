//! Probabilistic context-free grammars in binary form.
//!
//! A grammar has `N_Δ` nonterminals plus a distinct start symbol `S`. Every
//! nonterminal `z` either splits into two nonterminals (`θ_{z→z_L z_R}`) or
//! emits a terminal (`ψ_{z→x}`); `S` does the same with its own tables. The
//! usual training mode fixes `ψ_{S→x} ≡ 0`, so only sequences of length ≥ 2
//! can be generated; [`PcfgParams::strict_embed_hmm`] is the one constructor
//! that produces start emissions.

mod chart;
mod learn;
mod tree;

pub use chart::{inside, outside, Charts};
pub use learn::{em_fit, gibbs_fit, DEFAULT_MAX_LENGTH, PcfgEmConfig, PcfgEmFit, PcfgGibbsConfig, PcfgGibbsFit, PcfgHyper};
pub use tree::{sample_tree, sample_tree_with, DerivationTree, Label, Node, DEFAULT_EXPANSION_CAP};

use crate::dist::{check_rows, normalize_in_place, rng_from_seed, sample_dirichlet, ROW_TOLERANCE};
use crate::error::{invalid, Error, Result};
use crate::hmm::HmmParams;

#[derive(Debug, Clone, PartialEq)]
pub struct PcfgParams {
    n_nonterminals: usize,
    vocab_size: usize,
    /// `θ_{S→z_L z_R}` at `z_L * N_Δ + z_R`.
    start_binary: Vec<f64>,
    /// `ψ_{S→x}`.
    start_emit: Vec<f64>,
    /// `θ_{z→z_L z_R}` at `(z * N_Δ + z_L) * N_Δ + z_R`.
    binary: Vec<f64>,
    /// `ψ_{z→x}` at `z * N_Ω + x`.
    emit: Vec<f64>,
}

impl PcfgParams {
    pub fn new(
        n_nonterminals: usize,
        vocab_size: usize,
        start_binary: Vec<f64>,
        start_emit: Vec<f64>,
        binary: Vec<f64>,
        emit: Vec<f64>,
    ) -> Result<Self> {
        let (n, v) = (n_nonterminals, vocab_size);
        if n == 0 || v == 0 {
            return Err(invalid("PCFG sizes must be positive"));
        }
        if start_binary.len() != n * n
            || start_emit.len() != v
            || binary.len() != n * n * n
            || emit.len() != n * v
        {
            return Err(invalid("PCFG table dimensions do not match the sizes"));
        }
        let p = PcfgParams {
            n_nonterminals: n,
            vocab_size: v,
            start_binary,
            start_emit,
            binary,
            emit,
        };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        let mut start: Vec<f64> = self.start_binary.clone();
        start.extend_from_slice(&self.start_emit);
        check_rows("pcfg start rule", &start, start.len())?;
        let mut row = Vec::with_capacity(self.row_len());
        for z in 0..self.n_nonterminals {
            row.clear();
            row.extend_from_slice(self.binary_row(z));
            row.extend_from_slice(self.emit_row(z));
            if row.iter().any(|&x| !(x >= 0.0)) {
                return Err(Error::Normalization {
                    what: "pcfg nonterminal rule",
                    row: z,
                    sum: f64::NAN,
                });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_TOLERANCE {
                return Err(Error::Normalization {
                    what: "pcfg nonterminal rule",
                    row: z,
                    sum,
                });
            }
        }
        Ok(())
    }

    /// Random grammar in binary-start mode: `θ_S` is Dirichlet(1) over the
    /// `N_Δ²` start splits and each nonterminal row is Dirichlet(1) over its
    /// `N_Δ² + N_Ω` productions.
    pub fn init_random(n_nonterminals: usize, vocab_size: usize, seed: u64) -> Result<Self> {
        let (n, v) = (n_nonterminals, vocab_size);
        if n == 0 || v == 0 {
            return Err(invalid("PCFG sizes must be positive"));
        }
        let mut rng = rng_from_seed(seed);
        let mut start_binary = vec![0.0; n * n];
        sample_dirichlet(&mut rng, &vec![1.0; n * n], &mut start_binary);
        let mut binary = vec![0.0; n * n * n];
        let mut emit = vec![0.0; n * v];
        let ones = vec![1.0; n * n + v];
        let mut row = vec![0.0; n * n + v];
        for z in 0..n {
            sample_dirichlet(&mut rng, &ones, &mut row);
            binary[z * n * n..(z + 1) * n * n].copy_from_slice(&row[..n * n]);
            emit[z * v..(z + 1) * v].copy_from_slice(&row[n * n..]);
        }
        Ok(PcfgParams {
            n_nonterminals: n,
            vocab_size: v,
            start_binary,
            start_emit: vec![0.0; v],
            binary,
            emit,
        })
    }

    /// Approximate linear-chain grammar built from an HMM:
    /// `θ_{S→z_L z_R} = π^ini_{z_L} π_{z_L z_R}`, and for each `z` the row
    /// `θ_{z→z_L z_R} ∝ δ_{z z_L} π_{z z_R} (1 - κ) + η`, `ψ_{z→x} ∝ φ_{zx} κ`.
    ///
    /// With `η = 0` the expected yield length is `2κ / (2κ - 1)`.
    pub fn init_from_hmm(hmm: &HmmParams, kappa: f64, eta: f64) -> Result<Self> {
        if !(kappa > 0.5 && kappa <= 1.0) {
            return Err(invalid(format!(
                "kappa must lie in (1/2, 1] for a terminating grammar, got {kappa}"
            )));
        }
        if !(eta >= 0.0) || !eta.is_finite() {
            return Err(invalid(format!("eta must be non-negative, got {eta}")));
        }
        let n = hmm.n_states();
        let v = hmm.vocab_size();
        let mut start_binary = vec![0.0; n * n];
        for zl in 0..n {
            for zr in 0..n {
                start_binary[zl * n + zr] = hmm.initial()[zl] * hmm.trans(zl, zr);
            }
        }
        normalize_in_place(&mut start_binary);
        let mut binary = vec![0.0; n * n * n];
        let mut emit = vec![0.0; n * v];
        for z in 0..n {
            let rows = &mut binary[z * n * n..(z + 1) * n * n];
            for zl in 0..n {
                for zr in 0..n {
                    let chain = if zl == z { hmm.trans(z, zr) * (1.0 - kappa) } else { 0.0 };
                    rows[zl * n + zr] = chain + eta;
                }
            }
            for x in 0..v {
                emit[z * v + x] = hmm.emit(z, x) * kappa;
            }
            let total: f64 = rows.iter().sum::<f64>() + emit[z * v..(z + 1) * v].iter().sum::<f64>();
            for r in rows.iter_mut() {
                *r /= total;
            }
            for e in &mut emit[z * v..(z + 1) * v] {
                *e /= total;
            }
        }
        PcfgParams::new(n, v, start_binary, vec![0.0; v], binary, emit)
    }

    /// Exact embedding of an HMM with an explicit end state.
    ///
    /// The HMM's transitions are rescaled to `π'_{zw} = π_{zw} (1 - end_z)` so
    /// that `Σ_w π'_{zw} + end_z = 1`; the result has `2 N_Γ` nonterminals
    /// (`z` at index `z`, its preterminal `z̃` at `N_Γ + z`) and satisfies
    /// `P_PCFG(x) = P_HMM(x end)` for every non-empty `x`.
    pub fn strict_embed_hmm(hmm: &HmmParams, end_prob: &[f64]) -> Result<Self> {
        let s = hmm.n_states();
        if end_prob.len() != s {
            return Err(invalid("need one end probability per HMM state"));
        }
        if let Some(z) = end_prob.iter().position(|&e| !(0.0..=1.0).contains(&e)) {
            return Err(invalid(format!("end probability of state {z} is outside [0, 1]")));
        }
        let extended: Vec<f64> = (0..s)
            .flat_map(|z| (0..s).map(move |w| (z, w)))
            .map(|(z, w)| hmm.trans(z, w) * (1.0 - end_prob[z]))
            .collect();
        Self::strict_embed(s, hmm.vocab_size(), hmm.initial(), &extended, end_prob, hmm.output())
    }

    /// Builds the embedding from an already-extended transition table
    /// `π'` (row-major `N_Γ × N_Γ`) and end probabilities, checking that
    /// every extended row sums to 1.
    pub fn strict_embed(
        n_states: usize,
        vocab_size: usize,
        initial: &[f64],
        extended: &[f64],
        end_prob: &[f64],
        output: &[f64],
    ) -> Result<Self> {
        let s = n_states;
        let v = vocab_size;
        for z in 0..s {
            let sum: f64 = extended[z * s..(z + 1) * s].iter().sum::<f64>() + end_prob[z];
            if (sum - 1.0).abs() > ROW_TOLERANCE {
                return Err(Error::Normalization {
                    what: "extended HMM transition",
                    row: z,
                    sum,
                });
            }
        }
        let n = 2 * s;
        let tilde = |z: usize| s + z;
        let mut start_binary = vec![0.0; n * n];
        let mut start_emit = vec![0.0; v];
        let mut binary = vec![0.0; n * n * n];
        let mut emit = vec![0.0; n * v];
        for z in 0..s {
            for w in 0..s {
                start_binary[tilde(z) * n + w] = initial[z] * extended[z * s + w];
                binary[(z * n + tilde(z)) * n + w] = extended[z * s + w];
            }
            for x in 0..v {
                let phi = output[z * v + x];
                start_emit[x] += initial[z] * end_prob[z] * phi;
                emit[z * v + x] = end_prob[z] * phi;
                emit[tilde(z) * v + x] = phi;
            }
        }
        PcfgParams::new(n, v, start_binary, start_emit, binary, emit)
    }

    pub fn n_nonterminals(&self) -> usize {
        self.n_nonterminals
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// Whether `S → x` carries any mass; training requires it does not.
    pub fn has_start_emissions(&self) -> bool {
        self.start_emit.iter().any(|&p| p > 0.0)
    }

    fn row_len(&self) -> usize {
        self.n_nonterminals * self.n_nonterminals + self.vocab_size
    }

    pub fn start_binary(&self) -> &[f64] {
        &self.start_binary
    }

    pub fn start_emit(&self) -> &[f64] {
        &self.start_emit
    }

    pub fn binary(&self) -> &[f64] {
        &self.binary
    }

    pub fn emit(&self) -> &[f64] {
        &self.emit
    }

    /// `θ_{z→·}` as an `N_Δ × N_Δ` row-major block.
    pub fn binary_row(&self, z: usize) -> &[f64] {
        let nn = self.n_nonterminals * self.n_nonterminals;
        &self.binary[z * nn..(z + 1) * nn]
    }

    pub fn emit_row(&self, z: usize) -> &[f64] {
        &self.emit[z * self.vocab_size..(z + 1) * self.vocab_size]
    }

    /// Unnormalized `ln P(seq)` over all sequence lengths.
    pub fn log_evidence(&self, seq: &[usize]) -> f64 {
        inside(self, seq).log_evidence
    }

    /// `ln P(N)`: log-probability that the grammar yields a sequence of length `len`,
    /// by the inside recursion with every terminal cell replaced by `Σ_x ψ_{z→x}`.
    pub fn log_length_probability(&self, len: usize) -> f64 {
        assert!(len >= 1, "length must be positive");
        let n = self.n_nonterminals;
        if len == 1 {
            return self.start_emit.iter().sum::<f64>().ln();
        }
        // by_len[l]: scaled modified inside vector for spans of length l + 1
        let mut by_len: Vec<Vec<f64>> = Vec::with_capacity(len);
        let mut scale: Vec<f64> = Vec::with_capacity(len);
        let leaf: Vec<f64> = (0..n).map(|z| self.emit_row(z).iter().sum()).collect();
        let (leaf, s) = chart::rescale(leaf);
        by_len.push(leaf);
        scale.push(s);
        let mut m = vec![0.0; n * n];
        let combine = |by_len: &[Vec<f64>], scale: &[f64], l: usize, m: &mut [f64]| -> f64 {
            // spans of length l + 1 split into (a + 1) + (l - a)
            let refs = (0..l)
                .map(|a| scale[a] + scale[l - 1 - a])
                .fold(f64::NEG_INFINITY, f64::max);
            m.fill(0.0);
            if refs == f64::NEG_INFINITY {
                return refs;
            }
            for a in 0..l {
                let sc = scale[a] + scale[l - 1 - a];
                if sc == f64::NEG_INFINITY {
                    continue;
                }
                chart::outer_accumulate(m, &by_len[a], &by_len[l - 1 - a], (sc - refs).exp());
            }
            refs
        };
        for l in 1..len - 1 {
            let refs = combine(&by_len, &scale, l, &mut m);
            let vals: Vec<f64> = (0..n).map(|z| chart::dot(self.binary_row(z), &m)).collect();
            let (vals, s) = chart::rescale(vals);
            by_len.push(vals);
            scale.push(if refs == f64::NEG_INFINITY { refs } else { refs + s });
        }
        let refs = combine(&by_len, &scale, len - 1, &mut m);
        let root = chart::dot(&self.start_binary, &m);
        if refs == f64::NEG_INFINITY || root <= 0.0 {
            return f64::NEG_INFINITY;
        }
        refs + root.ln()
    }

    pub fn length_probability(&self, len: usize) -> f64 {
        self.log_length_probability(len).exp()
    }

    /// `ln P(seq) - ln P(N(seq))`: evidence normalized over sequences of the same length.
    pub fn normalized_log_evidence(&self, seq: &[usize]) -> Result<f64> {
        assert!(!seq.is_empty(), "sequence must be non-empty");
        let lp = self.log_length_probability(seq.len());
        if lp == f64::NEG_INFINITY {
            return Err(Error::ZeroLengthProbability(seq.len()));
        }
        Ok(self.log_evidence(seq) - lp)
    }

    /// `P(x_pos = y | all other symbols) ∝ Σ_z ψ_{z→y} A_{pos,pos}(z)`, `pos` zero-based.
    pub fn predict_distribution(&self, seq: &[usize], pos: usize) -> Result<Vec<f64>> {
        assert!(pos < seq.len(), "position out of range");
        let mut out = vec![0.0; self.vocab_size];
        if seq.len() == 1 {
            out.copy_from_slice(&self.start_emit);
        } else {
            let charts = outside(self, seq, inside(self, seq));
            let a = charts.outside_scaled(pos, pos);
            for (z, &az) in a.iter().enumerate() {
                if az == 0.0 {
                    continue;
                }
                for (o, &p) in out.iter_mut().zip(self.emit_row(z)) {
                    *o += az * p;
                }
            }
        }
        if normalize_in_place(&mut out) <= 0.0 {
            return Err(Error::NoCompletion { position: pos });
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// One nonterminal, one terminal `a`: `S → z z`, `z → z z` (0.4), `z → a` (0.6).
    pub(crate) fn single_terminal(kappa: f64) -> PcfgParams {
        PcfgParams::new(1, 1, vec![1.0], vec![0.0], vec![1.0 - kappa], vec![kappa]).unwrap()
    }

    #[test]
    fn random_init_is_proper() {
        let g = PcfgParams::init_random(3, 4, 9).unwrap();
        assert_eq!(g, PcfgParams::init_random(3, 4, 9).unwrap());
        g.validate().unwrap();
        assert!(!g.has_start_emissions());
        let one = PcfgParams::init_random(1, 2, 0).unwrap();
        assert_eq!(one.start_binary(), [1.0]);
    }

    #[test]
    fn hmm_init_rows_sum_to_one_without_eta() {
        let h = HmmParams::init_random(3, 5, 2).unwrap();
        let g = PcfgParams::init_from_hmm(&h, 0.6, 0.0).unwrap();
        for z in 0..3 {
            let total: f64 = g.binary_row(z).iter().sum::<f64>() + g.emit_row(z).iter().sum::<f64>();
            assert!((total - 1.0).abs() < 1e-12);
            assert!((g.emit_row(z).iter().sum::<f64>() - 0.6).abs() < 1e-12);
            // only z -> z z_R productions
            for zl in 0..3 {
                for zr in 0..3 {
                    if zl != z {
                        assert_eq!(g.binary_row(z)[zl * 3 + zr], 0.0);
                    }
                }
            }
        }
        let with_eta = PcfgParams::init_from_hmm(&h, 0.5416, 0.01 / 3.0).unwrap();
        with_eta.validate().unwrap();
        assert!(with_eta.binary_row(0)[3 + 2] > 0.0);
    }

    #[test]
    fn hmm_init_rejects_non_terminating_kappa() {
        let h = HmmParams::init_random(2, 2, 0).unwrap();
        assert!(PcfgParams::init_from_hmm(&h, 0.5, 0.0).is_err());
        assert!(PcfgParams::init_from_hmm(&h, 1.2, 0.0).is_err());
        assert!(PcfgParams::init_from_hmm(&h, 0.7, -1.0).is_err());
    }

    #[test]
    fn strict_embedding_single_state() {
        let h = HmmParams::new(1, 1, vec![1.0], vec![1.0], vec![1.0]).unwrap();
        let g = PcfgParams::strict_embed_hmm(&h, &[0.5]).unwrap();
        assert_eq!(g.n_nonterminals(), 2);
        assert!((g.log_evidence(&[0, 0]).exp() - 0.25).abs() < 1e-15);
        assert!((g.log_evidence(&[0]).exp() - 0.5).abs() < 1e-15);
        assert!(PcfgParams::strict_embed_hmm(&h, &[1.5]).is_err());
        assert!(PcfgParams::strict_embed(1, 1, &[1.0], &[0.8], &[0.5], &[1.0]).is_err());
    }

    #[test]
    fn length_probability_single_terminal() {
        let g = single_terminal(0.6);
        assert!((g.length_probability(2) - 0.36).abs() < 1e-15);
        assert!((g.length_probability(3) - 0.1728).abs() < 1e-15);
        assert_eq!(g.length_probability(1), 0.0);
        // the tail decays like 0.96^n, so 400 terms leave well under 1e-6
        let total: f64 = (2..=400).map(|n| g.length_probability(n)).sum();
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }

    #[test]
    fn normalized_evidence_single_terminal() {
        let g = single_terminal(0.6);
        assert!(g.normalized_log_evidence(&[0, 0, 0]).unwrap().abs() < 1e-12);
        assert!(matches!(g.normalized_log_evidence(&[0]), Err(Error::ZeroLengthProbability(1))));
    }

    #[test]
    fn single_terminal_predicts_its_symbol() {
        let g = single_terminal(0.6);
        assert_eq!(g.predict_distribution(&[0, 0, 0], 1).unwrap(), vec![1.0]);
        assert!(g.predict_distribution(&[0], 0).is_err());
    }
}
