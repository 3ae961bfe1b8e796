use super::HmmParams;

/// Scaled forward/backward variables for one sequence.
///
/// `alpha[n]` is `P(z_n, x_{1:n}) / (c_1 … c_n)` and `beta[n]` is
/// `P(x_{n+1:N} | z_n) / (c_{n+1} … c_N)`, so `alpha[n] · beta[n]` is the
/// posterior marginal of `z_n` and `Σ ln c_n` is the log-evidence.
#[derive(Debug, Clone)]
pub struct FbTables {
    pub n_states: usize,
    pub len: usize,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub scale: Vec<f64>,
    /// `-inf` when the sequence is impossible; the tables are then incomplete.
    pub log_evidence: f64,
}

impl FbTables {
    pub fn alpha(&self, n: usize) -> &[f64] {
        &self.alpha[n * self.n_states..(n + 1) * self.n_states]
    }

    pub fn beta(&self, n: usize) -> &[f64] {
        &self.beta[n * self.n_states..(n + 1) * self.n_states]
    }

    /// Posterior state marginal `γ_n(z)`.
    pub fn gamma(&self, n: usize) -> Vec<f64> {
        self.alpha(n).iter().zip(self.beta(n)).map(|(a, b)| a * b).collect()
    }

    /// Posterior pair marginal `ξ_n(z, w) = P(z_n = z, z_{n+1} = w | x)`, row-major.
    pub fn xi(&self, params: &HmmParams, seq: &[usize], n: usize) -> Vec<f64> {
        let s = self.n_states;
        let mut out = vec![0.0; s * s];
        let a = self.alpha(n);
        let b = self.beta(n + 1);
        let c = self.scale[n + 1];
        for z in 0..s {
            for w in 0..s {
                out[z * s + w] = a[z] * params.trans(z, w) * params.emit(w, seq[n + 1]) * b[w] / c;
            }
        }
        out
    }
}

/// Scaled forward pass only; returns `(alpha, scale, log_evidence)`.
fn forward(params: &HmmParams, seq: &[usize]) -> (Vec<f64>, Vec<f64>, f64) {
    let s = params.n_states;
    let mut alpha = vec![0.0; seq.len() * s];
    let mut scale = vec![0.0; seq.len()];
    let mut log_evidence = 0.0;
    for (n, &x) in seq.iter().enumerate() {
        let (done, rest) = alpha.split_at_mut(n * s);
        let cur = &mut rest[..s];
        if n == 0 {
            for z in 0..s {
                cur[z] = params.initial[z] * params.emit(z, x);
            }
        } else {
            let prev = &done[(n - 1) * s..];
            for (w, &a) in prev.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let row = params.transition_row(w);
                for z in 0..s {
                    cur[z] += a * row[z];
                }
            }
            for z in 0..s {
                cur[z] *= params.emit(z, x);
            }
        }
        let c: f64 = cur.iter().sum();
        scale[n] = c;
        if !(c > 0.0) {
            return (alpha, scale, f64::NEG_INFINITY);
        }
        for v in cur.iter_mut() {
            *v /= c;
        }
        log_evidence += c.ln();
    }
    (alpha, scale, log_evidence)
}

/// `ln P(seq | params)` by the scaled forward recursion.
pub fn forward_log_evidence(params: &HmmParams, seq: &[usize]) -> f64 {
    if seq.is_empty() {
        return 0.0;
    }
    forward(params, seq).2
}

/// Runs the scaled forward-backward recursions on a non-empty sequence.
pub fn forward_backward(params: &HmmParams, seq: &[usize]) -> FbTables {
    assert!(!seq.is_empty(), "forward-backward needs a non-empty sequence");
    let s = params.n_states;
    let len = seq.len();
    let (alpha, scale, log_evidence) = forward(params, seq);
    let mut beta = vec![0.0; len * s];
    if log_evidence.is_finite() {
        beta[(len - 1) * s..].fill(1.0);
        for n in (0..len - 1).rev() {
            let x = seq[n + 1];
            let (head, tail) = beta.split_at_mut((n + 1) * s);
            let next = &tail[..s];
            let cur = &mut head[n * s..];
            for z in 0..s {
                let row = params.transition_row(z);
                cur[z] = (0..s).map(|w| row[w] * params.emit(w, x) * next[w]).sum::<f64>() / scale[n + 1];
            }
        }
    }
    FbTables {
        n_states: s,
        len,
        alpha,
        beta,
        scale,
        log_evidence,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_state_uniform_emission() {
        let h = HmmParams::new(1, 2, vec![1.0], vec![1.0], vec![0.5, 0.5]).unwrap();
        let fb = forward_backward(&h, &[0, 1, 1]);
        assert!((fb.log_evidence - (1.0f64 / 8.0).ln()).abs() < 1e-15);
    }

    #[test]
    fn posteriors_normalize() {
        let h = HmmParams::init_random(3, 4, 5).unwrap();
        let seq = [0, 3, 2, 2, 1, 0, 3];
        let fb = forward_backward(&h, &seq);
        for n in 0..seq.len() {
            assert!((fb.gamma(n).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        for n in 0..seq.len() - 1 {
            let xi = fb.xi(&h, &seq, n);
            assert!((xi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            // marginalizing xi over the next state gives gamma
            let g = fb.gamma(n);
            for z in 0..3 {
                let row: f64 = xi[z * 3..(z + 1) * 3].iter().sum();
                assert!((row - g[z]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn impossible_sequence_is_negative_infinity() {
        let h = HmmParams::new(1, 2, vec![1.0], vec![1.0], vec![1.0, 0.0]).unwrap();
        assert_eq!(forward_backward(&h, &[0, 1]).log_evidence, f64::NEG_INFINITY);
        assert_eq!(forward_log_evidence(&h, &[1]), f64::NEG_INFINITY);
    }
}
