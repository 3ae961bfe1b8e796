//! Small helpers for categorical distributions, entropies and seeded sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

/// Seeded generator used everywhere randomness is needed.
pub type SeededRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Tolerance for row-sum checks on probability tables.
pub const ROW_TOLERANCE: f64 = 1e-9;

pub(crate) fn normalize_in_place(v: &mut [f64]) -> f64 {
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        for x in v.iter_mut() {
            *x /= total;
        }
    }
    total
}

pub(crate) fn fill_uniform(v: &mut [f64]) {
    let u = 1.0 / v.len() as f64;
    v.fill(u);
}

/// Shannon entropy in nats with `0 ln 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.ln())
        .sum::<f64>()
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// Draws from a Dirichlet distribution with concentration `alpha`.
///
/// Gamma variates are drawn in log space (`G(a) = G(a + 1) U^{1/a}`) so small
/// concentrations such as 0.1 never underflow to an all-zero row.
pub fn sample_dirichlet<R: Rng + ?Sized>(rng: &mut R, alpha: &[f64], out: &mut [f64]) {
    debug_assert_eq!(alpha.len(), out.len());
    for (o, &a) in out.iter_mut().zip(alpha) {
        debug_assert!(a > 0.0);
        let g = Gamma::new(a + 1.0, 1.0).expect("positive shape");
        let u: f64 = rng.random::<f64>();
        // random::<f64>() is in [0, 1); shift to (0, 1]
        let u = 1.0 - u;
        *o = g.sample(rng).ln() + u.ln() / a;
    }
    let lse = log_sum_exp(out);
    for o in out.iter_mut() {
        *o = (*o - lse).exp();
    }
}

/// Samples an index proportional to non-negative `weights`.
///
/// Returns `None` when all weights are zero.
pub fn sample_categorical<R: Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let mut target = rng.random::<f64>() * total;
    let mut last_positive = None;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last_positive = Some(i);
            if target < w {
                return Some(i);
            }
            target -= w;
        }
    }
    last_positive
}

/// Argmax with ties resolved toward the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// One-based rank of `target` under descending probability; ties are ranked
/// lowest-id first, so a tied competitor with a smaller id outranks `target`.
pub fn rank_of(v: &[f64], target: usize) -> usize {
    let p = v[target];
    1 + v
        .iter()
        .enumerate()
        .filter(|&(i, &x)| x > p || (x == p && i < target))
        .count()
}

pub(crate) fn check_rows(
    what: &'static str,
    data: &[f64],
    row_len: usize,
) -> crate::Result<()> {
    for (row, chunk) in data.chunks(row_len).enumerate() {
        if chunk.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(crate::Error::Normalization {
                what,
                row,
                sum: f64::NAN,
            });
        }
        let sum: f64 = chunk.iter().sum();
        if (sum - 1.0).abs() > ROW_TOLERANCE {
            return Err(crate::Error::Normalization { what, row, sum });
        }
    }
    Ok(())
}
