//! k-th order Markov models with additive, interpolated Kneser-Ney and
//! modified Kneser-Ney smoothing.
//!
//! Tables are dense. A context `x_1..x_m` is indexed base-`N_Ω` with `x_1`
//! most significant, and a row `P(· | ctx)` occupies `ctx * N_Ω .. (ctx + 1) * N_Ω`.

use std::fmt;

use rand::Rng;

use crate::corpus::EncodedSequence;
use crate::dist::{check_rows, normalize_in_place, rng_from_seed, sample_categorical};
use crate::error::{invalid, Error, Result};

/// Additive constant used when Kneser-Ney statistics are degenerate.
pub const FALLBACK_EPSILON: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Smoothing {
    Additive(f64),
    KneserNey,
    ModifiedKneserNey,
}

impl fmt::Display for Smoothing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Smoothing::Additive(eps) => write!(f, "additive({eps})"),
            Smoothing::KneserNey => f.write_str("kn"),
            Smoothing::ModifiedKneserNey => f.write_str("mkn"),
        }
    }
}

impl std::str::FromStr for Smoothing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kn" => Ok(Smoothing::KneserNey),
            "mkn" => Ok(Smoothing::ModifiedKneserNey),
            "additive" => Ok(Smoothing::Additive(FALLBACK_EPSILON)),
            _ => {
                let eps = s
                    .strip_prefix("additive(")
                    .and_then(|r| r.strip_suffix(')'))
                    .and_then(|r| r.parse::<f64>().ok())
                    .ok_or_else(|| invalid(format!("unknown smoothing `{s}`")))?;
                Ok(Smoothing::Additive(eps))
            }
        }
    }
}

/// A fitted k-th order Markov model.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovModel {
    order: usize,
    vocab_size: usize,
    /// `initial[j - 1]` holds `P(x_j | x_1..x_{j-1})`, a table of size `N_Ω^j`.
    initial: Vec<Vec<f64>>,
    /// `P(x_n | x_{n-k}..x_{n-1})`, size `N_Ω^{k+1}`.
    transition: Vec<f64>,
    smoothing: Smoothing,
}

impl MarkovModel {
    /// Assembles a model from explicit tables, validating every row.
    pub fn from_tables(
        order: usize,
        vocab_size: usize,
        initial: Vec<Vec<f64>>,
        transition: Vec<f64>,
        smoothing: Smoothing,
    ) -> Result<Self> {
        if order == 0 || vocab_size == 0 {
            return Err(invalid("order and vocabulary size must be positive"));
        }
        if initial.len() != order {
            return Err(invalid("need one initial table per order"));
        }
        for (j, table) in initial.iter().enumerate() {
            if table.len() != vocab_size.pow(j as u32 + 1) {
                return Err(invalid(format!("initial table {} has wrong size", j + 1)));
            }
            check_rows("markov initial table", table, vocab_size)?;
        }
        if transition.len() != vocab_size.pow(order as u32 + 1) {
            return Err(invalid("transition table has wrong size"));
        }
        check_rows("markov transition table", &transition, vocab_size)?;
        Ok(MarkovModel {
            order,
            vocab_size,
            initial,
            transition,
            smoothing,
        })
    }

    /// Fits the model on `train`.
    pub fn fit(
        train: &[EncodedSequence],
        vocab_size: usize,
        order: usize,
        smoothing: Smoothing,
    ) -> Result<Self> {
        if order == 0 {
            return Err(invalid("Markov order must be at least 1"));
        }
        if vocab_size == 0 {
            return Err(invalid("vocabulary must be non-empty"));
        }
        if train.iter().all(|s| s.is_empty()) {
            return Err(Error::EmptyData);
        }
        if let Smoothing::Additive(eps) = smoothing {
            if !(eps > 0.0) {
                return Err(invalid("additive constant must be positive"));
            }
        }
        if let Some(bad) = train.iter().flatten().find(|&&x| x >= vocab_size) {
            return Err(invalid(format!("symbol id {bad} out of range")));
        }
        let counts = Counts::collect(train, vocab_size, order);
        let (initial, transition) = match smoothing {
            Smoothing::Additive(eps) => {
                let initial = (1..=order)
                    .map(|j| additive_table(&counts.prefix[j], vocab_size, eps))
                    .collect();
                (initial, additive_table(&counts.ngram[order + 1], vocab_size, eps))
            }
            Smoothing::KneserNey | Smoothing::ModifiedKneserNey => {
                kneser_ney_tables(&counts, smoothing == Smoothing::ModifiedKneserNey)
            }
        };
        Ok(MarkovModel {
            order,
            vocab_size,
            initial,
            transition,
            smoothing,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn smoothing(&self) -> Smoothing {
        self.smoothing
    }

    pub fn initial_tables(&self) -> &[Vec<f64>] {
        &self.initial
    }

    pub fn transition_table(&self) -> &[f64] {
        &self.transition
    }

    /// Probability of `seq[pos]` given the symbols before it.
    pub fn conditional(&self, seq: &[usize], pos: usize) -> f64 {
        let v = self.vocab_size;
        let (table, start) = if pos < self.order {
            (&self.initial[pos], 0)
        } else {
            (&self.transition, pos - self.order)
        };
        let idx = seq[start..=pos].iter().fold(0, |acc, &x| acc * v + x);
        table[idx]
    }

    /// Natural-log probability of the whole sequence.
    pub fn log_evidence(&self, seq: &[usize]) -> f64 {
        (0..seq.len()).map(|n| self.conditional(seq, n).ln()).sum()
    }

    /// `P(x_pos = y | all other symbols)` for every `y`, with `pos` zero-based.
    ///
    /// Only the factors whose window contains `pos` depend on `y`.
    pub fn predict_distribution(&self, seq: &[usize], pos: usize) -> Vec<f64> {
        assert!(pos < seq.len(), "position out of range");
        let last = (pos + self.order).min(seq.len() - 1);
        let mut work = seq.to_vec();
        let mut out: Vec<f64> = (0..self.vocab_size)
            .map(|y| {
                work[pos] = y;
                (pos..=last).map(|n| self.conditional(&work, n)).product()
            })
            .collect();
        normalize_in_place(&mut out);
        out
    }

    /// Ancestral sampling of a length-`len` sequence.
    pub fn sample_sequence(&self, len: usize, seed: u64) -> Vec<usize> {
        let mut rng = rng_from_seed(seed);
        self.sample_with(len, &mut rng)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> Vec<usize> {
        let v = self.vocab_size;
        let mut seq = Vec::with_capacity(len);
        for pos in 0..len {
            let (table, start) = if pos < self.order {
                (&self.initial[pos], 0)
            } else {
                (&self.transition, pos - self.order)
            };
            let ctx = seq[start..pos].iter().fold(0, |acc, &x| acc * v + x);
            let row = &table[ctx * v..(ctx + 1) * v];
            seq.push(sample_categorical(rng, row).expect("rows are normalized"));
        }
        seq
    }
}

/// Raw n-gram and sequence-prefix counts.
struct Counts {
    vocab_size: usize,
    /// `ngram[m]`: counts of every contiguous m-gram, m in 1..=k+1 (index 0 unused).
    ngram: Vec<Vec<f64>>,
    /// `prefix[j]`: counts of sequence prefixes of length j, j in 1..=k (index 0 unused).
    prefix: Vec<Vec<f64>>,
}

impl Counts {
    fn collect(train: &[EncodedSequence], v: usize, order: usize) -> Self {
        let mut ngram: Vec<Vec<f64>> = (0..=order + 1).map(|m| vec![0.0; v.pow(m as u32)]).collect();
        let mut prefix: Vec<Vec<f64>> = (0..=order).map(|m| vec![0.0; v.pow(m as u32)]).collect();
        ngram[0].clear();
        prefix[0].clear();
        for seq in train {
            for end in 0..seq.len() {
                let mut idx = 0;
                for m in 1..=(order + 1).min(end + 1) {
                    // m-gram ending at `end`
                    let start = end + 1 - m;
                    idx += seq[start] * v.pow(m as u32 - 1);
                    ngram[m][idx] += 1.0;
                }
            }
            let mut idx = 0;
            for (j, &x) in seq.iter().take(order).enumerate() {
                idx = idx * v + x;
                prefix[j + 1][idx] += 1.0;
            }
        }
        Counts {
            vocab_size: v,
            ngram,
            prefix,
        }
    }

    /// Continuation counts `N1+(• g)` for every m-gram `g`.
    fn continuation(&self, m: usize) -> Vec<f64> {
        let v = self.vocab_size;
        let size = v.pow(m as u32);
        let longer = &self.ngram[m + 1];
        let mut out = vec![0.0; size];
        for (idx, &c) in longer.iter().enumerate() {
            if c > 0.0 {
                out[idx % size] += 1.0;
            }
        }
        out
    }
}

fn additive_table(counts: &[f64], v: usize, eps: f64) -> Vec<f64> {
    let mut table = Vec::with_capacity(counts.len());
    for row in counts.chunks(v) {
        let total: f64 = row.iter().sum();
        let denom = total + eps * v as f64;
        table.extend(row.iter().map(|&c| (c + eps) / denom));
    }
    table
}

/// Discounts applied to counts of 1, 2 and 3+.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Discounts([f64; 3]);

impl Discounts {
    fn for_count(&self, c: f64) -> f64 {
        if c >= 3.0 {
            self.0[2]
        } else if c >= 2.0 {
            self.0[1]
        } else {
            self.0[0]
        }
    }

    /// Chen-Goodman discounts from counts-of-counts. `None` when no count of 1
    /// exists, which makes `n1 / (n1 + 2 n2)` zero or undefined.
    fn estimate(counts: &[f64], modified: bool) -> Option<Discounts> {
        let mut n = [0.0f64; 5];
        for &c in counts {
            if (1.0..=4.0).contains(&c) {
                n[c as usize] += 1.0;
            }
        }
        if n[1] == 0.0 {
            return None;
        }
        let y = n[1] / (n[1] + 2.0 * n[2]);
        if !modified {
            return Some(Discounts([y; 3]));
        }
        let mut d = [y; 3];
        for i in 1..=3 {
            if n[i] > 0.0 {
                let di = i as f64 - (i as f64 + 1.0) * y * n[i + 1] / n[i];
                // an out-of-range estimate keeps the single-discount value
                if di > 0.0 && di <= i as f64 {
                    d[i - 1] = di;
                }
            }
        }
        Some(Discounts(d))
    }
}

/// One interpolated row: `(max(c - D, 0) + γ · lower) / total`.
fn interpolate_row(row: &[f64], lower: &[f64], d: Discounts, out: &mut [f64]) {
    let total: f64 = row.iter().sum();
    if total == 0.0 {
        out.copy_from_slice(lower);
        return;
    }
    let mass: f64 = row.iter().filter(|&&c| c > 0.0).map(|&c| d.for_count(c).min(c)).sum();
    for ((o, &c), &p) in out.iter_mut().zip(row).zip(lower) {
        let disc = if c > 0.0 { (c - d.for_count(c)).max(0.0) } else { 0.0 };
        *o = (disc + mass * p) / total;
    }
}

/// Builds one smoothed level. Degenerate statistics fall back to additive smoothing.
fn kn_level(counts: &[f64], lower: &[f64], v: usize, d: Option<Discounts>) -> Vec<f64> {
    let Some(d) = d else {
        return additive_table(counts, v, FALLBACK_EPSILON);
    };
    let lower_size = lower.len() / v;
    let mut table = vec![0.0; counts.len()];
    for (ctx, (row, out)) in counts.chunks(v).zip(table.chunks_mut(v)).enumerate() {
        // the lower-order context drops the oldest symbol
        let lctx = ctx % lower_size;
        interpolate_row(row, &lower[lctx * v..(lctx + 1) * v], d, out);
    }
    table
}

fn kneser_ney_tables(counts: &Counts, modified: bool) -> (Vec<Vec<f64>>, Vec<f64>) {
    let v = counts.vocab_size;
    let order = counts.ngram.len() - 2;
    // levels[m]: P_m(w | previous m-1 symbols); level 0 is uniform
    let mut levels: Vec<Vec<f64>> = vec![vec![1.0 / v as f64; v]];
    let mut level_discounts: Vec<Option<Discounts>> = vec![None];
    for m in 1..=order + 1 {
        let level_counts = if m == order + 1 {
            counts.ngram[m].clone()
        } else {
            counts.continuation(m)
        };
        let d = Discounts::estimate(&level_counts, modified);
        let table = kn_level(&level_counts, &levels[m - 1], v, d);
        levels.push(table);
        level_discounts.push(d);
    }
    let initial = (1..=order)
        .map(|j| {
            let prefix = &counts.prefix[j];
            let d = Discounts::estimate(prefix, modified).or(level_discounts[j]);
            // the prefix table backs off to the same-length general context
            let lower = &levels[j];
            let mut table = vec![0.0; prefix.len()];
            match d {
                Some(d) => {
                    for ((row, low), out) in prefix.chunks(v).zip(lower.chunks(v)).zip(table.chunks_mut(v)) {
                        interpolate_row(row, low, d, out);
                    }
                    table
                }
                None => additive_table(prefix, v, FALLBACK_EPSILON),
            }
        })
        .collect();
    let transition = levels.pop().expect("at least one level");
    (initial, transition)
}
