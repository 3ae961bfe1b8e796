//! Inside and outside charts in linear space with one log-scale per span.
//!
//! The true inside value is `B_{ij}(z) = inside[ij][z] · exp(inside_scale[ij])`
//! where each span's stored vector has maximum entry 1 (or is all zero with
//! scale `-inf`). Outside values are stored the same way.

use super::PcfgParams;

#[derive(Debug, Clone)]
pub struct Charts {
    pub len: usize,
    pub n_nonterminals: usize,
    inside: Vec<f64>,
    inside_scale: Vec<f64>,
    outside: Vec<f64>,
    outside_scale: Vec<f64>,
    /// `ln P(seq)`; `-inf` when the grammar cannot derive the sequence.
    pub log_evidence: f64,
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `m[l * n + r] += f · left[l] · right[r]`.
#[inline]
pub(crate) fn outer_accumulate(m: &mut [f64], left: &[f64], right: &[f64], f: f64) {
    let n = right.len();
    for (l, &bl) in left.iter().enumerate() {
        let a = f * bl;
        if a == 0.0 {
            continue;
        }
        for (mv, &br) in m[l * n..(l + 1) * n].iter_mut().zip(right) {
            *mv += a * br;
        }
    }
}

/// Divides by the maximum entry; returns the vector and `ln max` (`-inf` if all zero).
pub(crate) fn rescale(mut v: Vec<f64>) -> (Vec<f64>, f64) {
    let max = v.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        v.fill(0.0);
        return (v, f64::NEG_INFINITY);
    }
    for x in v.iter_mut() {
        *x /= max;
    }
    (v, max.ln())
}

impl Charts {
    #[inline]
    fn span(&self, i: usize, j: usize) -> usize {
        i * self.len + j
    }

    pub fn inside_scaled(&self, i: usize, j: usize) -> &[f64] {
        let s = self.span(i, j) * self.n_nonterminals;
        &self.inside[s..s + self.n_nonterminals]
    }

    pub fn inside_log_scale(&self, i: usize, j: usize) -> f64 {
        self.inside_scale[self.span(i, j)]
    }

    /// `B_{ij}(z) = P(z ⇒ x_i..x_j)`, zero-based inclusive span.
    pub fn inside_value(&self, i: usize, j: usize, z: usize) -> f64 {
        let b = self.inside_scaled(i, j)[z];
        if b == 0.0 {
            0.0
        } else {
            b * self.inside_log_scale(i, j).exp()
        }
    }

    pub fn has_outside(&self) -> bool {
        !self.outside.is_empty()
    }

    pub fn outside_scaled(&self, i: usize, j: usize) -> &[f64] {
        assert!(self.has_outside(), "outside pass has not been run");
        let s = self.span(i, j) * self.n_nonterminals;
        &self.outside[s..s + self.n_nonterminals]
    }

    pub fn outside_log_scale(&self, i: usize, j: usize) -> f64 {
        self.outside_scale[self.span(i, j)]
    }

    /// `A_{ij}(z) = P(S ⇒ x_{<i} z x_{>j})`.
    pub fn outside_value(&self, i: usize, j: usize, z: usize) -> f64 {
        let a = self.outside_scaled(i, j)[z];
        if a == 0.0 {
            0.0
        } else {
            a * self.outside_log_scale(i, j).exp()
        }
    }

    /// Accumulates `Σ_k B_{ik} ⊗ B_{k+1,j}` (scaled) into `m`; returns its log-scale.
    pub(crate) fn split_matrix(&self, i: usize, j: usize, m: &mut [f64]) -> f64 {
        m.fill(0.0);
        let refs = (i..j)
            .map(|k| self.inside_log_scale(i, k) + self.inside_log_scale(k + 1, j))
            .fold(f64::NEG_INFINITY, f64::max);
        if refs == f64::NEG_INFINITY {
            return refs;
        }
        for k in i..j {
            let sc = self.inside_log_scale(i, k) + self.inside_log_scale(k + 1, j);
            if sc == f64::NEG_INFINITY {
                continue;
            }
            outer_accumulate(m, self.inside_scaled(i, k), self.inside_scaled(k + 1, j), (sc - refs).exp());
        }
        refs
    }
}

/// Inside pass. `O(N³ N_Δ² + N² N_Δ³)` time.
pub fn inside(params: &PcfgParams, seq: &[usize]) -> Charts {
    assert!(!seq.is_empty(), "inside needs a non-empty sequence");
    let len = seq.len();
    let n = params.n_nonterminals();
    let mut charts = Charts {
        len,
        n_nonterminals: n,
        inside: vec![0.0; len * len * n],
        inside_scale: vec![f64::NEG_INFINITY; len * len],
        outside: Vec::new(),
        outside_scale: Vec::new(),
        log_evidence: f64::NEG_INFINITY,
    };
    for (i, &x) in seq.iter().enumerate() {
        let leaf: Vec<f64> = (0..n).map(|z| params.emit_row(z)[x]).collect();
        store_inside(&mut charts, i, i, leaf, 0.0);
    }
    let mut m = vec![0.0; n * n];
    for width in 2..=len {
        for i in 0..=len - width {
            let j = i + width - 1;
            let refs = charts.split_matrix(i, j, &mut m);
            if refs == f64::NEG_INFINITY {
                continue;
            }
            let vals: Vec<f64> = (0..n).map(|z| dot(params.binary_row(z), &m)).collect();
            store_inside(&mut charts, i, j, vals, refs);
        }
    }
    charts.log_evidence = if len == 1 {
        params.start_emit()[seq[0]].ln()
    } else {
        let refs = charts.split_matrix(0, len - 1, &mut m);
        let root = dot(params.start_binary(), &m);
        if refs == f64::NEG_INFINITY || root <= 0.0 {
            f64::NEG_INFINITY
        } else {
            refs + root.ln()
        }
    };
    charts
}

fn store_inside(charts: &mut Charts, i: usize, j: usize, vals: Vec<f64>, base: f64) {
    let (vals, s) = rescale(vals);
    let span = charts.span(i, j);
    let n = charts.n_nonterminals;
    charts.inside[span * n..(span + 1) * n].copy_from_slice(&vals);
    charts.inside_scale[span] = if s == f64::NEG_INFINITY { s } else { base + s };
}

/// Outside pass over a chart produced by [`inside`] for the same grammar and sequence.
///
/// `A_{ij}` only depends on the inside values of spans disjoint from `i..=j`.
pub fn outside(params: &PcfgParams, seq: &[usize], mut charts: Charts) -> Charts {
    let len = seq.len();
    assert_eq!(charts.len, len, "chart does not belong to this sequence");
    let n = charts.n_nonterminals;
    charts.outside = vec![0.0; len * len * n];
    charts.outside_scale = vec![f64::NEG_INFINITY; len * len];
    if len == 1 {
        return charts;
    }
    // g[span] = Σ_z Â_span(z) θ_{z→··}, the parent's contribution matrix
    let mut g = vec![0.0; len * len * n * n];
    let mut terms: Vec<(f64, Vec<f64>)> = Vec::new();
    for width in (1..len).rev() {
        for i in 0..=len - width {
            let j = i + width - 1;
            terms.clear();
            // as left child, sibling (j+1..=k) under parent (i..=k)
            for k in j + 1..len {
                let sib = charts.inside_log_scale(j + 1, k);
                if sib == f64::NEG_INFINITY {
                    continue;
                }
                let (pscale, pg) = if i == 0 && k == len - 1 {
                    (0.0, params.start_binary())
                } else {
                    let sp = charts.span(i, k);
                    (charts.outside_scale[sp], &g[sp * n * n..(sp + 1) * n * n])
                };
                if pscale == f64::NEG_INFINITY {
                    continue;
                }
                let b = charts.inside_scaled(j + 1, k);
                let v: Vec<f64> = (0..n).map(|zl| dot(&pg[zl * n..(zl + 1) * n], b)).collect();
                terms.push((pscale + sib, v));
            }
            // as right child, sibling (h..i) under parent (h..=j)
            for h in 0..i {
                let sib = charts.inside_log_scale(h, i - 1);
                if sib == f64::NEG_INFINITY {
                    continue;
                }
                let (pscale, pg) = if h == 0 && j == len - 1 {
                    (0.0, params.start_binary())
                } else {
                    let sp = charts.span(h, j);
                    (charts.outside_scale[sp], &g[sp * n * n..(sp + 1) * n * n])
                };
                if pscale == f64::NEG_INFINITY {
                    continue;
                }
                let b = charts.inside_scaled(h, i - 1);
                let mut v = vec![0.0; n];
                for (zl, &bl) in b.iter().enumerate() {
                    if bl == 0.0 {
                        continue;
                    }
                    for (vr, &gv) in v.iter_mut().zip(&pg[zl * n..(zl + 1) * n]) {
                        *vr += bl * gv;
                    }
                }
                terms.push((pscale + sib, v));
            }
            let refs = terms.iter().map(|t| t.0).fold(f64::NEG_INFINITY, f64::max);
            if refs == f64::NEG_INFINITY {
                continue;
            }
            let mut acc = vec![0.0; n];
            for (sc, v) in &terms {
                let f = (sc - refs).exp();
                for (a, x) in acc.iter_mut().zip(v) {
                    *a += f * x;
                }
            }
            let (acc, s) = rescale(acc);
            let span = charts.span(i, j);
            if s == f64::NEG_INFINITY {
                continue;
            }
            charts.outside_scale[span] = refs + s;
            charts.outside[span * n..(span + 1) * n].copy_from_slice(&acc);
            if width > 1 {
                let gm = &mut g[span * n * n..(span + 1) * n * n];
                for (z, &a) in acc.iter().enumerate() {
                    if a == 0.0 {
                        continue;
                    }
                    for (gv, &t) in gm.iter_mut().zip(params.binary_row(z)) {
                        *gv += a * t;
                    }
                }
            }
        }
    }
    charts
}
