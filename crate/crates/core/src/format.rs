//! Versioned plain-text model files.
//!
//! ```text
//! #chordgram-model v1
//! kind hmm
//! vocab_hash 3f2a9c0d11b7e845
//! vocab_size 3
//! n_states 2
//! table initial 1 2
//! 0.5 0.5
//! ...
//! ```
//!
//! Header lines are `key value`; each `table name rows cols` line is followed by
//! `rows` lines of `cols` decimal numbers. Numbers use Rust's shortest
//! round-trip formatting, so reading a file back reproduces the model exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::eval::{ModelKind, SequenceModel};
use crate::hmm::HmmParams;
use crate::markov::{MarkovModel, Smoothing};
use crate::pcfg::PcfgParams;

pub const MODEL_HEADER: &str = "#chordgram-model v1";

/// Any of the three model families.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    Markov(MarkovModel),
    Hmm(HmmParams),
    Pcfg(PcfgParams),
}

impl AnyModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            AnyModel::Markov(_) => ModelKind::Markov,
            AnyModel::Hmm(_) => ModelKind::Hmm,
            AnyModel::Pcfg(_) => ModelKind::Pcfg,
        }
    }

    /// Order `k`, `N_Γ` or `N_Δ`.
    pub fn size(&self) -> usize {
        match self {
            AnyModel::Markov(m) => m.order(),
            AnyModel::Hmm(h) => h.n_states(),
            AnyModel::Pcfg(g) => g.n_nonterminals(),
        }
    }

    pub fn as_sequence_model(&self) -> &dyn SequenceModel {
        match self {
            AnyModel::Markov(m) => m,
            AnyModel::Hmm(h) => h,
            AnyModel::Pcfg(g) => g,
        }
    }
}

impl From<MarkovModel> for AnyModel {
    fn from(m: MarkovModel) -> Self {
        AnyModel::Markov(m)
    }
}

impl From<HmmParams> for AnyModel {
    fn from(h: HmmParams) -> Self {
        AnyModel::Hmm(h)
    }
}

impl From<PcfgParams> for AnyModel {
    fn from(g: PcfgParams) -> Self {
        AnyModel::Pcfg(g)
    }
}

/// A model together with the hash of the vocabulary it was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub model: AnyModel,
    pub vocab_hash: String,
}

fn write_table(out: &mut String, name: &str, data: &[f64], cols: usize) {
    let rows = data.len() / cols;
    writeln!(out, "table {name} {rows} {cols}").unwrap();
    for row in data.chunks(cols) {
        let line: Vec<String> = row.iter().map(|x| x.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
}

impl ModelFile {
    pub fn new(model: impl Into<AnyModel>, vocab_hash: impl Into<String>) -> Self {
        ModelFile {
            model: model.into(),
            vocab_hash: vocab_hash.into(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(MODEL_HEADER);
        out.push('\n');
        writeln!(out, "kind {}", self.model.kind()).unwrap();
        writeln!(out, "vocab_hash {}", self.vocab_hash).unwrap();
        match &self.model {
            AnyModel::Markov(m) => {
                let v = m.vocab_size();
                writeln!(out, "vocab_size {v}").unwrap();
                writeln!(out, "order {}", m.order()).unwrap();
                writeln!(out, "smoothing {}", m.smoothing()).unwrap();
                for (j, table) in m.initial_tables().iter().enumerate() {
                    write_table(&mut out, &format!("initial{}", j + 1), table, v);
                }
                write_table(&mut out, "transition", m.transition_table(), v);
            }
            AnyModel::Hmm(h) => {
                let s = h.n_states();
                writeln!(out, "vocab_size {}", h.vocab_size()).unwrap();
                writeln!(out, "n_states {s}").unwrap();
                write_table(&mut out, "initial", h.initial(), s);
                write_table(&mut out, "transition", h.transition(), s);
                write_table(&mut out, "output", h.output(), h.vocab_size());
            }
            AnyModel::Pcfg(g) => {
                let n = g.n_nonterminals();
                let v = g.vocab_size();
                writeln!(out, "vocab_size {v}").unwrap();
                writeln!(out, "n_nonterminals {n}").unwrap();
                write_table(&mut out, "start_binary", g.start_binary(), n * n);
                write_table(&mut out, "start_emit", g.start_emit(), v);
                write_table(&mut out, "binary", g.binary(), n * n);
                write_table(&mut out, "emit", g.emit(), v);
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut parsed = Parsed::parse(text)?;
        let kind: ModelKind = parsed.header("kind")?.parse().map_err(|e: Error| fmt_err(2, e.to_string()))?;
        let vocab_hash = parsed.header("vocab_hash")?.to_string();
        let v = parsed.number("vocab_size")?;
        let model = match kind {
            ModelKind::Markov => {
                let order = parsed.number("order")?;
                let smoothing: Smoothing = parsed
                    .header("smoothing")?
                    .parse()
                    .map_err(|e: Error| fmt_err(0, e.to_string()))?;
                let initial = (1..=order)
                    .map(|j| parsed.table(&format!("initial{j}"), v))
                    .collect::<Result<Vec<_>>>()?;
                let transition = parsed.table("transition", v)?;
                AnyModel::Markov(MarkovModel::from_tables(order, v, initial, transition, smoothing)?)
            }
            ModelKind::Hmm => {
                let s = parsed.number("n_states")?;
                let initial = parsed.table("initial", s)?;
                let transition = parsed.table("transition", s)?;
                let output = parsed.table("output", v)?;
                AnyModel::Hmm(HmmParams::new(s, v, initial, transition, output)?)
            }
            ModelKind::Pcfg => {
                let n = parsed.number("n_nonterminals")?;
                let start_binary = parsed.table("start_binary", n * n)?;
                let start_emit = parsed.table("start_emit", v)?;
                let binary = parsed.table("binary", n * n)?;
                let emit = parsed.table("emit", v)?;
                AnyModel::Pcfg(PcfgParams::new(n, v, start_binary, start_emit, binary, emit)?)
            }
        };
        if let Some(name) = parsed.tables.keys().next() {
            return Err(fmt_err(parsed.tables[name].0, format!("unexpected table `{name}`")));
        }
        Ok(ModelFile { model, vocab_hash })
    }
}

fn fmt_err(line: usize, message: impl Into<String>) -> Error {
    Error::Format {
        line,
        message: message.into(),
    }
}

struct Parsed<'a> {
    headers: BTreeMap<&'a str, (usize, &'a str)>,
    /// name → (line of the `table` line, cols, values)
    tables: BTreeMap<&'a str, (usize, usize, Vec<f64>)>,
}

impl<'a> Parsed<'a> {
    fn parse(text: &'a str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, l)) if l.trim_end() == MODEL_HEADER => {}
            _ => return Err(fmt_err(1, format!("expected `{MODEL_HEADER}`"))),
        }
        let mut headers = BTreeMap::new();
        let mut tables = BTreeMap::new();
        while let Some((no, line)) = lines.next() {
            if line.trim().is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once(' ')
                .ok_or_else(|| fmt_err(no, "expected `key value`"))?;
            if key != "table" {
                if headers.insert(key, (no, value.trim())).is_some() {
                    return Err(fmt_err(no, format!("duplicate key `{key}`")));
                }
                continue;
            }
            let parts: Vec<&str> = value.split_whitespace().collect();
            let [name, rows, cols] = parts[..] else {
                return Err(fmt_err(no, "expected `table name rows cols`"));
            };
            let rows: usize = rows.parse().map_err(|_| fmt_err(no, "bad row count"))?;
            let cols: usize = cols.parse().map_err(|_| fmt_err(no, "bad column count"))?;
            let mut values = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let (rno, row) = lines.next().ok_or_else(|| fmt_err(no, format!("table `{name}` is truncated")))?;
                let before = values.len();
                for tok in row.split_whitespace() {
                    let x: f64 = tok.parse().map_err(|_| fmt_err(rno, format!("bad number `{tok}`")))?;
                    values.push(x);
                }
                if values.len() - before != cols {
                    return Err(fmt_err(rno, format!("expected {cols} values")));
                }
            }
            if tables.insert(name, (no, cols, values)).is_some() {
                return Err(fmt_err(no, format!("duplicate table `{name}`")));
            }
        }
        Ok(Parsed { headers, tables })
    }

    fn header(&self, key: &str) -> Result<&'a str> {
        self.headers
            .get(key)
            .map(|&(_, v)| v)
            .ok_or_else(|| fmt_err(0, format!("missing `{key}`")))
    }

    fn number(&self, key: &str) -> Result<usize> {
        let (line, v) = *self
            .headers
            .get(key)
            .ok_or_else(|| fmt_err(0, format!("missing `{key}`")))?;
        v.parse().map_err(|_| fmt_err(line, format!("`{key}` must be a non-negative integer")))
    }

    /// Removes and returns a table, checking its width.
    fn table(&mut self, name: &str, cols: usize) -> Result<Vec<f64>> {
        let (line, c, values) = self
            .tables
            .remove(name)
            .ok_or_else(|| fmt_err(0, format!("missing table `{name}`")))?;
        if c != cols {
            return Err(fmt_err(line, format!("table `{name}` must have {cols} columns")));
        }
        Ok(values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn round_trip(model: AnyModel) {
        let file = ModelFile::new(model, "0123456789abcdef");
        let text = file.to_text();
        let back = ModelFile::from_text(&text).unwrap();
        assert_eq!(back, file);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn all_kinds_round_trip() {
        let train = vec![vec![0, 1, 2, 1], vec![2, 0]];
        for s in [Smoothing::Additive(0.1), Smoothing::KneserNey, Smoothing::ModifiedKneserNey] {
            round_trip(MarkovModel::fit(&train, 3, 2, s).unwrap().into());
        }
        round_trip(HmmParams::init_random(3, 4, 1).unwrap().into());
        round_trip(PcfgParams::init_random(2, 4, 1).unwrap().into());
    }

    #[test]
    fn rejects_bad_files() {
        assert!(ModelFile::from_text("kind hmm\n").is_err());
        let good = ModelFile::new(HmmParams::init_random(2, 2, 0).unwrap(), "x").to_text();
        let truncated: String = good.lines().take(7).map(|l| format!("{l}\n")).collect();
        assert!(ModelFile::from_text(&truncated).is_err());
        let bad_number = good.replacen("table initial 1 2\n", "table initial 1 2\nzero ", 1);
        assert!(matches!(ModelFile::from_text(&bad_number), Err(Error::Format { .. })));
        let unnormalized = good.replacen("kind hmm", "kind pcfg", 1);
        assert!(ModelFile::from_text(&unnormalized).is_err());
    }
}
