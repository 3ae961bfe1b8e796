//! Grid sweeps over sizes, seeds, training sizes and algorithms.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use chordgram::ModelFile;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::data::Prepared;
use crate::train::{log_to_csv, run_cell, Cell, ResultRow};

pub const RESULTS_FILE: &str = "results.csv";
pub const MODELS_DIR: &str = "models";

/// Cells in output order: training size, algorithm, model size, seed.
pub fn grid(config: &ExperimentConfig) -> Vec<Cell> {
    let n_trains: Vec<Option<usize>> = if config.train_sizes.is_empty() {
        vec![None]
    } else {
        config.train_sizes.iter().map(|&n| Some(n)).collect()
    };
    let mut cells = Vec::new();
    for &n_train in &n_trains {
        for algo in &config.model.algos {
            for &size in &config.sizes() {
                for &seed in &config.effective_seeds() {
                    cells.push(Cell { kind: config.model.kind, size, algo: algo.clone(), seed, n_train });
                }
            }
        }
    }
    cells
}

/// Marks, per (model, size, algo, N_X), the seed with the lowest training and
/// the lowest test perplexity. Ties go to the earlier row.
pub fn mark_best(rows: &mut [ResultRow]) {
    let mut groups: BTreeMap<(String, usize, String, usize), Vec<usize>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        if r.is_ok() {
            groups.entry((r.model.to_string(), r.size, r.algo.clone(), r.n_x)).or_default().push(i);
        }
    }
    for idx in groups.values() {
        let pick = |key: fn(&ResultRow) -> f64| {
            idx.iter()
                .copied()
                .filter(|&i| !key(&rows[i]).is_nan())
                .min_by(|&a, &b| key(&rows[a]).total_cmp(&key(&rows[b])).then(a.cmp(&b)))
        };
        let best_train = pick(|r| r.train_perplexity);
        let best_test = pick(|r| r.test_perplexity);
        if let Some(i) = best_train {
            rows[i].best_by_train = true;
        }
        if let Some(i) = best_test {
            rows[i].best_by_test = true;
        }
    }
}

pub fn rows_to_csv(rows: &[ResultRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub rows: Vec<ResultRow>,
    pub results_path: PathBuf,
}

/// Runs every cell of the grid. Cells that fail are reported in their row's
/// `status` and the sweep carries on.
pub fn sweep(config: &ExperimentConfig) -> Result<SweepOutput> {
    let prepared = Prepared::load(config)?;
    let v = prepared.vocab.len();
    let hash = prepared.vocab.hash();
    let cells = grid(config);

    let mut trains = BTreeMap::new();
    for c in &cells {
        if let std::collections::btree_map::Entry::Vacant(e) = trains.entry(c.n_train) {
            e.insert(prepared.training(c.n_train)?);
        }
    }
    let models_dir = config.out_dir.join(MODELS_DIR);
    if config.save_models {
        fs::create_dir_all(&models_dir).with_context(|| format!("creating {}", models_dir.display()))?;
    }

    let mut rows: Vec<ResultRow> = cells
        .par_iter()
        .map(|cell| {
            let train = &trains[&cell.n_train];
            let outcome = run_cell(config, cell, v, &train.sequences, &prepared.test.sequences).and_then(|(trained, row)| {
                if config.save_models {
                    let stem = models_dir.join(cell.stem());
                    fs::write(stem.with_extension("model"), ModelFile::new(trained.model, hash.clone()).to_text())?;
                    fs::write(stem.with_extension("log.csv"), log_to_csv(&trained.log))?;
                }
                Ok(row)
            });
            outcome.unwrap_or_else(|e| ResultRow::failed(cell, v, train.len(), &e))
        })
        .collect();
    mark_best(&mut rows);

    let results_path = config.out_dir.join(RESULTS_FILE);
    fs::write(&results_path, rows_to_csv(&rows)?).with_context(|| format!("writing {}", results_path.display()))?;
    Ok(SweepOutput { rows, results_path })
}
