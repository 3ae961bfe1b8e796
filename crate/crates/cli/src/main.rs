use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use chordgram::{ModelFile, ModelKind};
use chordgram_cli::analyze::{analyze, DEFAULT_THRESHOLD, DEFAULT_TOP};
use chordgram_cli::config::{algos_fit_kind, default_algos, ExperimentConfig, PcfgInit};
use chordgram_cli::data::{load_vocab, prepare, Prepared};
use chordgram_cli::generate::generate;
use chordgram_cli::sweep::{sweep, MODELS_DIR};
use chordgram_cli::train::{log_to_csv, run_cell, Cell};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "chordgram", version, about = "Train and compare Markov, HMM and PCFG models of chord sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Config file plus per-field overrides.
#[derive(Args, Debug, Default)]
struct ConfigArgs {
    /// TOML experiment config; defaults apply to anything it leaves out.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Number of most frequent symbols kept (K).
    #[arg(long)]
    vocab_size: Option<usize>,
    #[arg(long)]
    test_count: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    train_sizes: Option<Vec<usize>>,
    #[arg(long)]
    data_seed: Option<u64>,
    #[arg(long)]
    min_length: Option<usize>,
    #[arg(long)]
    kind: Option<ModelKind>,
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    algos: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    pcfg_init: Option<String>,
    #[arg(long)]
    pcfg_max_length: Option<usize>,
    /// Write 0 instead of the measured wall time, making results byte-reproducible.
    #[arg(long)]
    no_wall_time: bool,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($field:ident => $($target:tt)+) => {
                if let Some(v) = &self.$field {
                    c.$($target)+ = v.clone();
                }
            };
        }
        set!(corpus => corpus);
        set!(out_dir => out_dir);
        set!(vocab_size => vocab_size);
        set!(test_count => test_count);
        set!(train_sizes => train_sizes);
        set!(data_seed => data_seed);
        set!(min_length => min_length);
        set!(kind => model.kind);
        set!(sizes => model.sizes);
        set!(algos => model.algos);
        set!(seeds => model.seeds);
        set!(pcfg_max_length => hyper.pcfg_max_length);
        if let Some(init) = &self.pcfg_init {
            c.hyper.pcfg_init = match init.as_str() {
                "random" => PcfgInit::Random,
                "hmm" => PcfgInit::Hmm,
                other => bail!("unknown pcfg_init `{other}` (expected random or hmm)"),
            };
        }
        if self.kind.is_some() && self.algos.is_none() && !algos_fit_kind(&c.model.algos, c.model.kind) {
            c.model.algos = default_algos(c.model.kind);
        }
        if self.no_wall_time {
            c.record_wall_time = false;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build the vocabulary, split the corpus and write the training subsets.
    Prepare(ConfigArgs),
    /// Train and evaluate one cell of the grid.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Markov order, number of HMM states or number of nonterminals.
        #[arg(long)]
        size: usize,
        #[arg(long)]
        algo: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Training subset size; the full training set when omitted.
        #[arg(long)]
        n_train: Option<usize>,
        /// Model file; defaults to `<out_dir>/models/<cell>.model`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the whole grid and write results.csv.
    Sweep(ConfigArgs),
    /// Report the latent structure of an HMM or PCFG model as JSON.
    Analyze {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOP)]
        top: usize,
        /// Production rules at or below this probability are omitted.
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
    },
    /// Sample sequences from a trained model.
    Generate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Sequence length; required for Markov models and HMMs, rejected for grammars.
        #[arg(long)]
        length: Option<usize>,
        /// Print derivation trees instead of plain sequences (grammars only).
        #[arg(long)]
        trees: bool,
    },
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn load_model(path: &PathBuf, vocab: &chordgram::Vocabulary) -> Result<ModelFile> {
    let text = fs::read_to_string(path).with_context(|| format!("reading model {}", path.display()))?;
    let file = ModelFile::from_text(&text).with_context(|| format!("parsing model {}", path.display()))?;
    if file.vocab_hash != vocab.hash() {
        bail!(
            "model {} was trained on vocabulary {} but {} was given",
            path.display(),
            file.vocab_hash,
            vocab.hash()
        );
    }
    Ok(file)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare(args) => {
            let config = args.resolve()?;
            print_json(&prepare(&config)?)
        }
        Command::Train { config, size, algo, seed, n_train, output } => {
            let config = config.resolve()?;
            let prepared = Prepared::load(&config)?;
            let cell = Cell { kind: config.model.kind, size, algo, seed, n_train };
            let train = prepared.training(n_train)?;
            let (trained, row) = run_cell(&config, &cell, prepared.vocab.len(), &train.sequences, &prepared.test.sequences)?;
            let path = output.unwrap_or_else(|| config.out_dir.join(MODELS_DIR).join(format!("{}.model", cell.stem())));
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(&path, ModelFile::new(trained.model, prepared.vocab.hash()).to_text())?;
            fs::write(path.with_extension("log.csv"), log_to_csv(&trained.log))?;
            print_json(&row)
        }
        Command::Sweep(args) => {
            let config = args.resolve()?;
            let out = sweep(&config)?;
            let failed = out.rows.iter().filter(|r| !r.is_ok()).count();
            print_json(&serde_json::json!({
                "results": out.results_path,
                "rows": out.rows.len(),
                "failed": failed,
            }))
        }
        Command::Analyze { model, vocab, top, threshold } => {
            let vocab = load_vocab(&vocab)?;
            let file = load_model(&model, &vocab)?;
            print_json(&analyze(&file.model, &vocab, top, threshold)?)
        }
        Command::Generate { model, vocab, count, seed, length, trees } => {
            let vocab = load_vocab(&vocab)?;
            let file = load_model(&model, &vocab)?;
            if trees && file.model.kind() != ModelKind::Pcfg {
                bail!("--trees needs a grammar model");
            }
            for g in generate(&file.model, &vocab, count, seed, length)? {
                match (trees, g.tree) {
                    (true, Some(t)) => println!("{t}"),
                    _ => println!("{}", g.symbols.join(" ")),
                }
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = serde_json::json!({ "error": format!("{e:#}") });
            eprintln!("{msg}");
            ExitCode::FAILURE
        }
    }
}
