mod run_config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use run_config::{parse_splits, RunConfig};
use topiclabel::corpus::{read_corpus_all, Preprocessor};
use topiclabel::eval::{read_predictions, write_predictions, EmbeddingTable};
use topiclabel::model::{hyperparameter_search, train, Checkpoint, HParamSpace};
use topiclabel::pipeline::{
    build_dataset, evaluate, extend_topics, label_topics, load_vocabularies, stopwords_from, write_json_lines,
    BuildOptions, Dataset, EvalOptions,
};
use topiclabel::testdata::{load_topics, write_topics};
use topiclabel::{Error, Result};

#[derive(Parser)]
#[command(name = "topiclabel", version, about = "Generate short labels for topic-model term lists")]
struct Cli {
    /// `key = value` settings file; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for splitting, initialization, shuffling and resampling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads. Results do not depend on this value.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Only warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build train/valid/test pairs and vocabularies from a corpus.
    BuildDataset(BuildArgs),
    /// Train a labeller on a dataset directory.
    Train(TrainArgs),
    /// Label the topics of a topics file.
    Label(LabelArgs),
    /// Score predicted labels against gold labels.
    Evaluate(EvaluateArgs),
    /// Add retrieved TFIDF terms to each topic.
    ExtendTopics(ExtendArgs),
    /// Random search over architecture and optimizer settings.
    HparamSearch(SearchArgs),
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Term source: `tfidf` or `sent`.
    #[arg(long)]
    mode: Option<String>,
    /// Absolute `train,valid,test` counts.
    #[arg(long)]
    splits: Option<String>,
    #[arg(long)]
    rare_min_count: Option<usize>,
    #[arg(long)]
    label_max_len: Option<usize>,
    #[arg(long)]
    stopwords: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint path [default: <data>/model.ckpt].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-epoch losses as JSON lines.
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args)]
struct LabelArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset directory holding the vocabularies.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    topics: PathBuf,
    /// Predictions TSV [default: standard output].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    topics: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    /// Top-k term baselines, e.g. `2` or `2,3`.
    #[arg(long, value_delimiter = ',')]
    baseline: Vec<usize>,
    /// Bootstrap resamples.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    min_avg_rating: Option<f64>,
    /// Report path [default: standard output].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExtendArgs {
    #[arg(long)]
    topics: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Documents retrieved per topic.
    #[arg(long)]
    n_docs: Option<usize>,
    /// Terms added per topic.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    rare_min_count: Option<usize>,
    #[arg(long)]
    stopwords: Option<PathBuf>,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long)]
    data: PathBuf,
    /// Number of sampled configurations.
    #[arg(long)]
    samples: Option<usize>,
    /// Epochs per trial.
    #[arg(long)]
    epochs: Option<usize>,
    /// Trial log [default: <data>/hparam_trials.jsonl].
    #[arg(long)]
    log: Option<PathBuf>,
    /// Best configuration as a config file [default: standard output].
    #[arg(long)]
    out: Option<PathBuf>,
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.model.seed = seed;
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    match &cli.command {
        Command::BuildDataset(a) => {
            if let Some(m) = &a.mode {
                cfg.mode = m.parse()?;
            }
            if let Some(s) = &a.splits {
                cfg.splits = Some(parse_splits(s)?);
            }
            set_opt(&mut cfg.rare_min_count, a.rare_min_count);
            set_opt(&mut cfg.model.max_label_len, a.label_max_len);
            if a.stopwords.is_some() {
                cfg.stopwords.clone_from(&a.stopwords);
            }
        }
        Command::Train(a) => set_opt(&mut cfg.model.epochs, a.epochs),
        Command::Label(_) => {}
        Command::Evaluate(a) => {
            set_opt(&mut cfg.n_resamples, a.samples);
            set_opt(&mut cfg.min_avg_rating, a.min_avg_rating);
        }
        Command::ExtendTopics(a) => {
            set_opt(&mut cfg.n_docs, a.n_docs);
            set_opt(&mut cfg.k, a.k);
            set_opt(&mut cfg.rare_min_count, a.rare_min_count);
            if a.stopwords.is_some() {
                cfg.stopwords.clone_from(&a.stopwords);
            }
        }
        Command::HparamSearch(a) => {
            set_opt(&mut cfg.samples, a.samples);
            set_opt(&mut cfg.model.epochs, a.epochs);
        }
    }
    if cfg.threads == 0 {
        return Err(Error::Invalid("threads must be positive".into()));
    }
    Ok(cfg)
}

fn set_opt<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        }),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| Error::Io {
            path: PathBuf::from("<stdout>"),
            source: e,
        }),
    }
}

fn run(cli: &Cli, cfg: &RunConfig) -> Result<()> {
    match &cli.command {
        Command::BuildDataset(a) => {
            let opts = BuildOptions {
                mode: cfg.mode,
                seed: cfg.model.seed,
                splits: cfg.splits,
                rare_min_count: cfg.rare_min_count,
                max_label_len: cfg.model.max_label_len,
                n_terms: cfg.model.t_x,
                vocab_min_count: cfg.vocab_min_count,
                stopwords: cfg.stopwords.clone(),
                ..BuildOptions::new(&a.corpus, &a.out)
            };
            build_dataset(&opts)?;
        }
        Command::Train(a) => {
            let data = Dataset::load(&a.data)?;
            let mut model = cfg.model.clone();
            data.configure(&mut model);
            let (train_pairs, valid_pairs) = data.encode(&model)?;
            let outcome = train(&train_pairs, &valid_pairs, &model)?;
            let out = a.out.clone().unwrap_or_else(|| a.data.join("model.ckpt"));
            outcome.checkpoint.save(&out)?;
            info!(
                "saved checkpoint from epoch {} to {}",
                outcome.best_epoch.map_or("0".to_string(), |e| e.to_string()),
                out.display()
            );
            if let Some(h) = &a.history {
                write_json_lines(h, &outcome.history)?;
            }
        }
        Command::Label(a) => {
            let ck = Checkpoint::load(&a.checkpoint)?;
            let (term_vocab, label_vocab) = load_vocabularies(&a.data)?;
            let topics: Vec<_> = load_topics(&a.topics)?
                .into_iter()
                .map(|t| (t.topic_id, t.terms))
                .collect();
            let preds = label_topics(&ck, &term_vocab, &label_vocab, &topics)?;
            match &a.out {
                Some(p) => write_predictions(p, &preds)?,
                None => write_output(None, &topiclabel::eval::predictions_to_tsv(&preds))?,
            }
        }
        Command::Evaluate(a) => {
            let preds = read_predictions(&a.pred)?;
            let topics = load_topics(&a.topics)?;
            let table = EmbeddingTable::load(&a.embeddings)?;
            let opts = EvalOptions {
                min_avg_rating: cfg.min_avg_rating,
                baselines: a.baseline.clone(),
                n_resamples: cfg.n_resamples,
                seed: cfg.model.seed,
            };
            let report = evaluate(&preds, &topics, &table, &opts)?;
            info!("mean p {:.5}, r {:.5}, f {:.5}", report.summary.mean_p, report.summary.mean_r, report.summary.mean_f);
            let mut json = report.to_json();
            json.push('\n');
            write_output(a.out.as_deref(), &json)?;
        }
        Command::ExtendTopics(a) => {
            let topics = load_topics(&a.topics)?;
            let corpus = read_corpus_all(&a.corpus)?;
            let pre = Preprocessor::fit(&corpus, stopwords_from(cfg.stopwords.as_deref())?, cfg.rare_min_count);
            let table = EmbeddingTable::load(&a.embeddings)?;
            let extended = extend_topics(&topics, &corpus, &pre, &table, cfg.n_docs, cfg.k)?;
            let short = extended.iter().filter(|e| e.short).count();
            if short > 0 {
                warn!("{short} topics received fewer than {} new terms", cfg.k);
            }
            let out: Vec<_> = extended.into_iter().map(|e| e.topic).collect();
            write_topics(&a.out, &out)?;
        }
        Command::HparamSearch(a) => {
            let data = Dataset::load(&a.data)?;
            let mut base = cfg.model.clone();
            data.configure(&mut base);
            let (train_pairs, valid_pairs) = data.encode(&base)?;
            if valid_pairs.is_empty() {
                return Err(Error::Invalid("hyperparameter search needs validation pairs".into()));
            }
            let (best, trials) =
                hyperparameter_search(&HParamSpace::default(), &base, cfg.samples, cfg.model.seed, |c| {
                    let outcome = train(&train_pairs, &valid_pairs, c)?;
                    outcome
                        .best_valid_loss()
                        .ok_or_else(|| Error::Invalid("trial produced no validation loss".into()))
                })?;
            let log_path = a.log.clone().unwrap_or_else(|| a.data.join("hparam_trials.jsonl"));
            write_json_lines(&log_path, &trials)?;
            info!("wrote {} trials to {}", trials.len(), log_path.display());
            write_output(a.out.as_deref(), &best.to_text())?;
        }
    }
    Ok(())
}

fn init_logging(cli: &Cli) {
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => log::LevelFilter::Warn,
        (false, 0) => log::LevelFilter::Info,
        (false, 1) => log::LevelFilter::Debug,
        (false, _) => log::LevelFilter::Trace,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .parse_env("TOPICLABEL_LOG")
        .init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    init_logging(&cli);
    let cfg = match resolve(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    info!("resolved configuration:\n{}", cfg.describe().trim_end());
    if cfg.threads > 1 {
        info!("running single-threaded; --threads {} has no effect on results", cfg.threads);
    }
    match run(&cli, &cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 3 } else { 2 })
        }
    }
}
