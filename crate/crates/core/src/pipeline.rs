//! End-to-end steps shared by the command-line tool and the tests.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::{info, warn};

use crate::corpus::{load_stopwords, read_corpus_all, Preprocessor, StopwordSet, TokenList};
use crate::dataset::{
    build_pairs_sent, build_pairs_tfidf, build_vocab, encode_terms, encode_training_pairs, read_pairs, split_pairs,
    write_pairs, EncodedPair, PairOptions, PairStats, SplitSizes, TopicLabelPair, Vocabulary, DEFAULT_MAX_LABEL_LEN,
    TOPIC_LEN,
};
use crate::eval::{
    baseline_label, paired_bootstrap, score_model, score_topic, summarize, BaselineReport, EmbeddingTable, EvalReport,
    DEFAULT_BOOTSTRAP_SAMPLES,
};
use crate::model::{greedy_decode, Checkpoint, ModelConfig};
use crate::testdata::{extend_topic_with, filter_gold_labels, DocumentVectors, ExtendedTopic, Topic, DEFAULT_MIN_AVG_RATING};
use crate::tfidf::build_df_index;
use crate::{Error, Result};

pub const TRAIN_FILE: &str = "train.tsv";
pub const VALID_FILE: &str = "valid.tsv";
pub const TEST_FILE: &str = "test.tsv";
pub const TERM_VOCAB_FILE: &str = "term_vocab.txt";
pub const LABEL_VOCAB_FILE: &str = "label_vocab.txt";
pub const DEFAULT_RARE_MIN_COUNT: usize = 5;

/// How topic terms are drawn from an article body.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetMode {
    /// Highest-TFIDF terms.
    Tfidf,
    /// Leading terms.
    Sent,
}

impl fmt::Display for DatasetMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetMode::Tfidf => "tfidf",
            DatasetMode::Sent => "sent",
        })
    }
}

impl FromStr for DatasetMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tfidf" => Ok(DatasetMode::Tfidf),
            "sent" => Ok(DatasetMode::Sent),
            other => Err(Error::Invalid(format!("unknown dataset mode `{other}` (expected tfidf or sent)"))),
        }
    }
}

pub fn stopwords_from(path: Option<&Path>) -> Result<StopwordSet> {
    match path {
        Some(p) => load_stopwords(p),
        None => Ok(StopwordSet::english()),
    }
}

#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub corpus: PathBuf,
    pub out: PathBuf,
    pub mode: DatasetMode,
    pub seed: u64,
    /// Proportional to the reference split when unset.
    pub splits: Option<SplitSizes>,
    pub rare_min_count: usize,
    pub max_label_len: usize,
    pub n_terms: usize,
    pub vocab_min_count: usize,
    pub stopwords: Option<PathBuf>,
}

impl BuildOptions {
    pub fn new(corpus: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        BuildOptions {
            corpus: corpus.into(),
            out: out.into(),
            mode: DatasetMode::Tfidf,
            seed: 0,
            splits: None,
            rare_min_count: DEFAULT_RARE_MIN_COUNT,
            max_label_len: DEFAULT_MAX_LABEL_LEN,
            n_terms: TOPIC_LEN,
            vocab_min_count: 1,
            stopwords: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BuildSummary {
    pub stats: PairStats,
    pub sizes: SplitSizes,
    pub term_vocab: usize,
    pub label_vocab: usize,
}

/// Builds pairs from a corpus, splits them and writes the three TSV files and
/// both vocabularies into `opts.out`.
pub fn build_dataset(opts: &BuildOptions) -> Result<BuildSummary> {
    let corpus = read_corpus_all(&opts.corpus)?;
    info!("read {} articles from {}", corpus.len(), opts.corpus.display());
    let pre = Preprocessor::fit(&corpus, stopwords_from(opts.stopwords.as_deref())?, opts.rare_min_count);
    let pair_opts = PairOptions {
        n_terms: opts.n_terms,
        max_label_len: opts.max_label_len,
    };
    let (pairs, stats) = match opts.mode {
        DatasetMode::Tfidf => {
            let index = build_df_index(&corpus, &pre);
            build_pairs_tfidf(&corpus, &index, &pre, &pair_opts)?
        }
        DatasetMode::Sent => build_pairs_sent(&corpus, &pre, &pair_opts),
    };
    let sizes = opts.splits.unwrap_or_else(|| SplitSizes::proportional(pairs.len()));
    let splits = split_pairs(pairs, sizes, opts.seed)?;
    let (term_vocab, label_vocab) = build_vocab(&splits.train, opts.vocab_min_count)?;
    std::fs::create_dir_all(&opts.out).map_err(|e| Error::io(&opts.out, e))?;
    write_pairs(&opts.out.join(TRAIN_FILE), &splits.train)?;
    write_pairs(&opts.out.join(VALID_FILE), &splits.valid)?;
    write_pairs(&opts.out.join(TEST_FILE), &splits.test)?;
    term_vocab.save(&opts.out.join(TERM_VOCAB_FILE))?;
    label_vocab.save(&opts.out.join(LABEL_VOCAB_FILE))?;
    info!(
        "wrote {}/{}/{} pairs, vocabularies of {} terms and {} label tokens",
        sizes.train,
        sizes.valid,
        sizes.test,
        term_vocab.len(),
        label_vocab.len()
    );
    Ok(BuildSummary {
        stats,
        sizes,
        term_vocab: term_vocab.len(),
        label_vocab: label_vocab.len(),
    })
}

/// A dataset directory written by [`build_dataset`].
#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: Vec<TopicLabelPair>,
    pub valid: Vec<TopicLabelPair>,
    pub test: Vec<TopicLabelPair>,
    pub term_vocab: Vocabulary,
    pub label_vocab: Vocabulary,
}

pub fn load_vocabularies(dir: &Path) -> Result<(Vocabulary, Vocabulary)> {
    Ok((
        Vocabulary::load(&dir.join(TERM_VOCAB_FILE))?,
        Vocabulary::load(&dir.join(LABEL_VOCAB_FILE))?,
    ))
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Self> {
        let (term_vocab, label_vocab) = load_vocabularies(dir)?;
        Ok(Dataset {
            train: read_pairs(&dir.join(TRAIN_FILE))?,
            valid: read_pairs(&dir.join(VALID_FILE))?,
            test: read_pairs(&dir.join(TEST_FILE))?,
            term_vocab,
            label_vocab,
        })
    }

    /// Fills the vocabulary sizes of `cfg`.
    pub fn configure(&self, cfg: &mut ModelConfig) {
        cfg.term_vocab_size = self.term_vocab.len();
        cfg.label_vocab_size = self.label_vocab.len();
    }

    /// Encoded train and validation pairs for `cfg`.
    pub fn encode(&self, cfg: &ModelConfig) -> Result<(Vec<EncodedPair>, Vec<EncodedPair>)> {
        let enc = |pairs: &[TopicLabelPair]| {
            encode_training_pairs(pairs, &self.term_vocab, &self.label_vocab, cfg.t_x, cfg.max_label_len)
        };
        Ok((enc(&self.train)?, enc(&self.valid)?))
    }
}

/// Greedy labels for each topic, using at most `t_x` leading terms.
pub fn label_topics(
    ck: &Checkpoint,
    term_vocab: &Vocabulary,
    label_vocab: &Vocabulary,
    topics: &[(String, TokenList)],
) -> Result<Vec<(String, TokenList)>> {
    if term_vocab.len() != ck.config.term_vocab_size || label_vocab.len() != ck.config.label_vocab_size {
        return Err(Error::Invalid(format!(
            "vocabularies ({} terms, {} labels) do not match the checkpoint ({}, {})",
            term_vocab.len(),
            label_vocab.len(),
            ck.config.term_vocab_size,
            ck.config.label_vocab_size
        )));
    }
    topics
        .iter()
        .map(|(id, terms)| {
            let ids = encode_terms(&terms.truncated(ck.config.t_x), term_vocab, ck.config.t_x)?;
            let out = greedy_decode(&ck.weights, &ids, ck.config.max_label_len)?;
            Ok((id.clone(), label_vocab.decode(&out)))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub min_avg_rating: f64,
    /// Top-k term baselines to compare against.
    pub baselines: Vec<usize>,
    pub n_resamples: usize,
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            min_avg_rating: DEFAULT_MIN_AVG_RATING,
            baselines: Vec::new(),
            n_resamples: DEFAULT_BOOTSTRAP_SAMPLES,
            seed: 0,
        }
    }
}

/// Scores predictions against the rating-filtered golds of each topic.
pub fn evaluate(
    predictions: &[(String, TokenList)],
    topics: &[Topic],
    table: &EmbeddingTable,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    let topics = filter_gold_labels(topics, opts.min_avg_rating);
    let preds: HashMap<&str, &TokenList> = predictions.iter().map(|(id, l)| (id.as_str(), l)).collect();
    let mut results = Vec::with_capacity(topics.len());
    for t in &topics {
        let cand = preds
            .get(t.topic_id.as_str())
            .ok_or_else(|| Error::Invalid(format!("no prediction for topic `{}`", t.topic_id)))?;
        results.push(score_topic(&t.topic_id, cand, &t.gold_tokens(), table)?);
    }
    let unused = predictions.len().saturating_sub(results.len());
    if unused > 0 {
        warn!("{unused} predictions have no matching topic with usable golds");
    }
    let mut report = score_model(results)?;
    let model_f: Vec<f64> = report.topics.iter().map(|r| r.f).collect();
    for &k in &opts.baselines {
        let base = topics
            .iter()
            .map(|t| score_topic(&t.topic_id, &baseline_label(&t.terms, k)?, &t.gold_tokens(), table))
            .collect::<Result<Vec<_>>>()?;
        let base_f: Vec<f64> = base.iter().map(|r| r.f).collect();
        let p_value = if model_f.len() >= 2 {
            Some(paired_bootstrap(&model_f, &base_f, opts.n_resamples, opts.seed)?)
        } else {
            None
        };
        report.baselines.push(BaselineReport {
            k,
            summary: summarize(&base)?,
            topics: base,
            p_value,
            n_resamples: opts.n_resamples,
        });
    }
    Ok(report)
}

/// Extends every topic from one shared corpus index.
pub fn extend_topics(
    topics: &[Topic],
    corpus: &[crate::corpus::Article],
    pre: &Preprocessor,
    table: &EmbeddingTable,
    n_docs: usize,
    k: usize,
) -> Result<Vec<ExtendedTopic>> {
    let index = build_df_index(corpus, pre);
    let docs = DocumentVectors::new(corpus, pre, table);
    info!("extending {} topics from {} documents ({n_docs} per topic, {k} terms)", topics.len(), docs.len());
    topics
        .iter()
        .map(|t| extend_topic_with(t, &docs, &index, table, n_docs, k))
        .collect()
}

/// One JSON object per line.
pub fn write_json_lines<T: serde::Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).map_err(|e| Error::Invalid(e.to_string()))?);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{write_corpus, Article};
    use crate::testdata::GoldLabel;

    fn corpus(n: usize) -> Vec<Article> {
        let words = ["river", "bank", "money", "water", "fish", "loan", "stream", "credit", "boat", "interest"];
        (0..n)
            .map(|i| {
                let text: Vec<&str> = (0..40).map(|j| words[(i * 7 + j * (i % 3 + 1)) % words.len()]).collect();
                Article {
                    id: format!("a{i}"),
                    title: format!("{} {}", words[i % 10], words[(i + 3) % 10]),
                    text: text.join(" "),
                }
            })
            .collect()
    }

    #[test]
    fn dataset_directory_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        write_corpus(&path, &corpus(40)).unwrap();
        let mut opts = BuildOptions::new(&path, dir.path().join("data"));
        opts.n_terms = 5;
        opts.rare_min_count = 1;
        opts.splits = Some(SplitSizes { train: 30, valid: 5, test: 5 });
        opts.mode = DatasetMode::Sent;
        let summary = build_dataset(&opts).unwrap();
        assert_eq!(summary.sizes.total(), 40);
        let data = Dataset::load(&opts.out).unwrap();
        assert_eq!((data.train.len(), data.valid.len(), data.test.len()), (30, 5, 5));
        assert_eq!(data.term_vocab.len(), summary.term_vocab);

        opts.splits = Some(SplitSizes { train: 50, valid: 0, test: 0 });
        assert!(build_dataset(&opts).is_err());
    }

    #[test]
    fn mode_names() {
        assert_eq!("tfidf".parse::<DatasetMode>().unwrap(), DatasetMode::Tfidf);
        assert_eq!(DatasetMode::Sent.to_string(), "sent");
        assert!("bag".parse::<DatasetMode>().is_err());
    }

    fn topic(id: &str, terms: &str, golds: &[&str]) -> Topic {
        Topic {
            topic_id: id.into(),
            terms: TokenList::from_joined(terms),
            golds: golds
                .iter()
                .map(|g| GoldLabel {
                    text: g.to_string(),
                    tokens: TokenList::from_joined(g),
                    ratings: None,
                    avg_rating: 2.5,
                })
                .collect(),
        }
    }

    #[test]
    fn evaluation_with_baseline() {
        let mut table = EmbeddingTable::new(3).unwrap();
        for (w, v) in [("a", [1.0, 0.0, 0.0]), ("b", [0.0, 1.0, 0.0]), ("c", [0.0, 0.0, 1.0]), ("d", [1.0, 1.0, 0.0])] {
            table.insert(w, v.to_vec()).unwrap();
        }
        let topics = vec![topic("1", "b c a", &["a d"]), topic("2", "c b", &["a"])];
        let preds = vec![
            ("1".to_string(), TokenList::from_joined("a d")),
            ("2".to_string(), TokenList::from_joined("a")),
        ];
        let opts = EvalOptions {
            baselines: vec![2],
            n_resamples: 200,
            ..Default::default()
        };
        let rep = evaluate(&preds, &topics, &table, &opts).unwrap();
        assert_eq!(rep.summary.mean_f, 1.0);
        let base = &rep.baselines[0];
        assert!(base.summary.mean_f < 1.0);
        assert_eq!(base.p_value, Some(0.0));
        assert!(evaluate(&preds[..1], &topics, &table, &opts).is_err());
    }
}
