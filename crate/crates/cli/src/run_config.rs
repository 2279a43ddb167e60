//! Settings merged from built-in defaults, an optional `key = value` file and
//! command-line flags, in increasing precedence.

use std::path::{Path, PathBuf};

use topiclabel::dataset::SplitSizes;
use topiclabel::eval::DEFAULT_BOOTSTRAP_SAMPLES;
use topiclabel::model::config::{read_kv_file, MODEL_KEYS};
use topiclabel::model::ModelConfig;
use topiclabel::pipeline::{DatasetMode, DEFAULT_RARE_MIN_COUNT};
use topiclabel::testdata::{DEFAULT_EXTRA_TERMS, DEFAULT_MIN_AVG_RATING, DEFAULT_N_DOCS};
use topiclabel::{Error, Result};

pub const DEFAULT_SEARCH_SAMPLES: usize = 50;

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub mode: DatasetMode,
    pub rare_min_count: usize,
    pub vocab_min_count: usize,
    pub splits: Option<SplitSizes>,
    pub stopwords: Option<PathBuf>,
    pub n_docs: usize,
    pub k: usize,
    pub samples: usize,
    pub n_resamples: usize,
    pub min_avg_rating: f64,
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            mode: DatasetMode::Tfidf,
            rare_min_count: DEFAULT_RARE_MIN_COUNT,
            vocab_min_count: 1,
            splits: None,
            stopwords: None,
            n_docs: DEFAULT_N_DOCS,
            k: DEFAULT_EXTRA_TERMS,
            samples: DEFAULT_SEARCH_SAMPLES,
            n_resamples: DEFAULT_BOOTSTRAP_SAMPLES,
            min_avg_rating: DEFAULT_MIN_AVG_RATING,
            threads: 1,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Invalid(format!("bad value `{value}` for `{key}`")))
}

/// `train,valid,test` absolute counts.
pub fn parse_splits(s: &str) -> Result<SplitSizes> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [a, b, c] = parts[..] else {
        return Err(Error::Invalid(format!("splits `{s}` must be three comma-separated counts")));
    };
    Ok(SplitSizes {
        train: parse("splits", a)?,
        valid: parse("splits", b)?,
        test: parse("splits", c)?,
    })
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "mode" => self.mode = value.parse()?,
            "rare_min_count" => self.rare_min_count = parse(key, value)?,
            "vocab_min_count" => self.vocab_min_count = parse(key, value)?,
            "splits" => self.splits = Some(parse_splits(value)?),
            "stopwords" => self.stopwords = Some(PathBuf::from(value)),
            "n_docs" => self.n_docs = parse(key, value)?,
            "k" => self.k = parse(key, value)?,
            "samples" => self.samples = parse(key, value)?,
            "n_resamples" => self.n_resamples = parse(key, value)?,
            "min_avg_rating" => self.min_avg_rating = parse(key, value)?,
            "threads" => self.threads = parse(key, value)?,
            _ if MODEL_KEYS.contains(&key) => self.model.set(key, value)?,
            other => return Err(Error::Invalid(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (line, key, value) in read_kv_file(path)? {
            cfg.set(&key, &value)
                .map_err(|e| Error::Parse {
                    location: path.display().to_string(),
                    line,
                    msg: e.to_string(),
                })?;
        }
        Ok(cfg)
    }

    /// Every resolved setting, one `key = value` per line.
    pub fn describe(&self) -> String {
        let splits = self
            .splits
            .map_or_else(|| "proportional".to_string(), |s| format!("{},{},{}", s.train, s.valid, s.test));
        let stop = self
            .stopwords
            .as_ref()
            .map_or_else(|| "built-in".to_string(), |p| p.display().to_string());
        let mut out = self.model.to_text();
        for (k, v) in [
            ("mode", self.mode.to_string()),
            ("rare_min_count", self.rare_min_count.to_string()),
            ("vocab_min_count", self.vocab_min_count.to_string()),
            ("splits", splits),
            ("stopwords", stop),
            ("n_docs", self.n_docs.to_string()),
            ("k", self.k.to_string()),
            ("samples", self.samples.to_string()),
            ("n_resamples", self.n_resamples.to_string()),
            ("min_avg_rating", self.min_avg_rating.to_string()),
            ("threads", self.threads.to_string()),
        ] {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }
}
