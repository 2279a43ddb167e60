//! Corpus ingestion and text preprocessing.
//!
//! Articles arrive as JSON Lines records (`id`, `title`, `text`). Bodies are
//! tokenized and stripped of numbers, punctuation, rare terms and stop words
//! before they become topic terms; titles keep their stop words and digits
//! because they become labels.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Lines};
use std::ops::Deref;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Literal spellings of the reserved vocabulary entries. The tokenizer can
/// never produce them because `<` and `>` are separators.
pub const RESERVED_LITERALS: [&str; 4] = ["<pad>", "<sos>", "<eos>", "<unk>"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Article {
    pub id: String,
    pub title: String,
    pub text: String,
}

/// An ordered list of lowercase tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenList(Vec<String>);

impl TokenList {
    pub fn new(tokens: Vec<String>) -> Self {
        TokenList(tokens)
    }

    /// Splits on single spaces; the inverse of [`TokenList::joined`].
    pub fn from_joined(s: &str) -> Self {
        TokenList(s.split(' ').filter(|t| !t.is_empty()).map(str::to_owned).collect())
    }

    pub fn joined(&self) -> String {
        self.0.join(" ")
    }

    pub fn into_inner(self) -> Vec<String> {
        self.0
    }

    pub fn truncated(&self, k: usize) -> TokenList {
        TokenList(self.0.iter().take(k).cloned().collect())
    }
}

impl Deref for TokenList {
    type Target = [String];

    fn deref(&self) -> &[String] {
        &self.0
    }
}

impl From<Vec<String>> for TokenList {
    fn from(v: Vec<String>) -> Self {
        TokenList(v)
    }
}

impl From<&[&str]> for TokenList {
    fn from(v: &[&str]) -> Self {
        TokenList(v.iter().map(|s| s.to_string()).collect())
    }
}

impl<const N: usize> From<[&str; N]> for TokenList {
    fn from(v: [&str; N]) -> Self {
        TokenList(v.iter().map(|s| s.to_string()).collect())
    }
}

impl<'a> IntoIterator for &'a TokenList {
    type Item = &'a String;
    type IntoIter = std::slice::Iter<'a, String>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StopwordSet {
    words: HashSet<String>,
}

impl StopwordSet {
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        StopwordSet {
            words: words.into_iter().map(|w| w.as_ref().to_lowercase()).collect(),
        }
    }

    /// A general-purpose English stop list, used when no file is supplied.
    pub fn english() -> Self {
        Self::new(ENGLISH_STOPWORDS.iter())
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }
}

/// Reads one stop word per line. Blank lines and lines starting with `#` are skipped.
pub fn load_stopwords(path: &Path) -> Result<StopwordSet> {
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(StopwordSet::new(
        content
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#')),
    ))
}

#[derive(Deserialize)]
struct RawArticle {
    id: String,
    title: String,
    text: String,
}

/// Streaming JSON Lines reader. Only the set of ids seen so far is retained
/// between records.
pub struct CorpusReader<R> {
    lines: Lines<R>,
    location: String,
    line_no: usize,
    seen: HashSet<String>,
}

impl<R: BufRead> CorpusReader<R> {
    pub fn new(reader: R, location: impl Into<String>) -> Self {
        CorpusReader {
            lines: reader.lines(),
            location: location.into(),
            line_no: 0,
            seen: HashSet::new(),
        }
    }

    fn parse_line(&mut self, line: &str) -> Result<Article> {
        let raw: RawArticle = serde_json::from_str(line)
            .map_err(|e| Error::parse(&self.location, self.line_no, e.to_string()))?;
        if raw.id.is_empty() {
            return Err(Error::parse(&self.location, self.line_no, "empty article id"));
        }
        if raw.title.trim().is_empty() {
            return Err(Error::parse(&self.location, self.line_no, "empty title"));
        }
        if !self.seen.insert(raw.id.clone()) {
            return Err(Error::parse(
                &self.location,
                self.line_no,
                format!("duplicate article id `{}`", raw.id),
            ));
        }
        Ok(Article {
            id: raw.id,
            title: raw.title,
            text: raw.text,
        })
    }
}

impl<R: BufRead> Iterator for CorpusReader<R> {
    type Item = Result<Article>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = self.lines.next()?;
            self.line_no += 1;
            let line = match line {
                Ok(l) => l,
                Err(e) => return Some(Err(Error::parse(&self.location, self.line_no, e.to_string()))),
            };
            if line.trim().is_empty() {
                continue;
            }
            return Some(self.parse_line(&line));
        }
    }
}

pub fn read_corpus(path: &Path) -> Result<CorpusReader<BufReader<File>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(CorpusReader::new(BufReader::new(file), path.display().to_string()))
}

/// Reads the whole corpus into memory, failing on the first bad record.
pub fn read_corpus_all(path: &Path) -> Result<Vec<Article>> {
    read_corpus(path)?.collect()
}

pub fn write_corpus(path: &Path, articles: &[Article]) -> Result<()> {
    let mut out = String::new();
    for a in articles {
        out.push_str(&serde_json::to_string(a).expect("article serializes"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(&PathBuf::from(path), e))
}

fn is_token_char(c: char) -> bool {
    c.is_alphanumeric() || c == '.' || c == '-'
}

/// Lowercases and splits on everything except letters, digits, periods and
/// hyphens. Leading and trailing periods and hyphens are stripped, except that
/// an abbreviation with an internal period keeps its final period (`u.s.`).
/// Pieces without any letter or digit are dropped.
pub fn tokenize(text: &str) -> TokenList {
    let lower = text.to_lowercase();
    let mut tokens = Vec::new();
    for piece in lower.split(|c: char| !is_token_char(c)) {
        if let Some(tok) = clean_piece(piece) {
            tokens.push(tok);
        }
    }
    TokenList(tokens)
}

fn clean_piece(piece: &str) -> Option<String> {
    let trim = |c: char| c == '.' || c == '-';
    let core = piece.trim_start_matches(trim);
    let trailing = &core[core.trim_end_matches(trim).len()..];
    let core = core.trim_end_matches(trim);
    if !core.chars().any(char::is_alphanumeric) {
        return None;
    }
    let mut tok = core.to_string();
    if core.contains('.') && trailing.starts_with('.') {
        tok.push('.');
    }
    Some(tok)
}

/// Token counts over the tokenized bodies.
pub fn term_frequencies<'a, I>(corpus: I) -> HashMap<String, usize>
where
    I: IntoIterator<Item = &'a Article>,
{
    let mut counts: HashMap<String, usize> = HashMap::new();
    for article in corpus {
        for tok in tokenize(&article.text).into_inner() {
            *counts.entry(tok).or_insert(0) += 1;
        }
    }
    counts
}

/// Tokens whose total frequency across all bodies is below `min_count`.
pub fn compute_rare_terms<'a, I>(corpus: I, min_count: usize) -> HashSet<String>
where
    I: IntoIterator<Item = &'a Article>,
{
    term_frequencies(corpus)
        .into_iter()
        .filter(|&(_, n)| n < min_count)
        .map(|(t, _)| t)
        .collect()
}

/// True when a token carries no letter, i.e. it is a number or punctuation run.
fn is_numeric_token(tok: &str) -> bool {
    !tok.chars().any(char::is_alphabetic)
}

/// Removes number-only tokens, stop words and rare terms, keeping the order
/// and multiplicity of everything else.
pub fn preprocess_terms(tokens: &TokenList, stop: &StopwordSet, rare: &HashSet<String>) -> TokenList {
    TokenList(
        tokens
            .iter()
            .filter(|t| !is_numeric_token(t) && !stop.contains(t) && !rare.contains(t.as_str()))
            .cloned()
            .collect(),
    )
}

/// Tokenizes a title for use as a label. Stop words and digits are kept.
pub fn normalize_label(title: &str) -> Result<TokenList> {
    let tokens = tokenize(title);
    if tokens.is_empty() {
        return Err(Error::Invalid(format!("title `{title}` has no usable tokens")));
    }
    Ok(tokens)
}

/// The stop list and rare-term set applied to article bodies.
#[derive(Debug, Clone, Default)]
pub struct Preprocessor {
    pub stop: StopwordSet,
    pub rare: HashSet<String>,
}

impl Preprocessor {
    pub fn new(stop: StopwordSet, rare: HashSet<String>) -> Self {
        Preprocessor { stop, rare }
    }

    /// Builds the rare-term set from `corpus` at threshold `min_count`.
    pub fn fit(corpus: &[Article], stop: StopwordSet, min_count: usize) -> Self {
        let rare = compute_rare_terms(corpus, min_count);
        Preprocessor { stop, rare }
    }

    pub fn body_terms(&self, article: &Article) -> TokenList {
        self.terms(&article.text)
    }

    pub fn terms(&self, text: &str) -> TokenList {
        preprocess_terms(&tokenize(text), &self.stop, &self.rare)
    }
}

const ENGLISH_STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "am", "an", "and", "any", "are",
    "as", "at", "be", "because", "been", "before", "being", "below", "between", "both", "but",
    "by", "can", "could", "did", "do", "does", "doing", "down", "during", "each", "few", "for",
    "from", "further", "had", "has", "have", "having", "he", "her", "here", "hers", "herself",
    "him", "himself", "his", "how", "i", "if", "in", "into", "is", "it", "its", "itself", "just",
    "me", "more", "most", "my", "myself", "no", "nor", "not", "now", "of", "off", "on", "once",
    "only", "or", "other", "our", "ours", "ourselves", "out", "over", "own", "same", "she",
    "should", "so", "some", "such", "than", "that", "the", "their", "theirs", "them",
    "themselves", "then", "there", "these", "they", "this", "those", "through", "to", "too",
    "under", "until", "up", "very", "was", "we", "were", "what", "when", "where", "which",
    "while", "who", "whom", "why", "will", "with", "would", "you", "your", "yours", "yourself",
    "yourselves",
];
