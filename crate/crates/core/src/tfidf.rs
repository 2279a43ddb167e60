//! Document-frequency index and TFIDF term ranking.
//!
//! Weighting is raw term frequency times `ln(N / df)` with no smoothing.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::corpus::{Article, Preprocessor, TokenList};
use crate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DfIndex {
    n_docs: usize,
    df: HashMap<String, usize>,
}

impl DfIndex {
    /// Indexes already-preprocessed documents.
    pub fn from_documents<'a, I>(docs: I) -> Self
    where
        I: IntoIterator<Item = &'a TokenList>,
    {
        let mut index = DfIndex::default();
        for doc in docs {
            index.add_document(doc);
        }
        index
    }

    pub fn add_document(&mut self, doc: &TokenList) {
        self.n_docs += 1;
        let unique: HashSet<&str> = doc.iter().map(String::as_str).collect();
        for t in unique {
            *self.df.entry(t.to_string()).or_insert(0) += 1;
        }
    }

    /// Adds the counts of an index built over a disjoint partition.
    pub fn merge(&mut self, other: &DfIndex) {
        self.n_docs += other.n_docs;
        for (t, n) in &other.df {
            *self.df.entry(t.clone()).or_insert(0) += n;
        }
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn df(&self, token: &str) -> Option<usize> {
        self.df.get(token).copied()
    }

    pub fn len(&self) -> usize {
        self.df.len()
    }

    pub fn is_empty(&self) -> bool {
        self.df.is_empty()
    }

    /// TFIDF of a token with within-document count `tf`.
    pub fn score(&self, token: &str, tf: usize) -> Result<f64> {
        let df = self
            .df(token)
            .ok_or_else(|| Error::Invalid(format!("term `{token}` is not in the index")))?;
        tfidf_score(tf, df, self.n_docs)
    }

    /// Serializes as `N <n_docs>` followed by `token<TAB>df` lines sorted by token.
    pub fn to_text(&self) -> String {
        let sorted: BTreeMap<&String, &usize> = self.df.iter().collect();
        let mut out = format!("N {}\n", self.n_docs);
        for (t, n) in sorted {
            let _ = writeln!(out, "{t}\t{n}");
        }
        out
    }

    pub fn from_text(text: &str, location: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::parse(location, 1, "missing header"))?;
        let n_docs = header
            .strip_prefix("N ")
            .and_then(|n| n.trim().parse::<usize>().ok())
            .ok_or_else(|| Error::parse(location, 1, "expected `N <n_docs>`"))?;
        let mut df = HashMap::new();
        for (i, line) in lines.enumerate() {
            let line_no = i + 2;
            let (tok, n) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(location, line_no, "expected `token<TAB>df`"))?;
            let n: usize = n
                .parse()
                .map_err(|_| Error::parse(location, line_no, "document frequency is not an integer"))?;
            if n == 0 || n > n_docs {
                return Err(Error::parse(location, line_no, "document frequency out of range"));
            }
            df.insert(tok.to_string(), n);
        }
        Ok(DfIndex { n_docs, df })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, &path.display().to_string())
    }
}

/// Document frequencies over the preprocessed bodies of `corpus`.
pub fn build_df_index<'a, I>(corpus: I, pre: &Preprocessor) -> DfIndex
where
    I: IntoIterator<Item = &'a Article>,
{
    let mut index = DfIndex::default();
    for article in corpus {
        index.add_document(&pre.body_terms(article));
    }
    index
}

/// `tf * ln(n_docs / df)`.
pub fn tfidf_score(tf: usize, df: usize, n_docs: usize) -> Result<f64> {
    if df == 0 || n_docs == 0 {
        return Err(Error::Invalid(format!(
            "tfidf needs df > 0 and n_docs > 0 (got df={df}, n_docs={n_docs})"
        )));
    }
    if df > n_docs {
        return Err(Error::Invalid(format!("df {df} exceeds n_docs {n_docs}")));
    }
    Ok(tf as f64 * (n_docs as f64 / df as f64).ln())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredTerm {
    pub token: String,
    pub tf: usize,
    pub score: f64,
}

/// Terms in non-increasing score order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RankedTerms {
    pub terms: Vec<ScoredTerm>,
}

impl RankedTerms {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn tokens(&self) -> TokenList {
        TokenList::new(self.terms.iter().map(|t| t.token.clone()).collect())
    }
}

/// Score descending, then tf descending, then token ascending.
pub fn ranking_order(a: &ScoredTerm, b: &ScoredTerm) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(b.tf.cmp(&a.tf))
        .then_with(|| a.token.cmp(&b.token))
}

/// Ranks tokens with precomputed term counts and keeps the best `k`.
pub fn rank_counts<I>(counts: I, index: &DfIndex, k: usize) -> Result<RankedTerms>
where
    I: IntoIterator<Item = (String, usize)>,
{
    let mut terms = counts
        .into_iter()
        .map(|(token, tf)| {
            let score = index.score(&token, tf)?;
            Ok(ScoredTerm { token, tf, score })
        })
        .collect::<Result<Vec<_>>>()?;
    terms.sort_by(ranking_order);
    terms.truncate(k);
    Ok(RankedTerms { terms })
}

pub(crate) fn count_terms<'a, I>(tokens: I) -> HashMap<String, usize>
where
    I: IntoIterator<Item = &'a String>,
{
    let mut counts = HashMap::new();
    for t in tokens {
        *counts.entry(t.clone()).or_insert(0) += 1;
    }
    counts
}

/// The `k` highest-TFIDF distinct tokens of one preprocessed article.
pub fn top_k_terms(article_tokens: &TokenList, index: &DfIndex, k: usize) -> Result<RankedTerms> {
    rank_counts(count_terms(article_tokens.iter()), index, k)
}
