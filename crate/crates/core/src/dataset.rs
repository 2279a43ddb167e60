//! Distant-supervision pairs: article titles as labels, article terms as
//! synthetic topics. Also splitting, vocabularies and integer encoding.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{normalize_label, Article, Preprocessor, TokenList, RESERVED_LITERALS};
use crate::tfidf::{top_k_terms, DfIndex};
use crate::{Error, Result};

pub const PAD: usize = 0;
pub const SOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
pub const NUM_RESERVED: usize = 4;

/// Encoder input length and the number of terms per synthetic topic.
pub const TOPIC_LEN: usize = 30;
pub const DEFAULT_MAX_LABEL_LEN: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TopicLabelPair {
    pub terms: TokenList,
    pub label: TokenList,
}

#[derive(Debug, Clone, Copy)]
pub struct PairOptions {
    pub n_terms: usize,
    pub max_label_len: usize,
}

impl Default for PairOptions {
    fn default() -> Self {
        PairOptions {
            n_terms: TOPIC_LEN,
            max_label_len: DEFAULT_MAX_LABEL_LEN,
        }
    }
}

/// Why articles did not produce a pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PairStats {
    pub emitted: usize,
    pub too_few_terms: usize,
    pub unusable_label: usize,
}

impl PairStats {
    fn log(&self, mode: &str) {
        info!(
            "{mode}: emitted {} pairs, skipped {} with too few terms and {} with unusable labels",
            self.emitted, self.too_few_terms, self.unusable_label
        );
    }
}

fn usable_label(title: &str, opts: &PairOptions) -> Option<TokenList> {
    normalize_label(title)
        .ok()
        .filter(|l| l.len() <= opts.max_label_len)
}

/// Top-`n_terms` TFIDF terms of each article paired with its title.
pub fn build_pairs_tfidf(
    corpus: &[Article],
    index: &DfIndex,
    pre: &Preprocessor,
    opts: &PairOptions,
) -> Result<(Vec<TopicLabelPair>, PairStats)> {
    let mut stats = PairStats::default();
    let mut pairs = Vec::new();
    for article in corpus {
        let body = pre.body_terms(article);
        let ranked = top_k_terms(&body, index, opts.n_terms)?;
        if ranked.len() < opts.n_terms {
            stats.too_few_terms += 1;
            continue;
        }
        let Some(label) = usable_label(&article.title, opts) else {
            stats.unusable_label += 1;
            continue;
        };
        pairs.push(TopicLabelPair {
            terms: ranked.tokens(),
            label,
        });
    }
    stats.emitted = pairs.len();
    stats.log("tfidf");
    Ok((pairs, stats))
}

/// First `n_terms` preprocessed body tokens of each article paired with its title.
pub fn build_pairs_sent(
    corpus: &[Article],
    pre: &Preprocessor,
    opts: &PairOptions,
) -> (Vec<TopicLabelPair>, PairStats) {
    let mut stats = PairStats::default();
    let mut pairs = Vec::new();
    for article in corpus {
        let body = pre.body_terms(article);
        if body.len() < opts.n_terms {
            stats.too_few_terms += 1;
            continue;
        }
        let Some(label) = usable_label(&article.title, opts) else {
            stats.unusable_label += 1;
            continue;
        };
        pairs.push(TopicLabelPair {
            terms: body.truncated(opts.n_terms),
            label,
        });
    }
    stats.emitted = pairs.len();
    stats.log("sent");
    (pairs, stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSizes {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

impl SplitSizes {
    pub fn total(&self) -> usize {
        self.train + self.valid + self.test
    }

    /// Sizes proportional to the 226,282 / 12,424 / 11,800 reference split.
    pub fn proportional(n: usize) -> Self {
        const REF: [usize; 3] = [226_282, 12_424, 11_800];
        let total: usize = REF.iter().sum();
        let train = n * REF[0] / total;
        let valid = n * REF[1] / total;
        SplitSizes {
            train,
            valid,
            test: n - train - valid,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splits<T> {
    pub train: Vec<T>,
    pub valid: Vec<T>,
    pub test: Vec<T>,
}

/// Seeded shuffle followed by contiguous slicing. Items beyond the requested
/// total are discarded.
pub fn split_pairs<T>(mut items: Vec<T>, sizes: SplitSizes, seed: u64) -> Result<Splits<T>> {
    if sizes.total() > items.len() {
        return Err(Error::Invalid(format!(
            "requested {} pairs ({}/{}/{}) but only {} are available",
            sizes.total(),
            sizes.train,
            sizes.valid,
            sizes.test,
            items.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    items.shuffle(&mut rng);
    items.truncate(sizes.total());
    let test = items.split_off(sizes.train + sizes.valid);
    let valid = items.split_off(sizes.train);
    Ok(Splits {
        train: items,
        valid,
        test,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, usize>,
    id_to_token: Vec<String>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::from_tokens(std::iter::empty::<String>()).expect("reserved entries are valid")
    }
}

impl Vocabulary {
    /// Reserved entries first, then `tokens` in the given order.
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Vocabulary {
            token_to_id: HashMap::new(),
            id_to_token: Vec::new(),
        };
        for lit in RESERVED_LITERALS {
            vocab.push(lit.to_string());
        }
        for t in tokens {
            let t = t.into();
            if RESERVED_LITERALS.contains(&t.as_str()) {
                return Err(Error::Invalid(format!("reserved literal `{t}` used as a token")));
            }
            if vocab.token_to_id.contains_key(&t) {
                return Err(Error::Invalid(format!("duplicate vocabulary entry `{t}`")));
            }
            vocab.push(t);
        }
        Ok(vocab)
    }

    /// Tokens with count at least `min_count`, by count descending then lexicographically.
    pub fn from_counts(counts: HashMap<String, usize>, min_count: usize) -> Self {
        let mut kept: Vec<(String, usize)> = counts.into_iter().filter(|&(_, n)| n >= min_count).collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Self::from_tokens(kept.into_iter().map(|(t, _)| t)).expect("counted tokens are distinct")
    }

    fn push(&mut self, t: String) {
        self.token_to_id.insert(t.clone(), self.id_to_token.len());
        self.id_to_token.push(t);
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.token_to_id.get(token).copied()
    }

    /// The id of `token`, or [`UNK`].
    pub fn id(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.id_to_token.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    /// Maps ids back to tokens, skipping reserved ids.
    pub fn decode(&self, ids: &[usize]) -> TokenList {
        TokenList::new(
            ids.iter()
                .filter(|&&i| i >= NUM_RESERVED)
                .filter_map(|&i| self.token(i).map(str::to_owned))
                .collect(),
        )
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for t in &self.id_to_token {
            out.push_str(t);
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str, location: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().collect();
        for (i, lit) in RESERVED_LITERALS.iter().enumerate() {
            if lines.get(i) != Some(lit) {
                return Err(Error::parse(location, i + 1, format!("expected reserved literal `{lit}`")));
            }
        }
        Self::from_tokens(lines[NUM_RESERVED..].iter().copied())
            .map_err(|e| Error::parse(location, 0, e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, &path.display().to_string())
    }
}

/// Separate term and label vocabularies from the training pairs.
pub fn build_vocab(train_pairs: &[TopicLabelPair], min_count: usize) -> Result<(Vocabulary, Vocabulary)> {
    if train_pairs.is_empty() {
        return Err(Error::Invalid("cannot build vocabularies from zero pairs".into()));
    }
    let mut term_counts: HashMap<String, usize> = HashMap::new();
    let mut label_counts: HashMap<String, usize> = HashMap::new();
    for p in train_pairs {
        for t in p.terms.iter() {
            *term_counts.entry(t.clone()).or_insert(0) += 1;
        }
        for t in p.label.iter() {
            *label_counts.entry(t.clone()).or_insert(0) += 1;
        }
    }
    Ok((
        Vocabulary::from_counts(term_counts, min_count),
        Vocabulary::from_counts(label_counts, min_count),
    ))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedPair {
    /// Term ids, PAD-right to the encoder length.
    pub input_ids: Vec<usize>,
    /// `SOS label EOS PAD…`, length `max_label_len + 2`.
    pub target_ids: Vec<usize>,
}

impl EncodedPair {
    pub fn has_unknown_target(&self) -> bool {
        self.target_ids.contains(&UNK)
    }

    /// Number of real (non-PAD) input positions.
    pub fn input_len(&self) -> usize {
        self.input_ids.iter().position(|&i| i == PAD).unwrap_or(self.input_ids.len())
    }
}

/// Term ids padded to `t_x`. Terms beyond `t_x` are an error.
pub fn encode_terms(terms: &TokenList, vocab: &Vocabulary, t_x: usize) -> Result<Vec<usize>> {
    if terms.is_empty() {
        return Err(Error::Invalid("pair has no topic terms".into()));
    }
    if terms.len() > t_x {
        return Err(Error::Invalid(format!("{} topic terms exceed encoder length {t_x}", terms.len())));
    }
    let mut ids: Vec<usize> = terms.iter().map(|t| vocab.id(t)).collect();
    ids.resize(t_x, PAD);
    Ok(ids)
}

pub fn encode_pair(
    pair: &TopicLabelPair,
    term_vocab: &Vocabulary,
    label_vocab: &Vocabulary,
    t_x: usize,
    max_label_len: usize,
) -> Result<EncodedPair> {
    let input_ids = encode_terms(&pair.terms, term_vocab, t_x)?;
    if pair.label.is_empty() || pair.label.len() > max_label_len {
        return Err(Error::Invalid(format!(
            "label length {} outside 1..={max_label_len}",
            pair.label.len()
        )));
    }
    let mut target_ids = Vec::with_capacity(max_label_len + 2);
    target_ids.push(SOS);
    target_ids.extend(pair.label.iter().map(|t| label_vocab.id(t)));
    target_ids.push(EOS);
    target_ids.resize(max_label_len + 2, PAD);
    Ok(EncodedPair { input_ids, target_ids })
}

/// Encodes training pairs, dropping those whose label has out-of-vocabulary tokens.
pub fn encode_training_pairs(
    pairs: &[TopicLabelPair],
    term_vocab: &Vocabulary,
    label_vocab: &Vocabulary,
    t_x: usize,
    max_label_len: usize,
) -> Result<Vec<EncodedPair>> {
    let mut out = Vec::with_capacity(pairs.len());
    let mut dropped = 0;
    for p in pairs {
        let e = encode_pair(p, term_vocab, label_vocab, t_x, max_label_len)?;
        if e.has_unknown_target() {
            dropped += 1;
        } else {
            out.push(e);
        }
    }
    if dropped > 0 {
        info!("dropped {dropped} pairs with out-of-vocabulary label tokens");
    }
    Ok(out)
}

/// `label tokens<TAB>topic terms`, one pair per line.
pub fn pairs_to_tsv(pairs: &[TopicLabelPair]) -> String {
    let mut out = String::new();
    for p in pairs {
        let _ = writeln!(out, "{}\t{}", p.label.joined(), p.terms.joined());
    }
    out
}

pub fn pairs_from_tsv(text: &str, location: &str) -> Result<Vec<TopicLabelPair>> {
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(Error::parse(
                location,
                i + 1,
                format!("expected 2 tab-separated fields, found {}", fields.len()),
            ));
        }
        let label = TokenList::from_joined(fields[0]);
        if label.is_empty() {
            return Err(Error::parse(location, i + 1, "empty label"));
        }
        pairs.push(TopicLabelPair {
            label,
            terms: TokenList::from_joined(fields[1]),
        });
    }
    Ok(pairs)
}

pub fn write_pairs(path: &Path, pairs: &[TopicLabelPair]) -> Result<()> {
    std::fs::write(path, pairs_to_tsv(pairs)).map_err(|e| Error::io(path, e))
}

pub fn read_pairs(path: &Path) -> Result<Vec<TopicLabelPair>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    pairs_from_tsv(&text, &path.display().to_string())
}
