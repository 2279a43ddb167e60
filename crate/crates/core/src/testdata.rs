//! Evaluation topics with rated gold labels, the rating filter, and topic
//! extension by embedding-centroid retrieval plus pooled TFIDF.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader};
use std::path::Path;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::corpus::{normalize_label, Article, Preprocessor, TokenList};
use crate::eval::{cosine, EmbeddingTable};
use crate::tfidf::{rank_counts, DfIndex, ScoredTerm};
use crate::{Error, Result};

pub const MAX_RATING: f64 = 3.0;
pub const DEFAULT_MIN_AVG_RATING: f64 = 2.0;
pub const DEFAULT_N_DOCS: usize = 5;
pub const DEFAULT_EXTRA_TERMS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct GoldLabel {
    /// Label as it appears in the topics file.
    pub text: String,
    pub tokens: TokenList,
    /// Individual ratings when the file lists them.
    pub ratings: Option<Vec<f64>>,
    pub avg_rating: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topic {
    pub topic_id: String,
    /// Ordered by descending marginal probability.
    pub terms: TokenList,
    pub golds: Vec<GoldLabel>,
}

impl Topic {
    pub fn gold_tokens(&self) -> Vec<TokenList> {
        self.golds.iter().map(|g| g.tokens.clone()).collect()
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGold {
    label: String,
    #[serde(default)]
    ratings: Option<Vec<f64>>,
    #[serde(default)]
    avg_rating: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTopic {
    topic_id: String,
    terms: Vec<String>,
    #[serde(default)]
    gold_labels: Vec<RawGold>,
}

#[derive(Serialize)]
struct OutGold<'a> {
    label: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    ratings: Option<&'a [f64]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    avg_rating: Option<f64>,
}

#[derive(Serialize)]
struct OutTopic<'a> {
    topic_id: &'a str,
    terms: &'a [String],
    gold_labels: Vec<OutGold<'a>>,
}

fn check_rating(r: f64) -> std::result::Result<f64, String> {
    if (0.0..=MAX_RATING).contains(&r) {
        Ok(r)
    } else {
        Err(format!("rating {r} outside [0, {MAX_RATING}]"))
    }
}

fn convert(raw: RawTopic) -> std::result::Result<Topic, String> {
    if raw.topic_id.is_empty() {
        return Err("empty topic_id".into());
    }
    if raw.terms.is_empty() {
        return Err(format!("topic `{}` has no terms", raw.topic_id));
    }
    let mut seen = HashSet::new();
    for t in &raw.terms {
        if t.is_empty() || t.chars().any(char::is_whitespace) {
            return Err(format!("topic `{}` has a malformed term `{t}`", raw.topic_id));
        }
        if !seen.insert(t.as_str()) {
            return Err(format!("topic `{}` repeats term `{t}`", raw.topic_id));
        }
    }
    let golds = raw
        .gold_labels
        .into_iter()
        .map(|g| {
            let avg_rating = match (&g.ratings, g.avg_rating) {
                (Some(rs), None) if !rs.is_empty() => {
                    for &r in rs {
                        check_rating(r)?;
                    }
                    rs.iter().sum::<f64>() / rs.len() as f64
                }
                (None, Some(a)) => check_rating(a)?,
                _ => return Err(format!("gold `{}` needs a non-empty `ratings` or an `avg_rating`", g.label)),
            };
            let tokens = normalize_label(&g.label).map_err(|e| e.to_string())?;
            Ok(GoldLabel {
                text: g.label,
                tokens,
                ratings: g.ratings,
                avg_rating,
            })
        })
        .collect::<std::result::Result<Vec<_>, String>>()?;
    Ok(Topic {
        topic_id: raw.topic_id,
        terms: TokenList::new(raw.terms),
        golds,
    })
}

/// Reads JSON Lines topics in file order.
pub fn read_topics<R: BufRead>(reader: R, location: &str) -> Result<Vec<Topic>> {
    let mut topics = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::parse(location, line_no, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawTopic = serde_json::from_str(&line).map_err(|e| Error::parse(location, line_no, e.to_string()))?;
        let topic = convert(raw).map_err(|m| Error::parse(location, line_no, m))?;
        if !ids.insert(topic.topic_id.clone()) {
            return Err(Error::parse(location, line_no, format!("duplicate topic id `{}`", topic.topic_id)));
        }
        topics.push(topic);
    }
    Ok(topics)
}

pub fn load_topics(path: &Path) -> Result<Vec<Topic>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_topics(BufReader::new(f), &path.display().to_string())
}

pub fn topics_to_jsonl(topics: &[Topic]) -> String {
    let mut out = String::new();
    for t in topics {
        let rec = OutTopic {
            topic_id: &t.topic_id,
            terms: &t.terms,
            gold_labels: t
                .golds
                .iter()
                .map(|g| OutGold {
                    label: &g.text,
                    ratings: g.ratings.as_deref(),
                    avg_rating: if g.ratings.is_some() { None } else { Some(g.avg_rating) },
                })
                .collect(),
        };
        out.push_str(&serde_json::to_string(&rec).expect("topic serializes"));
        out.push('\n');
    }
    out
}

pub fn write_topics(path: &Path, topics: &[Topic]) -> Result<()> {
    std::fs::write(path, topics_to_jsonl(topics)).map_err(|e| Error::io(path, e))
}

/// Keeps golds whose average rating is at least `min_avg`; drops topics left
/// without golds.
pub fn filter_gold_labels(topics: &[Topic], min_avg: f64) -> Vec<Topic> {
    let kept: Vec<Topic> = topics
        .iter()
        .filter_map(|t| {
            let golds: Vec<GoldLabel> = t.golds.iter().filter(|g| g.avg_rating >= min_avg).cloned().collect();
            (!golds.is_empty()).then(|| Topic { golds, ..t.clone() })
        })
        .collect();
    info!(
        "gold filter at {min_avg}: kept {} of {} topics, {} golds",
        kept.len(),
        topics.len(),
        kept.iter().map(|t| t.golds.len()).sum::<usize>()
    );
    kept
}

fn centroid<'a, I: IntoIterator<Item = &'a String>>(tokens: I, table: &EmbeddingTable) -> Option<Vec<f64>> {
    let mut sum = vec![0.0; table.dim()];
    let mut n = 0usize;
    for t in tokens {
        if let Some(v) = table.get(t) {
            sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
            n += 1;
        }
    }
    (n > 0).then(|| sum.into_iter().map(|s| s / n as f64).collect())
}

/// Preprocessed articles with their embedding centroids, built once per
/// corpus.
pub struct DocumentVectors {
    ids: Vec<String>,
    terms: Vec<TokenList>,
    centroids: Vec<Option<Vec<f64>>>,
}

impl DocumentVectors {
    pub fn new(corpus: &[Article], pre: &Preprocessor, table: &EmbeddingTable) -> Self {
        let terms: Vec<TokenList> = corpus.iter().map(|a| pre.body_terms(a)).collect();
        let centroids = terms.iter().map(|t| centroid(t.iter(), table)).collect();
        DocumentVectors {
            ids: corpus.iter().map(|a| a.id.clone()).collect(),
            terms,
            centroids,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Articles by cosine to the topic centroid, descending, ties by id.
    /// Articles with no in-table tokens score 0.
    pub fn rank(&self, topic: &Topic, table: &EmbeddingTable) -> Result<Vec<(String, f64)>> {
        let q = centroid(topic.terms.iter(), table)
            .ok_or_else(|| Error::Invalid(format!("topic `{}` has no terms in the embedding table", topic.topic_id)))?;
        let mut ranked: Vec<(String, f64)> = self
            .ids
            .iter()
            .zip(&self.centroids)
            .map(|(id, c)| (id.clone(), c.as_ref().map_or(0.0, |c| cosine(&q, c))))
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Ok(ranked)
    }
}

pub fn rank_docs_for_topic(
    topic: &Topic,
    corpus: &[Article],
    pre: &Preprocessor,
    table: &EmbeddingTable,
) -> Result<Vec<(String, f64)>> {
    DocumentVectors::new(corpus, pre, table).rank(topic, table)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedTopic {
    pub topic: Topic,
    pub additions: Vec<ScoredTerm>,
    pub retrieved: Vec<String>,
    /// Fewer than the requested number of new terms were available.
    pub short: bool,
}

/// Appends the `k` best pooled-TFIDF terms of the `n_docs` closest articles
/// that are not already in the topic.
pub fn extend_topic_with(
    topic: &Topic,
    docs: &DocumentVectors,
    index: &DfIndex,
    table: &EmbeddingTable,
    n_docs: usize,
    k: usize,
) -> Result<ExtendedTopic> {
    if docs.is_empty() {
        return Err(Error::Invalid("topic extension over an empty corpus".into()));
    }
    let ranked = docs.rank(topic, table)?;
    let pos: HashMap<&str, usize> = docs.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let retrieved: Vec<String> = ranked.into_iter().take(n_docs).map(|(id, _)| id).collect();
    let existing: HashSet<&str> = topic.terms.iter().map(String::as_str).collect();
    let mut pooled: HashMap<String, usize> = HashMap::new();
    for id in &retrieved {
        for t in docs.terms[pos[id.as_str()]].iter() {
            if !existing.contains(t.as_str()) {
                *pooled.entry(t.clone()).or_insert(0) += 1;
            }
        }
    }
    let additions = rank_counts(pooled, index, k)?.terms;
    let short = additions.len() < k;
    if short {
        warn!("topic `{}`: only {} of {k} additional terms available", topic.topic_id, additions.len());
    }
    let mut terms = topic.terms.to_vec();
    terms.extend(additions.iter().map(|s| s.token.clone()));
    Ok(ExtendedTopic {
        topic: Topic {
            terms: TokenList::new(terms),
            ..topic.clone()
        },
        additions,
        retrieved,
        short,
    })
}

pub fn extend_topic(
    topic: &Topic,
    corpus: &[Article],
    pre: &Preprocessor,
    index: &DfIndex,
    table: &EmbeddingTable,
    n_docs: usize,
    k: usize,
) -> Result<ExtendedTopic> {
    extend_topic_with(topic, &DocumentVectors::new(corpus, pre, table), index, table, n_docs, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::StopwordSet;
    use crate::tfidf::build_df_index;
    use proptest::prelude::*;

    fn topic(terms: &str) -> Topic {
        Topic {
            topic_id: "t".into(),
            terms: TokenList::from_joined(terms),
            golds: vec![],
        }
    }

    fn art(id: &str, text: &str) -> Article {
        Article {
            id: id.into(),
            title: "title".into(),
            text: text.into(),
        }
    }

    fn plain() -> Preprocessor {
        Preprocessor::new(StopwordSet::new(Vec::<String>::new()), HashSet::new())
    }

    #[test]
    fn reads_both_rating_forms() {
        let text = r#"{"topic_id": "1", "terms": ["oil", "energy"], "gold_labels": [{"label": "Oil Energy", "ratings": [2, 3, 1]}]}
{"topic_id": "2", "terms": ["war"], "gold_labels": [{"label": "war", "avg_rating": 1.5}]}
"#;
        let ts = read_topics(text.as_bytes(), "t").unwrap();
        assert_eq!(ts.len(), 2);
        assert_eq!(ts[0].golds[0].tokens, TokenList::from_joined("oil energy"));
        assert_eq!(ts[0].golds[0].avg_rating, 2.0);
        assert_eq!(ts[1].golds[0].avg_rating, 1.5);
        let back = read_topics(topics_to_jsonl(&ts).as_bytes(), "t").unwrap();
        assert_eq!(back, ts);
    }

    #[test]
    fn rejects_bad_records() {
        let bad = [
            r#"{"topic_id": "1", "terms": ["a"], "gold_labels": [{"label": "x", "ratings": [3.5]}]}"#,
            r#"{"topic_id": "1", "terms": [], "gold_labels": []}"#,
            r#"{"topic_id": "1", "terms": ["a", "a"]}"#,
            r#"{"topic_id": "1", "terms": ["a"], "gold_labels": [{"label": "x"}]}"#,
            r#"{"topic_id": "1", "terms": ["a"], "gold_labels": [{"label": "!!", "avg_rating": 2}]}"#,
            r#"{"terms": ["a"]}"#,
        ];
        for line in bad {
            let text = format!("{{\"topic_id\": \"0\", \"terms\": [\"z\"]}}\n{line}\n");
            let err = read_topics(text.as_bytes(), "t").unwrap_err();
            assert!(matches!(err, Error::Parse { line: 2, .. }), "{line}: {err}");
        }
        let dup = "{\"topic_id\": \"0\", \"terms\": [\"z\"]}\n{\"topic_id\": \"0\", \"terms\": [\"y\"]}\n";
        assert!(read_topics(dup.as_bytes(), "t").is_err());
    }

    fn gold(text: &str, avg: f64) -> GoldLabel {
        GoldLabel {
            text: text.into(),
            tokens: TokenList::from_joined(text),
            ratings: None,
            avg_rating: avg,
        }
    }

    #[test]
    fn gold_filter_boundary() {
        let ts = vec![
            Topic {
                golds: vec![gold("a", 2.0), gold("b", 1.9)],
                ..topic("x")
            },
            Topic {
                topic_id: "u".into(),
                golds: vec![gold("c", 1.0), gold("d", 1.99)],
                ..topic("y")
            },
        ];
        let kept = filter_gold_labels(&ts, DEFAULT_MIN_AVG_RATING);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].golds, vec![gold("a", 2.0)]);
        assert_eq!(filter_gold_labels(&ts, 0.0), ts);
    }

    fn table2() -> EmbeddingTable {
        let mut t = EmbeddingTable::new(2).unwrap();
        t.insert("a", vec![1.0, 0.0]).unwrap();
        t.insert("b", vec![0.0, 1.0]).unwrap();
        t.insert("c", vec![1.0, 1.0]).unwrap();
        t
    }

    #[test]
    fn ranking_by_centroid_cosine() {
        let corpus = vec![art("d1", "b b"), art("d2", "a c"), art("d3", "c a q"), art("d0", "a b")];
        let t = topic("a c");
        let r = rank_docs_for_topic(&t, &corpus, &plain(), &table2()).unwrap();
        // Topic centroid (1, .5); d2 and d3 share the same centroid, d0 is (.5,.5), d1 is (0,1).
        let ids: Vec<&str> = r.iter().map(|x| x.0.as_str()).collect();
        assert_eq!(ids, ["d2", "d3", "d0", "d1"]);
        assert!((r[0].1 - 1.0).abs() < 1e-12);
        assert!((r[2].1 - 0.75 / (1.25f64.sqrt() * 0.5f64.sqrt())).abs() < 1e-12);
        assert!((r[3].1 - 0.5 / 1.25f64.sqrt()).abs() < 1e-12);

        let ortho = rank_docs_for_topic(&topic("a"), &[art("x", "b")], &plain(), &table2()).unwrap();
        assert_eq!(ortho[0].1, 0.0);
        assert!(rank_docs_for_topic(&topic("zz"), &corpus, &plain(), &table2()).is_err());
    }

    #[test]
    fn extension_on_a_toy_corpus() {
        let corpus = vec![art("d1", "a c x x y"), art("d2", "b z z z y"), art("d3", "w")];
        let pre = plain();
        let index = build_df_index(&corpus, &pre);
        let t = topic("a c");
        let ext = extend_topic(&t, &corpus, &pre, &index, &table2(), 2, 3).unwrap();
        // d1 then d2 are retrieved; pooled tf: x 2, y 2, z 3, b 1.
        assert_eq!(ext.retrieved, ["d1", "d2"]);
        let n = 3f64;
        let mut oracle = vec![
            ("x", 2.0 * (n / 1.0).ln()),
            ("y", 2.0 * (n / 2.0).ln()),
            ("z", 3.0 * (n / 1.0).ln()),
            ("b", 1.0 * (n / 1.0).ln()),
        ];
        oracle.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
        let want: Vec<&str> = oracle.iter().take(3).map(|x| x.0).collect();
        assert_eq!(&ext.topic.terms[..2], &["a".to_string(), "c".to_string()]);
        assert_eq!(ext.topic.terms[2..].iter().map(String::as_str).collect::<Vec<_>>(), want);
        assert!(!ext.short);

        let ext = extend_topic(&t, &corpus, &pre, &index, &table2(), 1, 5).unwrap();
        assert!(ext.short);
        assert_eq!(ext.additions.len(), 2);
        assert!(extend_topic(&t, &[], &pre, &index, &table2(), 1, 5).is_err());
    }

    proptest! {
        #[test]
        fn ranking_is_scale_invariant(s in 0.1f64..50.0, texts in prop::collection::vec("[abc ]{1,12}", 1..6)) {
            let corpus: Vec<Article> = texts.iter().enumerate().map(|(i, t)| art(&format!("d{i}"), t)).collect();
            let t = table2();
            let a = rank_docs_for_topic(&topic("a b"), &corpus, &plain(), &t).unwrap();
            let b = rank_docs_for_topic(&topic("a b"), &corpus, &plain(), &t.scaled(s)).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x.1 - y.1).abs() < 1e-9);
            }
        }

        #[test]
        fn extension_keeps_prefix_and_is_duplicate_free(texts in prop::collection::vec("[abcxyz ]{1,20}", 1..8), n_docs in 1usize..4, k in 1usize..6) {
            let corpus: Vec<Article> = texts.iter().enumerate().map(|(i, t)| art(&format!("d{i}"), t)).collect();
            let pre = plain();
            let index = build_df_index(&corpus, &pre);
            let t = topic("a c");
            let ext = extend_topic(&t, &corpus, &pre, &index, &table2(), n_docs, k).unwrap();
            prop_assert_eq!(&ext.topic.terms[..2], &t.terms[..]);
            let uniq: HashSet<&String> = ext.topic.terms.iter().collect();
            prop_assert_eq!(uniq.len(), ext.topic.terms.len());
            prop_assert!(ext.additions.len() <= k);
        }

        #[test]
        fn filter_never_grows(avgs in prop::collection::vec(prop::collection::vec(0.0f64..3.0, 0..4), 0..6), min in 0.0f64..3.0) {
            let ts: Vec<Topic> = avgs.iter().enumerate().map(|(i, a)| Topic {
                topic_id: i.to_string(),
                terms: TokenList::from_joined("x"),
                golds: a.iter().map(|&v| gold("g", v)).collect(),
            }).collect();
            let kept = filter_gold_labels(&ts, min);
            prop_assert!(kept.len() <= ts.len());
            let golds = |v: &[Topic]| v.iter().map(|t| t.golds.len()).sum::<usize>();
            prop_assert!(golds(&kept) <= golds(&ts));
        }
    }
}
