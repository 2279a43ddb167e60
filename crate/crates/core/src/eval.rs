//! Greedy-match precision/recall/F over a static embedding table, per-topic
//! and model-level aggregation, term baselines and a paired bootstrap test.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::io::BufRead;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::corpus::TokenList;
use crate::{Error, Result};

pub const DEFAULT_BOOTSTRAP_SAMPLES: usize = 10_000;

/// Token vectors of one shared dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Invalid("embedding dimension must be positive".into()));
        }
        Ok(EmbeddingTable {
            dim,
            vectors: HashMap::new(),
        })
    }

    /// Inserts or replaces a vector.
    pub fn insert(&mut self, token: impl Into<String>, v: Vec<f64>) -> Result<()> {
        let token = token.into();
        if v.len() != self.dim {
            return Err(Error::Shape(format!("`{token}` has {} components, expected {}", v.len(), self.dim)));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("embedding of `{token}`")));
        }
        self.vectors.insert(token, v);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(Vec::as_slice)
    }

    /// Cosine similarity floored at 0; 0 when either token is missing or has
    /// zero norm.
    pub fn similarity(&self, a: &str, b: &str) -> f64 {
        match (self.get(a), self.get(b)) {
            (Some(x), Some(y)) => cosine(x, y).max(0.0),
            _ => 0.0,
        }
    }

    /// Every vector multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let vectors = self
            .vectors
            .iter()
            .map(|(k, v)| (k.clone(), v.iter().map(|x| x * factor).collect()))
            .collect();
        EmbeddingTable { dim: self.dim, vectors }
    }

    /// Reads `token v1 .. vD` lines with an optional `<count> <dim>` header.
    /// The first vector fixes the dimension when there is no header.
    pub fn read<R: BufRead>(reader: R, location: &str) -> Result<Self> {
        let mut table: Option<EmbeddingTable> = None;
        let mut first = true;
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| Error::parse(location, line_no, e.to_string()))?;
            let mut fields = line.split_whitespace();
            let Some(token) = fields.next() else { continue };
            let rest: Vec<&str> = fields.collect();
            if std::mem::take(&mut first) && rest.len() == 1 {
                if let (Ok(_), Ok(dim)) = (token.parse::<usize>(), rest[0].parse::<usize>()) {
                    table = Some(EmbeddingTable::new(dim).map_err(|e| Error::parse(location, line_no, e.to_string()))?);
                    continue;
                }
            }
            let v = rest
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::parse(location, line_no, format!("bad component: {e}")))?;
            let t = match &mut table {
                Some(t) => t,
                None => table.insert(EmbeddingTable::new(v.len()).map_err(|_| Error::parse(location, line_no, "vector has no components"))?),
            };
            t.insert(token, v).map_err(|e| Error::parse(location, line_no, e.to_string()))?;
        }
        table.ok_or_else(|| Error::parse(location, 0, "no embeddings"))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(std::io::BufReader::new(f), &path.display().to_string())
    }

    /// Header line, then tokens in lexicographic order.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.len(), self.dim);
        let mut tokens: Vec<&String> = self.vectors.keys().collect();
        tokens.sort();
        for t in tokens {
            out.push_str(t);
            for x in &self.vectors[t] {
                let _ = write!(out, " {x:?}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prf {
    pub p: f64,
    pub r: f64,
    pub f: f64,
}

impl Prf {
    pub const ZERO: Prf = Prf { p: 0.0, r: 0.0, f: 0.0 };

    pub fn new(p: f64, r: f64) -> Self {
        let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        Prf { p, r, f }
    }
}

/// Precision is the mean best match of each candidate token against the
/// reference; recall the reverse.
pub fn greedy_match_prf(cand: &[String], reference: &[String], table: &EmbeddingTable) -> Result<Prf> {
    if cand.is_empty() || reference.is_empty() {
        return Err(Error::Invalid("greedy matching needs non-empty candidate and reference".into()));
    }
    let sims: Vec<Vec<f64>> = cand
        .iter()
        .map(|a| reference.iter().map(|b| table.similarity(a, b)).collect())
        .collect();
    let best = |it: &mut dyn Iterator<Item = f64>| it.fold(f64::NEG_INFINITY, f64::max);
    let p = sims.iter().map(|row| best(&mut row.iter().copied())).sum::<f64>() / cand.len() as f64;
    let r = (0..reference.len())
        .map(|j| best(&mut sims.iter().map(|row| row[j])))
        .sum::<f64>()
        / reference.len() as f64;
    Ok(Prf::new(p, r))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopicEvalResult {
    pub topic_id: String,
    pub predicted: TokenList,
    pub best_gold: TokenList,
    pub p: f64,
    pub r: f64,
    pub f: f64,
}

impl TopicEvalResult {
    pub fn prf(&self) -> Prf {
        Prf {
            p: self.p,
            r: self.r,
            f: self.f,
        }
    }
}

/// Scores `cand` against every gold and keeps the gold with the highest f
/// (ties go to the first). An empty candidate scores zero against the first
/// gold.
pub fn score_topic(topic_id: &str, cand: &TokenList, golds: &[TokenList], table: &EmbeddingTable) -> Result<TopicEvalResult> {
    let first = golds
        .first()
        .ok_or_else(|| Error::Invalid(format!("topic `{topic_id}` has no gold labels")))?;
    let mut best = (Prf::ZERO, first);
    if !cand.is_empty() {
        let mut best_f = f64::NEG_INFINITY;
        for g in golds {
            if g.is_empty() {
                return Err(Error::Invalid(format!("topic `{topic_id}` has an empty gold label")));
            }
            let s = greedy_match_prf(cand, g, table)?;
            if s.f > best_f {
                best_f = s.f;
                best = (s, g);
            }
        }
    }
    Ok(TopicEvalResult {
        topic_id: topic_id.to_string(),
        predicted: cand.clone(),
        best_gold: best.1.clone(),
        p: best.0.p,
        r: best.0.r,
        f: best.0.f,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub mean_p: f64,
    pub mean_r: f64,
    pub mean_f: f64,
}

/// Arithmetic means over topics.
pub fn summarize(results: &[TopicEvalResult]) -> Result<Summary> {
    if results.is_empty() {
        return Err(Error::Invalid("no topics to aggregate".into()));
    }
    let n = results.len() as f64;
    let mean = |f: fn(&TopicEvalResult) -> f64| results.iter().map(f).sum::<f64>() / n;
    Ok(Summary {
        mean_p: mean(|t| t.p),
        mean_r: mean(|t| t.r),
        mean_f: mean(|t| t.f),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineReport {
    /// Number of leading topic terms used as the label.
    pub k: usize,
    pub topics: Vec<TopicEvalResult>,
    pub summary: Summary,
    /// Paired bootstrap p-value for "model f ≤ baseline f"; absent with
    /// fewer than two topics.
    pub p_value: Option<f64>,
    pub n_resamples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub topics: Vec<TopicEvalResult>,
    pub summary: Summary,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub baselines: Vec<BaselineReport>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn score_model(results: Vec<TopicEvalResult>) -> Result<EvalReport> {
    let summary = summarize(&results)?;
    Ok(EvalReport {
        topics: results,
        summary,
        baselines: Vec::new(),
    })
}

/// The first `k` topic terms.
pub fn baseline_label(terms: &TokenList, k: usize) -> Result<TokenList> {
    if terms.is_empty() {
        return Err(Error::Invalid("baseline label of an empty topic".into()));
    }
    if k == 0 {
        return Err(Error::Invalid("baseline needs k ≥ 1".into()));
    }
    Ok(terms.truncated(k))
}

/// Fraction of `n_resamples` index resamples (with replacement) in which
/// `mean(a) ≤ mean(b)`. Resample `i` draws from its own generator stream so
/// the result does not depend on evaluation order.
pub fn paired_bootstrap(a: &[f64], b: &[f64], n_resamples: usize, seed: u64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Invalid(format!("paired scores of lengths {} and {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::Invalid("paired bootstrap needs at least two topics".into()));
    }
    if n_resamples == 0 {
        return Err(Error::Invalid("paired bootstrap needs at least one resample".into()));
    }
    let n = a.len();
    let mut hits = 0usize;
    for i in 0..n_resamples {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let (mut sa, mut sb) = (0.0, 0.0);
        for _ in 0..n {
            let j = rng.gen_range(0..n);
            sa += a[j];
            sb += b[j];
        }
        if sa <= sb {
            hits += 1;
        }
    }
    Ok(hits as f64 / n_resamples as f64)
}

/// Parses `topic_id<TAB>label tokens`. An empty label is an empty prediction.
pub fn predictions_from_tsv(text: &str, location: &str) -> Result<Vec<(String, TokenList)>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, label) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(location, i + 1, "expected `topic_id<TAB>label`"))?;
        if id.is_empty() || label.contains('\t') {
            return Err(Error::parse(location, i + 1, "expected `topic_id<TAB>label`"));
        }
        if !seen.insert(id.to_string()) {
            return Err(Error::parse(location, i + 1, format!("duplicate topic id `{id}`")));
        }
        out.push((id.to_string(), TokenList::from_joined(label)));
    }
    Ok(out)
}

pub fn predictions_to_tsv(preds: &[(String, TokenList)]) -> String {
    preds.iter().map(|(id, l)| format!("{id}\t{}\n", l.joined())).collect()
}

pub fn read_predictions(path: &Path) -> Result<Vec<(String, TokenList)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    predictions_from_tsv(&text, &path.display().to_string())
}

pub fn write_predictions(path: &Path, preds: &[(String, TokenList)]) -> Result<()> {
    std::fs::write(path, predictions_to_tsv(preds)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tl(s: &str) -> TokenList {
        TokenList::from_joined(s)
    }

    fn abc() -> EmbeddingTable {
        let mut t = EmbeddingTable::new(2).unwrap();
        let h = 2f64.sqrt() / 2.0;
        t.insert("a", vec![1.0, 0.0]).unwrap();
        t.insert("b", vec![0.0, 1.0]).unwrap();
        t.insert("c", vec![h, h]).unwrap();
        t
    }

    #[test]
    fn two_dim_example() {
        let s = greedy_match_prf(&tl("a"), &tl("b c"), &abc()).unwrap();
        // p = max(0, √2/2); r = (0 + √2/2) / 2.
        let h = 2f64.sqrt() / 2.0;
        assert!((s.p - h).abs() < 1e-12);
        assert!((s.r - h / 2.0).abs() < 1e-12);
        assert!((s.f - 2.0 * h * (h / 2.0) / (1.5 * h)).abs() < 1e-12);
        assert!((s.p - 0.70711).abs() < 1e-4 && (s.r - 0.35355).abs() < 1e-4 && (s.f - 0.47140).abs() < 1e-4);
    }

    #[test]
    fn identity_and_missing_tokens() {
        let t = abc();
        assert_eq!(greedy_match_prf(&tl("a c"), &tl("a c"), &t).unwrap(), Prf { p: 1.0, r: 1.0, f: 1.0 });
        assert_eq!(greedy_match_prf(&tl("x y"), &tl("a"), &t).unwrap(), Prf::ZERO);
        assert!(greedy_match_prf(&tl(""), &tl("a"), &t).is_err());
    }

    #[test]
    fn topic_scoring_rules() {
        let t = abc();
        let r = score_topic("t", &tl("a"), &[tl("b"), tl("b c")], &t).unwrap();
        assert_eq!(r.best_gold, tl("b c"));
        assert!((r.f - 0.47140).abs() < 1e-4);

        let r = score_topic("t", &tl("c a"), &[tl("b"), tl("a c"), tl("c a")], &t).unwrap();
        assert_eq!((r.f, r.best_gold.clone()), (1.0, tl("a c")));

        let r = score_topic("t", &tl(""), &[tl("b"), tl("a")], &t).unwrap();
        assert_eq!((r.p, r.r, r.f), (0.0, 0.0, 0.0));
        assert_eq!(r.best_gold, tl("b"));
        assert!(score_topic("t", &tl("a"), &[], &t).is_err());
    }

    fn result(f: f64) -> TopicEvalResult {
        TopicEvalResult {
            topic_id: "t".into(),
            predicted: tl("a"),
            best_gold: tl("a"),
            p: f,
            r: f,
            f,
        }
    }

    #[test]
    fn model_means() {
        let rep = score_model(vec![result(1.0), result(0.5)]).unwrap();
        assert_eq!(rep.summary.mean_f, 0.75);
        let rep = score_model(vec![result(0.3)]).unwrap();
        assert_eq!(rep.summary, Summary { mean_p: 0.3, mean_r: 0.3, mean_f: 0.3 });
        assert!(score_model(vec![]).is_err());
        let json = rep.to_json();
        for field in ["topic_id", "\"p\"", "\"r\"", "\"f\"", "best_gold", "mean_p", "mean_r", "mean_f"] {
            assert!(json.contains(field), "{field}");
        }
    }

    #[test]
    fn baselines() {
        let terms = tl("oil energy gas water power fuel global price plant natural");
        assert_eq!(baseline_label(&terms, 2).unwrap(), tl("oil energy"));
        assert_eq!(baseline_label(&terms, 3).unwrap(), tl("oil energy gas"));
        assert_eq!(baseline_label(&tl("oil"), 2).unwrap(), tl("oil"));
        assert!(baseline_label(&tl(""), 2).is_err());
    }

    #[test]
    fn bootstrap_edge_cases() {
        let a = [0.3, 0.5, 0.9, 0.1];
        assert_eq!(paired_bootstrap(&a, &a, 500, 1).unwrap(), 1.0);
        let b: Vec<f64> = a.iter().map(|x| x - 0.05).collect();
        assert_eq!(paired_bootstrap(&a, &b, 500, 1).unwrap(), 0.0);
        assert!(paired_bootstrap(&a, &b[..3], 10, 1).is_err());
        assert!(paired_bootstrap(&a[..1], &b[..1], 10, 1).is_err());
        assert_eq!(paired_bootstrap(&a, &b, 300, 4).unwrap(), paired_bootstrap(&a, &b, 300, 4).unwrap());
    }

    #[test]
    fn bootstrap_matches_exhaustive_enumeration() {
        let a = [0.9, 0.2, 0.6, 0.4];
        let b = [0.5, 0.7, 0.3, 0.45];
        let mut hits = 0;
        for code in 0..256usize {
            let idx = [code & 3, (code >> 2) & 3, (code >> 4) & 3, (code >> 6) & 3];
            let sa: f64 = idx.iter().map(|&j| a[j]).sum();
            let sb: f64 = idx.iter().map(|&j| b[j]).sum();
            if sa <= sb {
                hits += 1;
            }
        }
        let exact = hits as f64 / 256.0;
        let n = 40_000;
        let est = paired_bootstrap(&a, &b, n, 17).unwrap();
        let sigma = (exact * (1.0 - exact) / n as f64).sqrt();
        assert!((est - exact).abs() < 4.0 * sigma, "{est} vs {exact}");
    }

    #[test]
    fn embedding_file_format() {
        let text = "2 3\nfoo 1 0 0\nbar 0 1 0.5\nfoo 0 0 1\n";
        let t = EmbeddingTable::read(text.as_bytes(), "e").unwrap();
        assert_eq!((t.len(), t.dim()), (2, 3));
        assert_eq!(t.get("foo").unwrap(), &[0.0, 0.0, 1.0]);
        let back = EmbeddingTable::read(t.to_text().as_bytes(), "e").unwrap();
        assert_eq!(back, t);

        let headerless = EmbeddingTable::read("x 1 2 3\ny 4 5 6\n".as_bytes(), "e").unwrap();
        assert_eq!(headerless.len(), 2);
        let err = EmbeddingTable::read("x 1 2 3\ny 4 5\n".as_bytes(), "e").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        assert!(EmbeddingTable::read("x 1 nan_ 3\n".as_bytes(), "e").is_err());
    }

    #[test]
    fn table_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.txt");
        let mut t = abc();
        t.insert("d", vec![0.1, -1e-300]).unwrap();
        t.write(&path).unwrap();
        assert_eq!(EmbeddingTable::load(&path).unwrap(), t);
    }

    #[test]
    fn prediction_tsv() {
        let p = predictions_from_tsv("t1\tmental disorder\nt2\t\n", "p").unwrap();
        assert_eq!(p[0], ("t1".to_string(), tl("mental disorder")));
        assert!(p[1].1.is_empty());
        assert_eq!(predictions_from_tsv(&predictions_to_tsv(&p), "p").unwrap(), p);
        assert!(predictions_from_tsv("t1 x\n", "p").is_err());
        assert!(predictions_from_tsv("t1\ta\nt1\tb\n", "p").is_err());
    }

    const WORDS: [&str; 6] = ["a", "b", "c", "d", "e", "zz"];

    fn table_strategy() -> impl Strategy<Value = EmbeddingTable> {
        prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 5).prop_map(|vs| {
            let mut t = EmbeddingTable::new(3).unwrap();
            for (w, v) in WORDS.iter().zip(vs) {
                t.insert(*w, v).unwrap();
            }
            t
        })
    }

    fn tokens() -> impl Strategy<Value = TokenList> {
        prop::collection::vec(prop::sample::select(&WORDS[..]), 1..5)
            .prop_map(|v| TokenList::new(v.into_iter().map(String::from).collect()))
    }

    proptest! {
        #[test]
        fn swap_symmetry_and_bounds(t in table_strategy(), a in tokens(), b in tokens()) {
            let x = greedy_match_prf(&a, &b, &t).unwrap();
            let y = greedy_match_prf(&b, &a, &t).unwrap();
            prop_assert!((x.p - y.r).abs() < 1e-12 && (x.r - y.p).abs() < 1e-12);
            prop_assert!((x.f - y.f).abs() < 1e-12);
            for v in [x.p, x.r, x.f] {
                prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
            }
            if x.p > 0.0 && x.r > 0.0 {
                prop_assert!(x.f <= x.p.max(x.r) + 1e-12 && x.f >= x.p.min(x.r) - 1e-12);
            }
        }

        #[test]
        fn adding_a_gold_never_hurts(t in table_strategy(), cand in tokens(),
                                     golds in prop::collection::vec(tokens(), 1..4), extra in tokens()) {
            let before = score_topic("t", &cand, &golds, &t).unwrap();
            let mut more = golds.clone();
            more.push(extra);
            let after = score_topic("t", &cand, &more, &t).unwrap();
            prop_assert!(after.f >= before.f);
        }

        #[test]
        fn scale_invariance(t in table_strategy(), a in tokens(), b in tokens(), s in 0.01f64..100.0) {
            let x = greedy_match_prf(&a, &b, &t).unwrap();
            let y = greedy_match_prf(&a, &b, &t.scaled(s)).unwrap();
            prop_assert!((x.p - y.p).abs() < 1e-9 && (x.r - y.r).abs() < 1e-9 && (x.f - y.f).abs() < 1e-9);
        }

        #[test]
        fn means_are_order_free(fs in prop::collection::vec(0.0f64..1.0, 1..20), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let rs: Vec<_> = fs.iter().map(|&f| result(f)).collect();
            let mut shuffled = rs.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let a = summarize(&rs).unwrap();
            let b = summarize(&shuffled).unwrap();
            prop_assert!((a.mean_f - b.mean_f).abs() < 1e-12);
            let naive = fs.iter().sum::<f64>() / fs.len() as f64;
            prop_assert!((a.mean_f - naive).abs() < 1e-12);
        }
    }
}
