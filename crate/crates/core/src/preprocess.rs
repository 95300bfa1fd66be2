//! Corpus ingestion, text cleaning, deduplication, keyword filtering and
//! deterministic splits.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::Path;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use unicode_properties::UnicodeEmoji;

use crate::corpus::{AnnotatorKind, Corpus, CorpusError, Post};

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {reason}")]
    RecordInvalid { line: usize, reason: String },
    #[error("duplicate post id `{0}`")]
    DuplicateId(String),
    #[error("keyword must not be empty")]
    EmptyKeyword,
    #[error("invalid split specification: {0}")]
    InvalidSplit(String),
    #[error("pinned test id `{0}` is not in the corpus")]
    UnknownPinnedId(String),
    #[error("only {available} posts qualify for the restricted test draw, {needed} requested")]
    InsufficientEligible { needed: usize, available: usize },
}

/// Reads a JSON-lines corpus: `{"id", "text", "created_at", "author_hash"?, "meta"?}` per line.
pub fn ingest_jsonl(path: &Path) -> Result<Corpus, PreprocessError> {
    let reader = BufReader::new(File::open(path)?);
    let mut corpus = Corpus::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let post = parse_record(&line).map_err(|reason| PreprocessError::RecordInvalid {
            line: line_no,
            reason,
        })?;
        corpus.push(post).map_err(|e| match e {
            CorpusError::DuplicateId(id) => PreprocessError::DuplicateId(id),
            other => PreprocessError::RecordInvalid {
                line: line_no,
                reason: other.to_string(),
            },
        })?;
    }
    Ok(corpus)
}

fn parse_record(line: &str) -> Result<Post, String> {
    let value: Value = serde_json::from_str(line).map_err(|e| format!("malformed JSON: {e}"))?;
    let obj = value.as_object().ok_or("record is not a JSON object")?;
    let string_field = |name: &str| -> Result<String, String> {
        match obj.get(name) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(format!("field `{name}` must be a string")),
            None => Err(format!("missing field `{name}`")),
        }
    };
    let id = string_field("id")?;
    let text = string_field("text")?;
    let created_at = match obj.get("created_at") {
        Some(v) => v.as_i64().ok_or("field `created_at` must be an integer")?,
        None => return Err("missing field `created_at`".into()),
    };
    let author_hash = match obj.get("author_hash") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => return Err("field `author_hash` must be a string".into()),
    };
    let mut meta = BTreeMap::new();
    match obj.get("meta") {
        None | Some(Value::Null) => {}
        Some(Value::Object(m)) => {
            for (k, v) in m {
                let s = v.as_str().ok_or_else(|| format!("meta value `{k}` must be a string"))?;
                meta.insert(k.clone(), s.to_string());
            }
        }
        Some(_) => return Err("field `meta` must be an object".into()),
    }
    if text.is_empty() {
        return Err("field `text` is empty".into());
    }
    if created_at < 0 {
        return Err("field `created_at` is negative".into());
    }
    Ok(Post {
        id,
        text,
        created_at,
        author_hash,
        meta,
    })
}

fn mention_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"@\w+").unwrap())
}

fn is_emoji(c: char) -> bool {
    !c.is_ascii() && c.is_emoji_char()
}

fn push_emoji_name(out: &mut String, c: char) -> bool {
    let Some(name) = unicode_names2::name(c) else {
        return false;
    };
    out.push(':');
    for ch in name.to_string().chars() {
        out.push(if ch == ' ' { '_' } else { ch.to_ascii_lowercase() });
    }
    out.push(':');
    true
}

fn replace_emoji(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 16);
    let mut after_emoji = false;
    for c in text.chars() {
        if matches!(c, '\u{FE0F}' | '\u{200D}') && after_emoji {
            continue;
        }
        if ('\u{E0020}'..='\u{E007F}').contains(&c) {
            continue;
        }
        if is_emoji(c) && push_emoji_name(&mut out, c) {
            after_emoji = true;
            continue;
        }
        after_emoji = false;
        out.push(c);
    }
    out
}

/// Anonymizes @-handles, spells emoji as `:unicode_name:` and normalizes whitespace.
pub fn clean_text(text: &str) -> String {
    let mut s = if text.contains('@') {
        mention_re().replace_all(text, "@mention").into_owned()
    } else {
        text.to_string()
    };
    if !s.is_ascii() {
        s = replace_emoji(&s);
    }
    let mut out = String::with_capacity(s.len());
    for (i, word) in s.split_whitespace().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub input: usize,
    pub emptied_by_cleaning: usize,
    pub rejected_by_language: usize,
    pub duplicates_removed: usize,
    pub keyword_rejected: usize,
    pub output: usize,
}

/// Cleans every post, preserving order. Posts whose text cleans to nothing are dropped;
/// the count of dropped posts is returned alongside.
pub fn clean_corpus(corpus: &Corpus) -> (Corpus, usize) {
    let cleaned: Vec<Option<Post>> = corpus
        .posts()
        .par_iter()
        .map(|p| {
            let text = clean_text(&p.text);
            (!text.is_empty()).then(|| Post { text, ..p.clone() })
        })
        .collect();
    let dropped = cleaned.iter().filter(|p| p.is_none()).count();
    let mut out = Corpus::from_posts(cleaned.into_iter().flatten().collect())
        .expect("ids were unique in the source corpus");
    for a in corpus.annotations() {
        if out.contains(&a.post_id) {
            out.annotate(a.clone()).expect("annotation was valid in the source corpus");
        }
    }
    (out, dropped)
}

/// Keeps the first post for each exact text; returns the deduplicated corpus and the removed count.
pub fn dedup(corpus: &Corpus) -> (Corpus, usize) {
    let mut seen: HashSet<&str> = HashSet::with_capacity(corpus.len());
    let keep: Vec<usize> = corpus
        .posts()
        .iter()
        .enumerate()
        .filter(|(_, p)| seen.insert(p.text.as_str()))
        .map(|(i, _)| i)
        .collect();
    let removed = corpus.len() - keep.len();
    (corpus.select(&keep), removed)
}

/// Case-insensitive substring filter.
pub fn keyword_filter(corpus: &Corpus, keyword: &str) -> Result<Corpus, PreprocessError> {
    if keyword.is_empty() {
        return Err(PreprocessError::EmptyKeyword);
    }
    let needle = keyword.to_lowercase();
    let keep: Vec<usize> = corpus
        .posts()
        .par_iter()
        .enumerate()
        .filter(|(_, p)| p.text.to_lowercase().contains(&needle))
        .map(|(i, _)| i)
        .collect();
    Ok(corpus.select(&keep))
}

/// Predicate deciding whether a post's language is kept.
pub type LanguagePredicate = dyn Fn(&str) -> bool + Send + Sync;

#[derive(Default)]
pub struct PreprocessOptions {
    pub keyword: Option<String>,
    /// Accepts every post when unset.
    pub language_filter: Option<Box<LanguagePredicate>>,
}

/// clean → language hook → dedup → keyword filter.
pub fn preprocess(
    corpus: &Corpus,
    options: &PreprocessOptions,
) -> Result<(Corpus, PreprocessReport), PreprocessError> {
    let mut report = PreprocessReport {
        input: corpus.len(),
        ..Default::default()
    };
    if matches!(options.keyword.as_deref(), Some("")) {
        return Err(PreprocessError::EmptyKeyword);
    }
    let (mut current, emptied) = clean_corpus(corpus);
    report.emptied_by_cleaning = emptied;
    if let Some(pred) = &options.language_filter {
        let before = current.len();
        current = current.filter(|p| pred(&p.text));
        report.rejected_by_language = before - current.len();
    }
    let (deduped, removed) = dedup(&current);
    report.duplicates_removed = removed;
    current = deduped;
    if let Some(k) = &options.keyword {
        let before = current.len();
        current = keyword_filter(&current, k)?;
        report.keyword_rejected = before - current.len();
    }
    report.output = current.len();
    Ok((current, report))
}

/// How a labeled corpus is partitioned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    /// Only posts annotated by this kind of source may be drawn into test.
    #[serde(default)]
    pub test_source_restriction: Option<AnnotatorKind>,
    /// Number of restriction-qualifying posts drawn into test before the fractional split.
    #[serde(default)]
    pub restricted_test_draws: usize,
    #[serde(default)]
    pub pinned_test_ids: BTreeSet<String>,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train: f64, val: f64, test: f64, seed: u64) -> Self {
        SplitSpec {
            train_fraction: train,
            val_fraction: val,
            test_fraction: test,
            test_source_restriction: None,
            restricted_test_draws: 0,
            pinned_test_ids: BTreeSet::new(),
            seed,
        }
    }

    fn validate(&self) -> Result<(), PreprocessError> {
        let fr = [self.train_fraction, self.val_fraction, self.test_fraction];
        if fr.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(PreprocessError::InvalidSplit("fractions must lie in [0, 1]".into()));
        }
        if (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(PreprocessError::InvalidSplit("fractions must sum to 1".into()));
        }
        if self.restricted_test_draws > 0 && self.test_source_restriction.is_none() {
            return Err(PreprocessError::InvalidSplit(
                "restricted test draws need a test source restriction".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: Corpus,
    pub val: Corpus,
    pub test: Corpus,
}

impl Split {
    pub fn manifest(&self, spec: &SplitSpec) -> SplitManifest {
        let ids = |c: &Corpus| c.iter().map(|p| p.id.clone()).collect();
        SplitManifest {
            spec: spec.clone(),
            train_ids: ids(&self.train),
            val_ids: ids(&self.val),
            test_ids: ids(&self.test),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub spec: SplitSpec,
    pub train_ids: Vec<String>,
    pub val_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

fn floor_count(n: usize, fraction: f64) -> usize {
    ((n as f64) * fraction + 1e-9).floor() as usize
}

/// Deterministic train/val/test partition.
///
/// Pinned ids and `restricted_test_draws` qualifying posts go to test first; the remaining
/// posts are shuffled with a seeded ChaCha8 stream and cut into `floor(R·train)`,
/// `floor(R·val)`, with the remainder joining test. Each partition keeps corpus order.
pub fn split(corpus: &Corpus, spec: &SplitSpec) -> Result<Split, PreprocessError> {
    spec.validate()?;
    for id in &spec.pinned_test_ids {
        if !corpus.contains(id) {
            return Err(PreprocessError::UnknownPinnedId(id.clone()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = corpus.len();
    let mut in_test = vec![false; n];
    for id in &spec.pinned_test_ids {
        in_test[corpus.position(id).unwrap()] = true;
    }

    if let Some(kind) = spec.test_source_restriction {
        let qualifying: HashSet<&str> = corpus
            .annotations()
            .iter()
            .filter(|a| a.annotator.kind == kind)
            .map(|a| a.post_id.as_str())
            .collect();
        let mut eligible: Vec<usize> = (0..n)
            .filter(|&i| !in_test[i] && qualifying.contains(corpus.posts()[i].id.as_str()))
            .collect();
        if eligible.len() < spec.restricted_test_draws {
            return Err(PreprocessError::InsufficientEligible {
                needed: spec.restricted_test_draws,
                available: eligible.len(),
            });
        }
        eligible.shuffle(&mut rng);
        for &i in &eligible[..spec.restricted_test_draws] {
            in_test[i] = true;
        }
    }

    let mut pool: Vec<usize> = (0..n).filter(|&i| !in_test[i]).collect();
    pool.shuffle(&mut rng);
    let n_train = floor_count(pool.len(), spec.train_fraction);
    let n_val = floor_count(pool.len(), spec.val_fraction).min(pool.len() - n_train);
    let mut train: Vec<usize> = pool[..n_train].to_vec();
    let mut val: Vec<usize> = pool[n_train..n_train + n_val].to_vec();
    for &i in &pool[n_train + n_val..] {
        in_test[i] = true;
    }
    let test: Vec<usize> = (0..n).filter(|&i| in_test[i]).collect();
    train.sort_unstable();
    val.sort_unstable();
    Ok(Split {
        train: corpus.select(&train),
        val: corpus.select(&val),
        test: corpus.select(&test),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Annotation, Annotator};
    use crate::frame::LabelSet;
    use proptest::prelude::*;
    use std::io::Write;

    fn write_tmp(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    fn corpus_of(texts: &[&str]) -> Corpus {
        Corpus::from_posts(
            texts
                .iter()
                .enumerate()
                .map(|(i, t)| Post::new(format!("p{i}"), *t, i as i64))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn ingest_valid_file() {
        let f = write_tmp(&[
            r#"{"id":"a","text":"one","created_at":1}"#,
            r#"{"id":"b","text":"two","created_at":2,"author_hash":"u1","meta":{"toxicity":"0.1"}}"#,
            r#"{"id":"c","text":"three","created_at":3}"#,
        ]);
        let c = ingest_jsonl(f.path()).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.posts()[1].meta["toxicity"], "0.1");
        assert_eq!(c.posts()[1].author_hash.as_deref(), Some("u1"));
    }

    #[test]
    fn ingest_missing_text_reports_line() {
        let f = write_tmp(&[
            r#"{"id":"a","text":"one","created_at":1}"#,
            r#"{"id":"b","created_at":2}"#,
        ]);
        match ingest_jsonl(f.path()) {
            Err(PreprocessError::RecordInvalid { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ingest_duplicate_id() {
        let f = write_tmp(&[
            r#"{"id":"a","text":"one","created_at":1}"#,
            r#"{"id":"a","text":"two","created_at":2}"#,
        ]);
        assert!(matches!(ingest_jsonl(f.path()), Err(PreprocessError::DuplicateId(id)) if id == "a"));
    }

    #[test]
    fn clean_examples() {
        assert_eq!(clean_text("@bob123 look at this"), "@mention look at this");
        assert_eq!(clean_text("help 😀 now"), "help :grinning_face: now");
        assert_eq!(clean_text("a  b\t c "), "a b c");
        assert_eq!(clean_text("hi @a_b and @c!"), "hi @mention and @mention!");
        assert_eq!(clean_text("love ❤️ it"), "love :heavy_black_heart: it");
        assert_eq!(clean_text("#1 pick"), "#1 pick");
    }

    #[test]
    fn dedup_examples() {
        let (d, removed) = dedup(&corpus_of(&["x", "y", "x"]));
        assert_eq!(removed, 1);
        let texts: Vec<_> = d.iter().map(|p| p.text.as_str()).collect();
        assert_eq!(texts, vec!["x", "y"]);

        let (d, removed) = dedup(&corpus_of(&["x", "y", "z"]));
        assert_eq!((d.len(), removed), (3, 0));

        let (cleaned, _) = clean_corpus(&corpus_of(&["a  b", "a b"]));
        let (d, removed) = dedup(&cleaned);
        assert_eq!((d.len(), removed), (1, 1));
    }

    #[test]
    fn keyword_examples() {
        let c = corpus_of(&["the homeless man", "housing costs", "Homelessness is rising"]);
        let kept = keyword_filter(&c, "homeless").unwrap();
        let ids: Vec<_> = kept.iter().map(|p| p.id.as_str()).collect();
        assert_eq!(ids, vec!["p0", "p2"]);
        assert!(matches!(keyword_filter(&c, ""), Err(PreprocessError::EmptyKeyword)));
    }

    #[test]
    fn language_hook_is_applied() {
        let c = corpus_of(&["homeless one", "sin hogar", "homeless two"]);
        let opts = PreprocessOptions {
            keyword: Some("homeless".into()),
            language_filter: Some(Box::new(|t: &str| !t.contains("hogar"))),
        };
        let (out, report) = preprocess(&c, &opts).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(report.rejected_by_language, 1);
    }

    #[test]
    fn split_plain_fractions() {
        let texts: Vec<String> = (0..100).map(|i| format!("t{i}")).collect();
        let refs: Vec<&str> = texts.iter().map(|s| s.as_str()).collect();
        let c = corpus_of(&refs);
        let spec = SplitSpec::new(0.8, 0.1, 0.1, 7);
        let s = split(&c, &spec).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (80, 10, 10));
        let again = split(&c, &spec).unwrap();
        assert_eq!(s.manifest(&spec), again.manifest(&spec));
    }

    #[test]
    fn split_restriction_shortfall() {
        let mut c = corpus_of(&["a", "b", "c"]);
        c.annotate(Annotation::new("p0", Annotator::new("e", AnnotatorKind::Expert), LabelSet::Filtered, 0))
            .unwrap();
        let mut spec = SplitSpec::new(0.9, 0.1, 0.0, 1);
        spec.test_source_restriction = Some(AnnotatorKind::Expert);
        spec.restricted_test_draws = 2;
        assert!(matches!(
            split(&c, &spec),
            Err(PreprocessError::InsufficientEligible { needed: 2, available: 1 })
        ));
    }

    #[test]
    fn split_rejects_bad_fractions() {
        let c = corpus_of(&["a"]);
        assert!(split(&c, &SplitSpec::new(0.5, 0.2, 0.2, 0)).is_err());
        assert!(split(&c, &SplitSpec::new(1.2, -0.2, 0.0, 0)).is_err());
    }

    proptest! {
        #[test]
        fn clean_is_idempotent(s in "[a-z @_\t\n😀❤️👍🏽🇺🇸\u{200D}\u{FE0F}x1#é]{0,40}") {
            let once = clean_text(&s);
            prop_assert_eq!(clean_text(&once), once);
        }

        #[test]
        fn clean_is_idempotent_any(s in any::<String>()) {
            let once = clean_text(&s);
            prop_assert_eq!(clean_text(&once), once);
        }

        #[test]
        fn dedup_output_is_unique(texts in proptest::collection::vec("[abc]{1,2}", 0..30)) {
            let refs: Vec<&str> = texts.iter().map(|s| s.as_str()).collect();
            let c = corpus_of(&refs);
            let (d, removed) = dedup(&c);
            let uniq: HashSet<&str> = d.iter().map(|p| p.text.as_str()).collect();
            prop_assert_eq!(uniq.len(), d.len());
            prop_assert_eq!(d.len() + removed, c.len());
        }

        #[test]
        fn keyword_filter_subset(texts in proptest::collection::vec("[a-zA-Z ]{1,12}", 0..30), kw in "[a-zA-Z]{1,2}") {
            let refs: Vec<&str> = texts.iter().map(|s| s.as_str()).collect();
            let c = corpus_of(&refs);
            let kept = keyword_filter(&c, &kw).unwrap();
            for p in kept.iter() {
                prop_assert!(c.contains(&p.id));
                prop_assert!(p.text.to_lowercase().contains(&kw.to_lowercase()));
            }
        }

        #[test]
        fn split_partitions(n in 1usize..200, a in 0.0f64..1.0, b in 0.0f64..1.0, seed: u64) {
            let (train, val) = (a * (1.0 - 0.0), (1.0 - a) * b);
            let test = 1.0 - train - val;
            let texts: Vec<String> = (0..n).map(|i| format!("t{i}")).collect();
            let refs: Vec<&str> = texts.iter().map(|s| s.as_str()).collect();
            let c = corpus_of(&refs);
            let spec = SplitSpec::new(train, val, test.max(0.0), seed);
            let s = split(&c, &spec).unwrap();
            let mut all: Vec<String> = s.train.iter().chain(s.val.iter()).chain(s.test.iter()).map(|p| p.id.clone()).collect();
            prop_assert_eq!(all.len(), n);
            all.sort();
            all.dedup();
            prop_assert_eq!(all.len(), n);
        }
    }
}
