use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::AnalyticsError;
use crate::classifier::unigrams;

pub const PRIOR_EPSILON: f64 = 0.5;
pub const DEFAULT_ALPHA_TOTAL: f64 = 500.0;
pub const Z_CRITICAL: f64 = 1.96;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NgramCounts {
    pub n: usize,
    pub counts: BTreeMap<String, u64>,
    pub total_tokens: u64,
}

impl NgramCounts {
    pub fn from_counts(n: usize, counts: BTreeMap<String, u64>) -> Self {
        let counts: BTreeMap<String, u64> = counts.into_iter().filter(|(_, c)| *c > 0).collect();
        let total_tokens = counts.values().sum();
        NgramCounts { n, counts, total_tokens }
    }

    pub fn get(&self, term: &str) -> u64 {
        self.counts.get(term).copied().unwrap_or(0)
    }

    /// Term-wise sum, used as the default background prior.
    pub fn union(&self, other: &NgramCounts) -> NgramCounts {
        let mut counts = self.counts.clone();
        for (t, c) in &other.counts {
            *counts.entry(t.clone()).or_default() += c;
        }
        NgramCounts { n: self.n, counts, total_tokens: self.total_tokens + other.total_tokens }
    }

    /// The `k` most frequent terms, ties broken alphabetically.
    pub fn top(&self, k: usize) -> Vec<(&str, u64)> {
        let mut v: Vec<(&str, u64)> = self.counts.iter().map(|(t, c)| (t.as_str(), *c)).collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        v.truncate(k);
        v
    }
}

/// Stopwords are dropped before bigrams are formed, so bigrams join the surviving neighbours.
pub fn ngram_counts<'a, I>(texts: I, n: usize, stopwords: &HashSet<String>) -> Result<NgramCounts, AnalyticsError>
where
    I: IntoParallelIterator<Item = &'a str>,
{
    if !(n == 1 || n == 2) {
        return Err(AnalyticsError::InvalidN(n));
    }
    let counts = texts
        .into_par_iter()
        .fold(BTreeMap::new, |mut acc: BTreeMap<String, u64>, text| {
            let toks: Vec<String> = unigrams(text).into_iter().filter(|t| !stopwords.contains(t)).collect();
            if n == 1 {
                for t in toks {
                    *acc.entry(t).or_default() += 1;
                }
            } else {
                for w in toks.windows(2) {
                    *acc.entry(format!("{}_{}", w[0], w[1])).or_default() += 1;
                }
            }
            acc
        })
        .reduce(BTreeMap::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_default() += v;
            }
            a
        });
    Ok(NgramCounts::from_counts(n, counts))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogOddsResult {
    pub term: String,
    pub y_i: u64,
    pub y_j: u64,
    pub alpha_w: f64,
    pub delta: f64,
    pub variance: f64,
    pub z: f64,
    pub significant: bool,
}

pub fn is_significant(z: f64) -> bool {
    z.abs() >= Z_CRITICAL
}

/// Weighted log-odds with an informative Dirichlet prior (Monroe, Colaresi and Quinn).
///
/// `α_w = alpha_total · (prior_w + ε) / Σ_v (prior_v + ε)` over the union of all
/// three vocabularies, so terms missing from the prior still get mass `ε`.
/// Without a prior, the two groups' union is used. Sorted by z descending.
pub fn weighted_log_odds(
    counts_i: &NgramCounts,
    counts_j: &NgramCounts,
    prior: Option<&NgramCounts>,
    alpha_total: f64,
) -> Result<Vec<LogOddsResult>, AnalyticsError> {
    if !(alpha_total.is_finite() && alpha_total > 0.0) {
        return Err(AnalyticsError::NonPositiveAlpha);
    }
    let default_prior;
    let prior = match prior {
        Some(p) => p,
        None => {
            default_prior = counts_i.union(counts_j);
            &default_prior
        }
    };
    if prior.counts.is_empty() {
        return Err(AnalyticsError::EmptyPrior);
    }
    let reported: BTreeSet<&str> = counts_i.counts.keys().chain(counts_j.counts.keys()).map(String::as_str).collect();
    let vocab: BTreeSet<&str> = reported.iter().copied().chain(prior.counts.keys().map(String::as_str)).collect();
    let mass: f64 = vocab.iter().map(|t| prior.get(t) as f64 + PRIOR_EPSILON).sum();
    let alpha0 = alpha_total;
    let n_i = counts_i.total_tokens as f64;
    let n_j = counts_j.total_tokens as f64;

    let mut out: Vec<LogOddsResult> = reported
        .into_iter()
        .map(|term| {
            let a = alpha_total * (prior.get(term) as f64 + PRIOR_EPSILON) / mass;
            let yi = counts_i.get(term);
            let yj = counts_j.get(term);
            let (fi, fj) = (yi as f64, yj as f64);
            let (rest_i, rest_j) = (n_i + alpha0 - fi - a, n_j + alpha0 - fj - a);
            let variance = 1.0 / (fi + a) + 1.0 / (fj + a);
            // a one-term vocabulary leaves no complement mass: no contrast to measure
            let delta = if rest_i <= 0.0 || rest_j <= 0.0 { 0.0 } else { ((fi + a) / rest_i).ln() - ((fj + a) / rest_j).ln() };
            let z = delta / variance.sqrt();
            LogOddsResult {
                term: term.to_string(),
                y_i: yi,
                y_j: yj,
                alpha_w: a,
                delta,
                variance,
                z,
                significant: is_significant(z),
            }
        })
        .collect();
    out.sort_by(|a, b| b.z.total_cmp(&a.z).then_with(|| a.term.cmp(&b.term)));
    Ok(out)
}

pub fn write_log_odds_csv<W: Write>(results: &[LogOddsResult], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["term", "y_i", "y_j", "alpha_w", "delta", "variance", "z", "significant"])?;
    for r in results {
        w.write_record([
            r.term.clone(),
            r.y_i.to_string(),
            r.y_j.to_string(),
            r.alpha_w.to_string(),
            r.delta.to_string(),
            r.variance.to_string(),
            r.z.to_string(),
            r.significant.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn counts(pairs: &[(&str, u64)]) -> NgramCounts {
        NgramCounts::from_counts(1, pairs.iter().map(|(t, c)| (t.to_string(), *c)).collect())
    }

    #[test]
    fn stopwords_removed_before_bigrams() {
        let sw: HashSet<String> = ["the".to_string()].into_iter().collect();
        let uni = ngram_counts(vec!["the homeless crisis"], 1, &sw).unwrap();
        assert_eq!(uni.counts, counts(&[("homeless", 1), ("crisis", 1)]).counts);
        assert_eq!(uni.total_tokens, 2);
        let bi = ngram_counts(vec!["homeless the crisis"], 2, &sw).unwrap();
        assert_eq!(bi.counts.keys().collect::<Vec<_>>(), ["homeless_crisis"]);
        assert!(matches!(ngram_counts(vec!["x"], 3, &sw), Err(AnalyticsError::InvalidN(3))));
    }

    #[test]
    fn identical_groups_give_zero() {
        let c = counts(&[("a", 3), ("b", 5), ("c", 1)]);
        for r in weighted_log_odds(&c, &c, None, 500.0).unwrap() {
            assert_eq!(r.z, 0.0);
            assert!(!r.significant);
        }
    }

    #[test]
    fn hand_computed_toy() {
        let i = counts(&[("a", 10), ("b", 0), ("c", 5)]);
        let j = counts(&[("a", 2), ("b", 8), ("c", 5)]);
        let r = weighted_log_odds(&i, &j, None, 10.0).unwrap();
        let a = r.iter().find(|r| r.term == "a").unwrap();
        // prior a=12, b=8, c=10; eps 0.5 → mass 31.5
        let alpha_a: f64 = 10.0 * 12.5 / 31.5;
        let d = ((10.0 + alpha_a) / (15.0 + 10.0 - 10.0 - alpha_a)).ln() - ((2.0 + alpha_a) / (15.0 + 10.0 - 2.0 - alpha_a)).ln();
        let v = 1.0 / (10.0 + alpha_a) + 1.0 / (2.0 + alpha_a);
        assert!((a.alpha_w - alpha_a).abs() < 1e-12);
        assert!((a.delta - d).abs() < 1e-12);
        assert!((a.variance - v).abs() < 1e-12);
        assert!((a.z - d / v.sqrt()).abs() < 1e-12);
        assert_eq!(r[0].term, "a");
    }

    #[test]
    fn errors() {
        let c = counts(&[("a", 1)]);
        assert!(matches!(weighted_log_odds(&c, &c, None, 0.0), Err(AnalyticsError::NonPositiveAlpha)));
        assert!(matches!(weighted_log_odds(&c, &c, Some(&NgramCounts::default()), 1.0), Err(AnalyticsError::EmptyPrior)));
    }

    #[test]
    fn single_term_vocabulary_is_neutral() {
        let r = weighted_log_odds(&counts(&[("a", 1)]), &counts(&[("a", 4)]), None, 5.0).unwrap();
        assert_eq!(r[0].z, 0.0);
    }

    #[test]
    fn significance_boundary() {
        assert!(is_significant(1.96));
        assert!(is_significant(-1.96));
        assert!(!is_significant(1.959_999_999));
    }

    fn arb_counts() -> impl Strategy<Value = NgramCounts> {
        proptest::collection::btree_map("[a-f]{1,2}", 1u64..40, 1..12)
            .prop_map(|m| NgramCounts::from_counts(1, m.into_iter().collect()))
    }

    proptest! {
        #[test]
        fn antisymmetric(i in arb_counts(), j in arb_counts(), alpha in 1.0f64..1000.0) {
            let ij = weighted_log_odds(&i, &j, None, alpha).unwrap();
            let ji = weighted_log_odds(&j, &i, None, alpha).unwrap();
            for r in &ij {
                let s = ji.iter().find(|s| s.term == r.term).unwrap();
                prop_assert!((r.z + s.z).abs() < 1e-9);
                prop_assert!((r.delta + s.delta).abs() < 1e-9);
            }
        }

        #[test]
        fn prior_dominates_for_huge_alpha(i in arb_counts(), j in arb_counts()) {
            let huge = weighted_log_odds(&i, &j, None, 1e12).unwrap();
            prop_assert!(huge.iter().all(|r| r.z.abs() < 1e-3));
        }
    }
}
