use std::collections::HashMap;
use std::sync::LazyLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::ClassifierError;

static TOKEN: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r":[a-z0-9_\-]+:|[\p{Alphabetic}\p{N}]+(?:['’][\p{Alphabetic}\p{N}]+)*").unwrap()
});

/// Lowercased word tokens; `:emoji_name:` stays whole and in-word apostrophes are kept.
pub fn unigrams(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    TOKEN.find_iter(&lower).map(|m| m.as_str().replace('’', "'")).collect()
}

/// Adjacent pairs joined by `_`.
pub fn bigrams(tokens: &[String]) -> Vec<String> {
    tokens.windows(2).map(|w| format!("{}_{}", w[0], w[1])).collect()
}

/// Unigrams followed by their bigrams.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut toks = unigrams(text);
    let bi = bigrams(&toks);
    toks.extend(bi);
    toks
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub min_df: usize,
    pub max_features: Option<usize>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig { min_df: 1, max_features: Some(50_000) }
    }
}

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVec {
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseVec {
    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.indices.iter().zip(&self.values).map(|(&i, &v)| dense[i as usize] * v).sum()
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }
}

/// Vocabulary (alphabetical, index = position) and idf weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "FeatureRepr", into = "FeatureRepr")]
pub struct FeatureModel {
    vocabulary: Vec<String>,
    idf: Vec<f64>,
    n_docs: usize,
    lookup: HashMap<String, u32>,
}

#[derive(Serialize, Deserialize)]
struct FeatureRepr {
    vocabulary: Vec<String>,
    idf: Vec<f64>,
    n_docs: usize,
}

impl From<FeatureRepr> for FeatureModel {
    fn from(r: FeatureRepr) -> Self {
        FeatureModel::from_parts(r.vocabulary, r.idf, r.n_docs)
    }
}

impl From<FeatureModel> for FeatureRepr {
    fn from(m: FeatureModel) -> Self {
        FeatureRepr { vocabulary: m.vocabulary, idf: m.idf, n_docs: m.n_docs }
    }
}

pub fn idf(n_docs: usize, df: usize) -> f64 {
    ((1.0 + n_docs as f64) / (1.0 + df as f64)).ln() + 1.0
}

impl FeatureModel {
    fn from_parts(vocabulary: Vec<String>, idf: Vec<f64>, n_docs: usize) -> Self {
        let lookup = vocabulary.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        FeatureModel { vocabulary, idf, n_docs, lookup }
    }

    pub fn fit<S: AsRef<str> + Sync>(docs: &[S], config: &FeatureConfig) -> Result<Self, ClassifierError> {
        if docs.is_empty() {
            return Err(ClassifierError::EmptyCorpus);
        }
        let df: HashMap<String, usize> = docs
            .par_iter()
            .fold(HashMap::new, |mut acc: HashMap<String, usize>, d| {
                let mut toks = tokenize(d.as_ref());
                toks.sort_unstable();
                toks.dedup();
                for t in toks {
                    *acc.entry(t).or_default() += 1;
                }
                acc
            })
            .reduce(HashMap::new, |mut a, b| {
                for (k, v) in b {
                    *a.entry(k).or_default() += v;
                }
                a
            });
        let mut kept: Vec<(String, usize)> = df.into_iter().filter(|(_, n)| *n >= config.min_df.max(1)).collect();
        kept.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        if let Some(max) = config.max_features {
            kept.truncate(max);
        }
        kept.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        let n = docs.len();
        let idf_values = kept.iter().map(|(_, d)| idf(n, *d)).collect();
        let vocabulary = kept.into_iter().map(|(t, _)| t).collect();
        Ok(Self::from_parts(vocabulary, idf_values, n))
    }

    pub fn dim(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn idf_values(&self) -> &[f64] {
        &self.idf
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.lookup.get(token).map(|&i| i as usize)
    }

    pub fn idf_of(&self, token: &str) -> Option<f64> {
        self.index_of(token).map(|i| self.idf[i])
    }

    /// L2-normalized tf-idf vector; unknown tokens are ignored.
    pub fn transform(&self, text: &str) -> SparseVec {
        let mut tf: HashMap<u32, f64> = HashMap::new();
        for t in tokenize(text) {
            if let Some(&i) = self.lookup.get(&t) {
                *tf.entry(i).or_default() += 1.0;
            }
        }
        let mut entries: Vec<(u32, f64)> = tf.into_iter().map(|(i, c)| (i, c * self.idf[i as usize])).collect();
        entries.sort_unstable_by_key(|e| e.0);
        let norm = entries.iter().map(|e| e.1 * e.1).sum::<f64>().sqrt();
        if norm > 0.0 {
            for e in &mut entries {
                e.1 /= norm;
            }
        }
        SparseVec {
            indices: entries.iter().map(|e| e.0).collect(),
            values: entries.iter().map(|e| e.1).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_examples() {
        assert_eq!(
            tokenize("Homeless veterans need help"),
            ["homeless", "veterans", "need", "help", "homeless_veterans", "veterans_need", "need_help"]
        );
        assert_eq!(tokenize("don't"), ["don't"]);
        assert_eq!(unigrams(":grinning_face: hi"), [":grinning_face:", "hi"]);
        assert_eq!(unigrams("Hi, @mention! 2023-ish"), ["hi", "mention", "2023", "ish"]);
    }

    #[test]
    fn idf_values() {
        let m = FeatureModel::fit(&["a b", "a c", "a d"], &FeatureConfig::default()).unwrap();
        assert_eq!(m.idf_of("a"), Some(1.0));
        assert!((m.idf_of("b").unwrap() - (2f64.ln() + 1.0)).abs() < 1e-15);
        assert!((m.idf_of("b").unwrap() - 1.693_147_180_559_945_3).abs() < 1e-12);
    }

    #[test]
    fn min_df_and_max_features() {
        let docs = ["a b", "a c", "a b"];
        let m = FeatureModel::fit(&docs, &FeatureConfig { min_df: 2, max_features: None }).unwrap();
        assert_eq!(m.vocabulary(), ["a", "a_b", "b"]);
        let m = FeatureModel::fit(&docs, &FeatureConfig { min_df: 1, max_features: Some(2) }).unwrap();
        assert_eq!(m.vocabulary(), ["a", "a_b"]);
    }

    #[test]
    fn empty_corpus() {
        let docs: [&str; 0] = [];
        assert!(matches!(FeatureModel::fit(&docs, &FeatureConfig::default()), Err(ClassifierError::EmptyCorpus)));
    }

    #[test]
    fn transform_is_unit_norm() {
        let m = FeatureModel::fit(&["a b c", "a a d"], &FeatureConfig::default()).unwrap();
        let v = m.transform("a a b zzz");
        let n: f64 = v.values.iter().map(|x| x * x).sum();
        assert!((n - 1.0).abs() < 1e-12);
        assert!(v.indices.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(m.transform("zzz").nnz(), 0);
    }
}
