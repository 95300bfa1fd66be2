//! Posts, annotations and the corpus container.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{Frame, LabelSet};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CorpusError {
    #[error("duplicate post id `{0}`")]
    DuplicateId(String),
    #[error("post `{0}` has empty text")]
    EmptyText(String),
    #[error("post `{0}` has a negative timestamp")]
    NegativeTimestamp(String),
    #[error("annotation refers to unknown post `{0}`")]
    UnresolvedPost(String),
    #[error("annotation for `{post_id}` is invalid: {reason}")]
    InvalidAnnotation { post_id: String, reason: String },
}

/// One cleaned social-media message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Post {
    pub id: String,
    pub text: String,
    /// Seconds since the Unix epoch, UTC.
    pub created_at: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub author_hash: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, String>,
}

impl Post {
    pub fn new(id: impl Into<String>, text: impl Into<String>, created_at: i64) -> Self {
        Post {
            id: id.into(),
            text: text.into(),
            created_at,
            author_hash: None,
            meta: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.text.is_empty() {
            return Err(CorpusError::EmptyText(self.id.clone()));
        }
        if self.created_at < 0 {
            return Err(CorpusError::NegativeTimestamp(self.id.clone()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotatorKind {
    Expert,
    Llm,
    ExpertLlm,
    Model,
}

impl AnnotatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AnnotatorKind::Expert => "expert",
            AnnotatorKind::Llm => "llm",
            AnnotatorKind::ExpertLlm => "expert_llm",
            AnnotatorKind::Model => "model",
        }
    }
}

impl std::str::FromStr for AnnotatorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "expert" => Ok(AnnotatorKind::Expert),
            "llm" => Ok(AnnotatorKind::Llm),
            "expert_llm" | "expert+llm" => Ok(AnnotatorKind::ExpertLlm),
            "model" => Ok(AnnotatorKind::Model),
            other => Err(format!("unknown annotator kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Annotator {
    pub id: String,
    pub kind: AnnotatorKind,
}

impl Annotator {
    pub fn new(id: impl Into<String>, kind: AnnotatorKind) -> Self {
        Annotator { id: id.into(), kind }
    }
}

/// A label set attached to a post by one source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub post_id: String,
    pub annotator: Annotator,
    pub labels: LabelSet,
    /// Free-text reason per frame; keys are a subset of the labeled frames.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub rationales: BTreeMap<Frame, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_seconds: Option<f64>,
    pub created_at: i64,
}

impl Annotation {
    pub fn new(
        post_id: impl Into<String>,
        annotator: Annotator,
        labels: LabelSet,
        created_at: i64,
    ) -> Self {
        Annotation {
            post_id: post_id.into(),
            annotator,
            labels,
            rationales: BTreeMap::new(),
            elapsed_seconds: None,
            created_at,
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let invalid = |reason: &str| CorpusError::InvalidAnnotation {
            post_id: self.post_id.clone(),
            reason: reason.to_string(),
        };
        if self.rationales.keys().any(|f| !self.labels.has_frame(*f)) {
            return Err(invalid("rationale given for a frame that is not labeled"));
        }
        if let Some(e) = self.elapsed_seconds {
            if !(e.is_finite() && e >= 0.0) {
                return Err(invalid("elapsed_seconds must be a non-negative number"));
            }
        }
        Ok(())
    }
}

/// Ordered posts plus the annotations attached to them.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    posts: Vec<Post>,
    annotations: Vec<Annotation>,
    index: HashMap<String, usize>,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_posts(posts: Vec<Post>) -> Result<Self, CorpusError> {
        let mut corpus = Corpus {
            posts: Vec::with_capacity(posts.len()),
            annotations: Vec::new(),
            index: HashMap::with_capacity(posts.len()),
        };
        for p in posts {
            corpus.push(p)?;
        }
        Ok(corpus)
    }

    pub fn push(&mut self, post: Post) -> Result<(), CorpusError> {
        post.validate()?;
        if self.index.contains_key(&post.id) {
            return Err(CorpusError::DuplicateId(post.id));
        }
        self.index.insert(post.id.clone(), self.posts.len());
        self.posts.push(post);
        Ok(())
    }

    pub fn annotate(&mut self, annotation: Annotation) -> Result<(), CorpusError> {
        if !self.index.contains_key(&annotation.post_id) {
            return Err(CorpusError::UnresolvedPost(annotation.post_id));
        }
        annotation.validate()?;
        self.annotations.push(annotation);
        Ok(())
    }

    pub fn posts(&self) -> &[Post] {
        &self.posts
    }

    pub fn annotations(&self) -> &[Annotation] {
        &self.annotations
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Post> {
        self.index.get(id).map(|&i| &self.posts[i])
    }

    pub fn get_mut(&mut self, id: &str) -> Option<&mut Post> {
        self.index.get(id).map(|&i| &mut self.posts[i])
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Post> {
        self.posts.iter()
    }

    /// Sub-corpus of the posts at `positions` (in the given order), carrying
    /// along their annotations.
    pub fn select(&self, positions: &[usize]) -> Corpus {
        let posts: Vec<Post> = positions.iter().map(|&i| self.posts[i].clone()).collect();
        let mut out = Corpus::from_posts(posts).expect("positions come from a valid corpus");
        for a in &self.annotations {
            if out.contains(&a.post_id) {
                out.annotations.push(a.clone());
            }
        }
        out
    }

    /// Keeps posts matching `keep`, preserving order.
    pub fn filter(&self, mut keep: impl FnMut(&Post) -> bool) -> Corpus {
        let positions: Vec<usize> = (0..self.posts.len()).filter(|&i| keep(&self.posts[i])).collect();
        self.select(&positions)
    }

    pub fn into_posts(self) -> Vec<Post> {
        self.posts
    }

    /// Final label per post, later annotations overriding earlier ones.
    pub fn final_labels(&self) -> LabelIndex {
        LabelIndex::from_annotations(self.annotations.iter())
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a Post;
    type IntoIter = std::slice::Iter<'a, Post>;

    fn into_iter(self) -> Self::IntoIter {
        self.posts.iter()
    }
}

/// Resolved label set per post id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelIndex(HashMap<String, LabelSet>);

impl LabelIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds the index; when a post has several annotations the last one wins.
    pub fn from_annotations<'a>(annotations: impl IntoIterator<Item = &'a Annotation>) -> Self {
        let mut map = HashMap::new();
        for a in annotations {
            map.insert(a.post_id.clone(), a.labels);
        }
        LabelIndex(map)
    }

    pub fn insert(&mut self, post_id: impl Into<String>, labels: LabelSet) {
        self.0.insert(post_id.into(), labels);
    }

    pub fn get(&self, post_id: &str) -> Option<&LabelSet> {
        self.0.get(post_id)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &LabelSet)> {
        self.0.iter()
    }
}

impl FromIterator<(String, LabelSet)> for LabelIndex {
    fn from_iter<I: IntoIterator<Item = (String, LabelSet)>>(iter: I) -> Self {
        LabelIndex(iter.into_iter().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::FrameSet;

    #[test]
    fn duplicate_ids_rejected() {
        let err = Corpus::from_posts(vec![Post::new("a", "x", 0), Post::new("a", "y", 1)]);
        assert_eq!(err.unwrap_err(), CorpusError::DuplicateId("a".into()));
    }

    #[test]
    fn post_invariants() {
        assert!(Post::new("a", "", 0).validate().is_err());
        assert!(Post::new("a", "x", -1).validate().is_err());
    }

    #[test]
    fn annotations_must_resolve_and_respect_rationales() {
        let mut c = Corpus::from_posts(vec![Post::new("a", "x", 0)]).unwrap();
        let ann = Annotation::new("zz", Annotator::new("e1", AnnotatorKind::Expert), LabelSet::Filtered, 0);
        assert_eq!(c.annotate(ann).unwrap_err(), CorpusError::UnresolvedPost("zz".into()));

        let set: FrameSet = [Frame::GovCrit].into_iter().collect();
        let mut ann = Annotation::new("a", Annotator::new("m", AnnotatorKind::Llm), LabelSet::Frames(set), 0);
        ann.rationales.insert(Frame::HarmGen, "nope".into());
        assert!(matches!(c.annotate(ann.clone()), Err(CorpusError::InvalidAnnotation { .. })));
        ann.rationales.clear();
        ann.rationales.insert(Frame::GovCrit, "critiques the city".into());
        c.annotate(ann).unwrap();
        assert_eq!(c.final_labels().get("a"), Some(&LabelSet::Frames(set)));
    }

    #[test]
    fn select_keeps_annotations() {
        let mut c = Corpus::from_posts(vec![Post::new("a", "x", 0), Post::new("b", "y", 0)]).unwrap();
        c.annotate(Annotation::new("b", Annotator::new("e", AnnotatorKind::Expert), LabelSet::Filtered, 0))
            .unwrap();
        let sub = c.select(&[1]);
        assert_eq!(sub.len(), 1);
        assert_eq!(sub.annotations().len(), 1);
        assert_eq!(sub.position("b"), Some(0));
    }

    #[test]
    fn annotation_json_shape() {
        let set: FrameSet = [Frame::GovCrit].into_iter().collect();
        let mut ann = Annotation::new("p1", Annotator::new("gpt", AnnotatorKind::ExpertLlm), LabelSet::Frames(set), 5);
        ann.rationales.insert(Frame::GovCrit, "because".into());
        let json = serde_json::to_string(&ann).unwrap();
        assert_eq!(
            json,
            r#"{"post_id":"p1","annotator":{"id":"gpt","kind":"expert_llm"},"labels":{"frames":["government_critique"]},"rationales":{"government_critique":"because"},"created_at":5}"#
        );
        let back: Annotation = serde_json::from_str(&json).unwrap();
        assert_eq!(back, ann);
    }
}
