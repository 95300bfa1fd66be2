//! Multi-label bag-of-words classifier: one logistic head per frame plus one for Filtered.

mod features;
mod predictions;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agreement::{prf_against_reference, PrfReport};
use crate::corpus::{Corpus, LabelIndex, Post};
use crate::frame::{Frame, FrameSet, Label, LabelSet};

pub use features::{bigrams, idf, tokenize, unigrams, FeatureConfig, FeatureModel, SparseVec};
pub use predictions::{format_labels, import_predictions, parse_labels, read_predictions, write_predictions};

pub const FORMAT_VERSION: u32 = 1;
pub const N_HEADS: usize = Label::COUNT;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("corpus has no documents")]
    EmptyCorpus,
    #[error("{0} split has no labeled posts")]
    EmptySplit(&'static str),
    #[error("post `{0}` has no gold label")]
    LabelMismatch(String),
    #[error("line {0}: unknown label")]
    UnknownLabel(usize),
    #[error("line {0}: unknown post")]
    UnresolvedPost(usize),
    #[error("line {0}: malformed prediction line")]
    MalformedLine(usize),
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("invalid model file: {0}")]
    ModelInvalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub l2_lambda: f64,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub tau: f64,
    pub features: FeatureConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            l2_lambda: 1e-5,
            learning_rate: 10.0,
            max_epochs: 500,
            patience: 10,
            seed: 0,
            tau: 0.5,
            features: FeatureConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        let bad = |m: &str| Err(ClassifierError::ConfigInvalid(m.to_string()));
        if !(self.l2_lambda.is_finite() && self.l2_lambda >= 0.0) {
            return bad("l2_lambda must be non-negative");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1");
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad("tau must lie in (0, 1)");
        }
        Ok(())
    }
}

/// Per-head weights (`N_HEADS` rows of length V) and biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

impl Params {
    pub fn zeros(dim: usize) -> Self {
        Params { weights: vec![vec![0.0; dim]; N_HEADS], biases: vec![0.0; N_HEADS] }
    }

    pub fn dim(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn logits(&self, x: &SparseVec) -> [f64; N_HEADS] {
        let mut z = [0.0; N_HEADS];
        for (k, zk) in z.iter_mut().enumerate() {
            *zk = x.dot(&self.weights[k]) + self.biases[k];
        }
        z
    }
}

/// Feature vectors with 0/1 targets per head, indexed by [`Label::index`].
#[derive(Debug, Clone, Default)]
pub struct Problem {
    pub xs: Vec<SparseVec>,
    pub ys: Vec<[bool; N_HEADS]>,
}

pub fn targets(labels: &LabelSet) -> [bool; N_HEADS] {
    let mut y = [false; N_HEADS];
    for l in Label::ALL {
        y[l.index()] = labels.has_label(l);
    }
    y
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Mean binary cross-entropy over posts and heads, without the penalty.
pub fn data_loss(params: &Params, problem: &Problem) -> f64 {
    let n = problem.xs.len();
    if n == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for (x, y) in problem.xs.iter().zip(&problem.ys) {
        let z = params.logits(x);
        for k in 0..N_HEADS {
            total += softplus(z[k]) - if y[k] { z[k] } else { 0.0 };
        }
    }
    total / (n * N_HEADS) as f64
}

/// Regularized loss `mean BCE + λ·Σ‖w_k‖²` and its gradient; biases are not penalized.
pub fn loss_and_gradient(params: &Params, problem: &Problem, l2_lambda: f64) -> (f64, Params) {
    let dim = params.dim();
    let n = problem.xs.len();
    let mut grad = Params::zeros(dim);
    let scale = 1.0 / (n.max(1) * N_HEADS) as f64;
    let mut data = 0.0;
    for (x, y) in problem.xs.iter().zip(&problem.ys) {
        let z = params.logits(x);
        for k in 0..N_HEADS {
            let yk = if y[k] { 1.0 } else { 0.0 };
            data += softplus(z[k]) - yk * z[k];
            let r = (sigmoid(z[k]) - yk) * scale;
            grad.biases[k] += r;
            let gw = &mut grad.weights[k];
            for (&i, &v) in x.indices.iter().zip(&x.values) {
                gw[i as usize] += r * v;
            }
        }
    }
    let mut penalty = 0.0;
    for k in 0..N_HEADS {
        for (g, &w) in grad.weights[k].iter_mut().zip(&params.weights[k]) {
            penalty += w * w;
            *g += 2.0 * l2_lambda * w;
        }
    }
    (data * scale + l2_lambda * penalty, grad)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub format_version: u32,
    pub config: TrainConfig,
    pub features: FeatureModel,
    pub params: Params,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Number of epochs run.
    pub stopped_epoch: usize,
    /// Epoch (1-based) whose weights were kept.
    pub best_epoch: usize,
    pub val_metrics: PrfReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub labels: LabelSet,
    /// Indexed by [`Label::index`].
    pub probabilities: [f64; N_HEADS],
}

/// Posts and their gold label sets; every post must carry one.
fn gold_pairs<'a>(corpus: &'a Corpus) -> Result<Vec<(&'a Post, LabelSet)>, ClassifierError> {
    let gold = corpus.final_labels();
    corpus
        .iter()
        .map(|p| gold.get(&p.id).map(|l| (p, *l)).ok_or_else(|| ClassifierError::LabelMismatch(p.id.clone())))
        .collect()
}

fn build_problem(features: &FeatureModel, pairs: &[(&Post, LabelSet)]) -> Problem {
    Problem {
        xs: pairs.par_iter().map(|(p, _)| features.transform(&p.text)).collect(),
        ys: pairs.iter().map(|(_, l)| targets(l)).collect(),
    }
}

/// Full-batch gradient descent from zero weights with early stopping on validation loss.
pub fn train(train: &Corpus, val: &Corpus, config: &TrainConfig) -> Result<(ClassifierModel, TrainReport), ClassifierError> {
    config.validate()?;
    let train_pairs = gold_pairs(train)?;
    let val_pairs = gold_pairs(val)?;
    if train_pairs.is_empty() {
        return Err(ClassifierError::EmptySplit("train"));
    }
    if val_pairs.is_empty() {
        return Err(ClassifierError::EmptySplit("validation"));
    }
    let texts: Vec<&str> = train_pairs.iter().map(|(p, _)| p.text.as_str()).collect();
    let features = FeatureModel::fit(&texts, &config.features)?;
    let tr = build_problem(&features, &train_pairs);
    let va = build_problem(&features, &val_pairs);

    let mut params = Params::zeros(features.dim());
    let mut best = params.clone();
    let mut best_val = data_loss(&params, &va);
    let mut best_epoch = 0;
    let mut stale = 0;
    let mut report_train = Vec::new();
    let mut report_val = Vec::new();
    for epoch in 1..=config.max_epochs {
        let (loss, grad) = loss_and_gradient(&params, &tr, config.l2_lambda);
        report_train.push(loss);
        for k in 0..N_HEADS {
            for (w, g) in params.weights[k].iter_mut().zip(&grad.weights[k]) {
                *w -= config.learning_rate * g;
            }
            params.biases[k] -= config.learning_rate * grad.biases[k];
        }
        let v = data_loss(&params, &va);
        report_val.push(v);
        if v < best_val {
            best_val = v;
            best = params.clone();
            best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience.max(1) {
                break;
            }
        }
    }
    let stopped_epoch = report_train.len();
    let model = ClassifierModel { format_version: FORMAT_VERSION, config: config.clone(), features, params: best, tau: config.tau };
    let val_metrics = evaluate(&model, val)?;
    Ok((
        model,
        TrainReport { train_loss: report_train, val_loss: report_val, stopped_epoch, best_epoch, val_metrics },
    ))
}

/// Filtered wins if it clears τ and beats every frame; otherwise frames at or above τ,
/// falling back to the single most probable frame.
pub fn decide(probabilities: &[f64; N_HEADS], tau: f64) -> LabelSet {
    let filtered = probabilities[Label::Filtered.index()];
    let (best_frame, best_p) = Frame::ALL
        .iter()
        .map(|f| (*f, probabilities[f.index()]))
        .fold((Frame::GovCrit, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
    if filtered >= tau && filtered > best_p {
        return LabelSet::Filtered;
    }
    let mut set: FrameSet = Frame::ALL.iter().copied().filter(|f| probabilities[f.index()] >= tau).collect();
    if set.is_empty() {
        set.insert(best_frame);
    }
    LabelSet::frames(set).expect("non-empty")
}

impl ClassifierModel {
    pub fn probabilities(&self, text: &str) -> [f64; N_HEADS] {
        self.params.logits(&self.features.transform(text)).map(sigmoid)
    }

    pub fn predict(&self, post: &Post) -> Prediction {
        let probabilities = self.probabilities(&post.text);
        Prediction { labels: decide(&probabilities, self.tau), probabilities }
    }

    /// Predictions in input order.
    pub fn predict_batch(&self, posts: &[Post]) -> Vec<Prediction> {
        posts.par_iter().map(|p| self.predict(p)).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, ClassifierError> {
        let m: ClassifierModel = serde_json::from_str(s).map_err(|e| ClassifierError::ModelInvalid(e.to_string()))?;
        if m.format_version != FORMAT_VERSION {
            return Err(ClassifierError::ModelInvalid(format!("unsupported format_version {}", m.format_version)));
        }
        let v = m.features.dim();
        if m.params.weights.len() != N_HEADS
            || m.params.biases.len() != N_HEADS
            || m.params.weights.iter().any(|w| w.len() != v)
            || m.features.idf_values().len() != v
        {
            return Err(ClassifierError::ModelInvalid("weight shapes do not match the vocabulary".into()));
        }
        if !(m.tau > 0.0 && m.tau < 1.0) {
            return Err(ClassifierError::ModelInvalid("tau must lie in (0, 1)".into()));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), ClassifierError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ClassifierError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Scores model predictions against the corpus's gold labels.
pub fn evaluate(model: &ClassifierModel, test: &Corpus) -> Result<PrfReport, ClassifierError> {
    let pairs = gold_pairs(test)?;
    if pairs.is_empty() {
        return Err(ClassifierError::EmptySplit("test"));
    }
    let gold: LabelIndex = pairs.iter().map(|(p, l)| (p.id.clone(), *l)).collect();
    let system: LabelIndex = pairs
        .par_iter()
        .map(|(p, _)| (p.id.clone(), model.predict(p).labels))
        .collect::<Vec<_>>()
        .into_iter()
        .collect();
    prf_against_reference(&system, &gold).map_err(|e| ClassifierError::ModelInvalid(e.to_string()))
}
