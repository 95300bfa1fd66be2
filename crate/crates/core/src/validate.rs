//! Expert validation queue for LLM proposals, persisted as an append-only event log.
//!
//! Every state change is an [`Event`] appended to a JSON-lines log before the
//! caller sees its result; reopening the store replays the log.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, Mutex, MutexGuard};

use chrono::{DateTime, Duration, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agreement::MeanSd;
use crate::corpus::{Annotation, Annotator, AnnotatorKind, Corpus, Post};
use crate::frame::{Frame, FrameSet, LabelSet};

pub const DEFAULT_LEASE_TTL_SECS: i64 = 15 * 60;

#[derive(Debug, Error)]
pub enum ValidationError {
    #[error("annotation refers to unknown post `{0}`")]
    UnresolvedPost(String),
    #[error("proposal for `{0}` is not an LLM annotation")]
    NotLlmProposal(String),
    #[error("unknown item `{0}`")]
    UnknownItem(String),
    #[error("item `{0}` is not leased to this annotator")]
    NotLeasedToYou(String),
    #[error("invalid decision: {0}")]
    InvalidDecision(String),
    #[error("event log line {line}: {reason}")]
    LogCorrupt { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// A clock that only moves when told to.
#[derive(Debug)]
pub struct ManualClock(Mutex<DateTime<Utc>>);

impl ManualClock {
    pub fn new(start: DateTime<Utc>) -> Self {
        ManualClock(Mutex::new(start))
    }

    pub fn at_epoch_seconds(secs: i64) -> Self {
        Self::new(Utc.timestamp_opt(secs, 0).single().expect("valid timestamp"))
    }

    pub fn advance(&self, by: Duration) {
        let mut t = self.0.lock().unwrap_or_else(|e| e.into_inner());
        *t += by;
    }
}

impl Clock for ManualClock {
    fn now(&self) -> DateTime<Utc> {
        *self.0.lock().unwrap_or_else(|e| e.into_inner())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationDecision {
    pub item_id: String,
    pub annotator: String,
    #[serde(default)]
    pub kept: FrameSet,
    #[serde(default)]
    pub added: FrameSet,
    #[serde(default)]
    pub filtered: bool,
    pub elapsed_seconds: f64,
}

impl ValidationDecision {
    /// Checks the decision against the frames that were proposed.
    pub fn check(&self, proposed: FrameSet) -> Result<(), ValidationError> {
        let bad = |m: &str| Err(ValidationError::InvalidDecision(m.to_string()));
        if !(self.elapsed_seconds.is_finite() && self.elapsed_seconds > 0.0) {
            return bad("elapsed_seconds must be positive");
        }
        if self.annotator.trim().is_empty() {
            return bad("annotator id is empty");
        }
        if !self.kept.is_subset(proposed) {
            return bad("kept frames must be among the proposed frames");
        }
        if !self.added.intersection(proposed).is_empty() {
            return bad("added frames must not already be proposed");
        }
        let chosen = self.kept.union(self.added);
        if self.filtered && !chosen.is_empty() {
            return bad("a filtered decision keeps and adds no frames");
        }
        if !self.filtered && chosen.is_empty() {
            return bad("keep or add at least one frame, or filter the post");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum ItemState {
    Pending,
    Leased { annotator: String, lease_expiry: DateTime<Utc> },
    Done { annotator: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostView {
    pub id: String,
    pub text: String,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposedView {
    pub frames: FrameSet,
    pub filtered: bool,
    pub rationales: BTreeMap<Frame, String>,
}

/// What a validator receives from `lease_next`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueItem {
    pub item_id: String,
    pub post: PostView,
    pub proposed: ProposedView,
    pub lease_expiry: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameCounts {
    pub proposed_count: usize,
    pub kept_count: usize,
    pub added_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationStats {
    pub items_total: usize,
    pub items_done: usize,
    pub items_filtered: usize,
    pub elapsed_mean: Option<f64>,
    pub elapsed_sd: Option<f64>,
    pub per_frame: BTreeMap<Frame, FrameCounts>,
    pub speedup_vs_baseline: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Enqueue { item_id: String, post: Post, proposed: Annotation, at: DateTime<Utc> },
    Lease { item_id: String, annotator: String, lease_expiry: DateTime<Utc>, at: DateTime<Utc> },
    Submit { decision: ValidationDecision, annotation: Annotation, at: DateTime<Utc> },
}

#[derive(Debug, Clone)]
struct Item {
    pos: usize,
    post: Post,
    proposed: Annotation,
    state: ItemState,
    decision: Option<ValidationDecision>,
    final_annotation: Option<Annotation>,
}

impl Item {
    fn view(&self, item_id: &str, lease_expiry: DateTime<Utc>) -> QueueItem {
        QueueItem {
            item_id: item_id.to_string(),
            post: PostView {
                id: self.post.id.clone(),
                text: self.post.text.clone(),
                created_at: Utc.timestamp_opt(self.post.created_at, 0).single().unwrap_or_default(),
            },
            proposed: ProposedView {
                frames: self.proposed.labels.frame_set(),
                filtered: self.proposed.labels.is_filtered(),
                rationales: self.proposed.rationales.clone(),
            },
            lease_expiry,
        }
    }
}

#[derive(Default)]
struct Inner {
    items: HashMap<String, Item>,
    order: Vec<String>,
    open: BTreeSet<usize>,
    log: Option<BufWriter<File>>,
}

impl Inner {
    fn apply(&mut self, event: &Event) {
        match event {
            Event::Enqueue { item_id, post, proposed, .. } => {
                if !self.items.contains_key(item_id) {
                    let pos = self.order.len();
                    self.open.insert(pos);
                    self.order.push(item_id.clone());
                    self.items.insert(
                        item_id.clone(),
                        Item {
                            pos,
                            post: post.clone(),
                            proposed: proposed.clone(),
                            state: ItemState::Pending,
                            decision: None,
                            final_annotation: None,
                        },
                    );
                }
            }
            Event::Lease { item_id, annotator, lease_expiry, .. } => {
                if let Some(item) = self.items.get_mut(item_id) {
                    if !matches!(item.state, ItemState::Done { .. }) {
                        item.state = ItemState::Leased { annotator: annotator.clone(), lease_expiry: *lease_expiry };
                    }
                }
            }
            Event::Submit { decision, annotation, .. } => {
                if let Some(item) = self.items.get_mut(&decision.item_id) {
                    if !matches!(item.state, ItemState::Done { .. }) {
                        item.state = ItemState::Done { annotator: decision.annotator.clone() };
                        item.decision = Some(decision.clone());
                        item.final_annotation = Some(annotation.clone());
                        let pos = item.pos;
                        self.open.remove(&pos);
                    }
                }
            }
        }
    }

    fn record(&mut self, event: Event, sync: bool) -> Result<(), ValidationError> {
        if let Some(w) = self.log.as_mut() {
            serde_json::to_writer(&mut *w, &event).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
            w.flush()?;
            if sync {
                w.get_ref().sync_data()?;
            }
        }
        self.apply(&event);
        Ok(())
    }
}

/// Thread-safe validation queue. All transitions happen under one lock, so
/// they are linearizable; log appends are flushed before the call returns.
pub struct ValidationStore {
    inner: Mutex<Inner>,
    clock: Arc<dyn Clock>,
    lease_ttl: Duration,
}

impl ValidationStore {
    pub fn in_memory(clock: Arc<dyn Clock>, lease_ttl: Duration) -> Self {
        ValidationStore { inner: Mutex::new(Inner::default()), clock, lease_ttl }
    }

    /// Opens (or creates) a log-backed store, replaying any existing events.
    pub fn open(path: &Path, clock: Arc<dyn Clock>, lease_ttl: Duration) -> Result<Self, ValidationError> {
        let mut inner = Inner::default();
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(e.into()),
        };
        let mut good_len = 0;
        let mut lines = text.split_inclusive('\n').enumerate().peekable();
        while let Some((i, line)) = lines.next() {
            let is_last = lines.peek().is_none();
            if !line.trim().is_empty() {
                match serde_json::from_str::<Event>(line) {
                    Ok(ev) if line.ends_with('\n') => inner.apply(&ev),
                    Err(e) if !is_last => {
                        return Err(ValidationError::LogCorrupt { line: i + 1, reason: e.to_string() })
                    }
                    // A torn final append was never acknowledged, so it is cut off.
                    _ => {
                        log::warn!("truncating torn final event log line {}", i + 1);
                        break;
                    }
                }
            }
            good_len += line.len();
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        if good_len < text.len() {
            file.set_len(good_len as u64)?;
        }
        inner.log = Some(BufWriter::new(file));
        Ok(ValidationStore { inner: Mutex::new(inner), clock, lease_ttl })
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn lease_ttl(&self) -> Duration {
        self.lease_ttl
    }

    /// Adds one pending item per proposal; items already present are left alone.
    /// Returns how many items were new.
    pub fn enqueue(&self, proposals: &[Annotation], corpus: &Corpus) -> Result<usize, ValidationError> {
        for a in proposals {
            if !corpus.contains(&a.post_id) {
                return Err(ValidationError::UnresolvedPost(a.post_id.clone()));
            }
            if a.annotator.kind != AnnotatorKind::Llm {
                return Err(ValidationError::NotLlmProposal(a.post_id.clone()));
            }
        }
        let now = self.clock.now();
        let mut inner = self.lock();
        let mut added = 0;
        for a in proposals {
            if inner.items.contains_key(&a.post_id) {
                continue;
            }
            let post = corpus.get(&a.post_id).expect("checked above").clone();
            inner.record(
                Event::Enqueue { item_id: a.post_id.clone(), post, proposed: a.clone(), at: now },
                false,
            )?;
            added += 1;
        }
        Ok(added)
    }

    /// Leases the next available item, or returns the caller's current one.
    pub fn lease_next(&self, annotator: &str) -> Result<Option<QueueItem>, ValidationError> {
        let now = self.clock.now();
        let mut inner = self.lock();
        let mut chosen = None;
        for &pos in &inner.open {
            let id = &inner.order[pos];
            match &inner.items[id].state {
                ItemState::Leased { annotator: a, lease_expiry } if a == annotator => {
                    if *lease_expiry > now {
                        return Ok(Some(inner.items[id].view(id, *lease_expiry)));
                    }
                    chosen = Some(id.clone());
                    break;
                }
                ItemState::Leased { lease_expiry, .. } if *lease_expiry <= now => {
                    chosen.get_or_insert_with(|| id.clone());
                }
                ItemState::Pending => {
                    chosen.get_or_insert_with(|| id.clone());
                }
                _ => {}
            }
        }
        let Some(item_id) = chosen else { return Ok(None) };
        let lease_expiry = now + self.lease_ttl;
        inner.record(
            Event::Lease { item_id: item_id.clone(), annotator: annotator.to_string(), lease_expiry, at: now },
            false,
        )?;
        Ok(Some(inner.items[&item_id].view(&item_id, lease_expiry)))
    }

    /// Records a validator's decision and returns the final annotation.
    pub fn submit_decision(&self, decision: &ValidationDecision) -> Result<Annotation, ValidationError> {
        let now = self.clock.now();
        let mut inner = self.lock();
        let item = inner
            .items
            .get(&decision.item_id)
            .ok_or_else(|| ValidationError::UnknownItem(decision.item_id.clone()))?;
        match &item.state {
            ItemState::Done { annotator } if *annotator == decision.annotator => {
                return Ok(item.final_annotation.clone().expect("done items carry a final annotation"));
            }
            // An expired lease still belongs to its holder until someone else takes it.
            ItemState::Leased { annotator, .. } if *annotator == decision.annotator => {}
            _ => return Err(ValidationError::NotLeasedToYou(decision.item_id.clone())),
        }
        decision.check(item.proposed.labels.frame_set())?;

        let labels = if decision.filtered {
            LabelSet::Filtered
        } else {
            LabelSet::frames(decision.kept.union(decision.added)).expect("checked non-empty")
        };
        let mut annotation = Annotation::new(
            decision.item_id.clone(),
            Annotator::new(decision.annotator.clone(), AnnotatorKind::ExpertLlm),
            labels,
            now.timestamp(),
        );
        annotation.rationales = item
            .proposed
            .rationales
            .iter()
            .filter(|(f, _)| decision.kept.contains(**f))
            .map(|(f, r)| (*f, r.clone()))
            .collect();
        annotation.elapsed_seconds = Some(decision.elapsed_seconds);
        inner.record(Event::Submit { decision: decision.clone(), annotation: annotation.clone(), at: now }, true)?;
        Ok(annotation)
    }

    pub fn state_of(&self, item_id: &str) -> Option<ItemState> {
        self.lock().items.get(item_id).map(|i| i.state.clone())
    }

    pub fn len(&self) -> usize {
        self.lock().order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn stats(&self, baseline_mean_seconds: Option<f64>) -> ValidationStats {
        let inner = self.lock();
        let mut per_frame: BTreeMap<Frame, FrameCounts> = Frame::ALL.iter().map(|f| (*f, FrameCounts::default())).collect();
        let mut elapsed = Vec::new();
        let mut filtered = 0;
        for id in &inner.order {
            let item = &inner.items[id];
            let (Some(d), Some(fin)) = (&item.decision, &item.final_annotation) else { continue };
            elapsed.push(d.elapsed_seconds);
            if fin.labels.is_filtered() {
                filtered += 1;
            }
            for f in item.proposed.labels.frame_set().iter() {
                per_frame.get_mut(&f).unwrap().proposed_count += 1;
            }
            for f in d.kept.iter() {
                per_frame.get_mut(&f).unwrap().kept_count += 1;
            }
            for f in d.added.iter() {
                per_frame.get_mut(&f).unwrap().added_count += 1;
            }
        }
        let ms = (!elapsed.is_empty()).then(|| MeanSd::of(&elapsed));
        let speedup = match (baseline_mean_seconds, &ms) {
            (Some(b), Some(m)) if b > 0.0 && m.mean > 0.0 => Some(b / m.mean),
            _ => None,
        };
        ValidationStats {
            items_total: inner.order.len(),
            items_done: elapsed.len(),
            items_filtered: filtered,
            elapsed_mean: ms.map(|m| m.mean),
            elapsed_sd: ms.map(|m| m.sd),
            per_frame,
            speedup_vs_baseline: speedup,
        }
    }

    /// Final annotations of completed items, ordered by item id.
    pub fn export_final(&self) -> Vec<Annotation> {
        let inner = self.lock();
        let mut out: Vec<Annotation> = inner.items.values().filter_map(|i| i.final_annotation.clone()).collect();
        out.sort_by(|a, b| a.post_id.cmp(&b.post_id));
        out
    }

    pub fn export_jsonl(&self) -> String {
        let mut s = String::new();
        for a in self.export_final() {
            s.push_str(&serde_json::to_string(&a).expect("annotation serializes"));
            s.push('\n');
        }
        s
    }
}
