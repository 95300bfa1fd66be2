use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use chrono::Utc;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::client::{ChatClient, ChatRequest, LlmClientConfig};
use super::parse::{parse_filter_response_with, parse_frames_response_with, FilterDecision, ParseMode};
use super::prompt::{build_prompt, PromptTemplate, Stage};
use super::LlmError;
use crate::corpus::{Annotation, Annotator, AnnotatorKind, Corpus, Post};
use crate::frame::{FrameSet, LabelSet};

#[derive(Debug, Clone, Default)]
pub struct BatchOptions {
    /// Annotator id recorded on outputs; defaults to the model name.
    pub annotator_id: Option<String>,
    pub checkpoint: Option<PathBuf>,
    pub raw_log: Option<PathBuf>,
    pub parse_mode: ParseMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub post_id: String,
    pub stage: Stage,
    pub error: String,
}

#[derive(Debug, Clone, Default)]
pub struct BatchOutcome {
    /// Successful annotations in corpus order, including ones restored from the checkpoint.
    pub annotations: Vec<Annotation>,
    pub failures: Vec<Failure>,
    pub requests: usize,
    pub resumed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawLogRecord {
    pub post_id: String,
    pub stage: Stage,
    pub attempt: usize,
    pub request_digest: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parsed: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointRecord {
    post_id: String,
    annotation: Annotation,
    raw: Vec<String>,
}

struct Sink(Mutex<Option<BufWriter<File>>>);

impl Sink {
    fn open(path: Option<&PathBuf>) -> Result<Self, LlmError> {
        let w = match path {
            Some(p) => Some(BufWriter::new(OpenOptions::new().create(true).append(true).open(p)?)),
            None => None,
        };
        Ok(Sink(Mutex::new(w)))
    }

    fn append<T: Serialize>(&self, record: &T) {
        let mut guard = self.0.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(w) = guard.as_mut() {
            let res = serde_json::to_writer(&mut *w, record)
                .map_err(std::io::Error::from)
                .and_then(|_| w.write_all(b"\n"))
                .and_then(|_| w.flush());
            if let Err(e) = res {
                log::error!("failed to append log record: {e}");
            }
        }
    }
}

fn read_checkpoint(path: &PathBuf) -> Result<HashMap<String, Annotation>, LlmError> {
    let mut done = HashMap::new();
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(done),
        Err(e) => return Err(e.into()),
    };
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<CheckpointRecord>(&line) {
            Ok(r) => {
                done.insert(r.post_id, r.annotation);
            }
            // A torn final line from an interrupted run is expected; the post is simply redone.
            Err(e) => log::warn!("checkpoint line {} ignored: {e}", i + 1),
        }
    }
    Ok(done)
}

fn digest(request: &ChatRequest) -> String {
    let bytes = serde_json::to_vec(request).expect("request serializes");
    hex::encode(Sha256::digest(bytes))
}

struct Runner<'a> {
    client: &'a dyn ChatClient,
    config: &'a LlmClientConfig,
    filter: &'a PromptTemplate,
    frames: &'a PromptTemplate,
    mode: ParseMode,
    annotator: Annotator,
    raw_log: Sink,
    requests: AtomicUsize,
}

impl Runner<'_> {
    /// Sends one stage with retries; transport and parse failures both consume an attempt.
    fn call<T>(
        &self,
        post: &Post,
        template: &PromptTemplate,
        parse: impl Fn(&str) -> Result<T, LlmError>,
        describe: impl Fn(&T) -> serde_json::Value,
    ) -> Result<(T, String), String> {
        let request = ChatRequest {
            model: self.config.model.clone(),
            messages: build_prompt(template, post).map_err(|e| e.to_string())?,
            temperature: self.config.temperature,
        };
        let request_digest = digest(&request);
        let mut last = String::new();
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                std::thread::sleep(self.config.backoff(attempt - 1));
            }
            self.requests.fetch_add(1, Ordering::Relaxed);
            let mut record = RawLogRecord {
                post_id: post.id.clone(),
                stage: template.stage,
                attempt,
                request_digest: request_digest.clone(),
                raw: None,
                parsed: None,
                error: None,
            };
            let outcome = match self.client.complete(&request) {
                Ok(raw) => {
                    let parsed = parse(&raw);
                    record.raw = Some(raw.clone());
                    parsed.map(|p| (p, raw)).map_err(|e| e.to_string())
                }
                Err(e) => Err(e.to_string()),
            };
            match outcome {
                Ok((p, raw)) => {
                    record.parsed = Some(describe(&p));
                    self.raw_log.append(&record);
                    return Ok((p, raw));
                }
                Err(e) => {
                    log::debug!("post {} {} attempt {attempt}: {e}", post.id, template.stage.as_str());
                    record.error = Some(e.clone());
                    self.raw_log.append(&record);
                    last = e;
                }
            }
        }
        Err(last)
    }

    fn annotate(&self, post: &Post) -> Result<(Annotation, Vec<String>), Failure> {
        let fail = |stage, error| Failure { post_id: post.id.clone(), stage, error };
        let ((decision, _), raw1) = self
            .call(
                post,
                self.filter,
                |r| parse_filter_response_with(r, self.mode),
                |(d, reason)| serde_json::json!({ "label": d.tag(), "reason": reason }),
            )
            .map_err(|e| fail(Stage::Filter, e))?;
        let now = Utc::now().timestamp();
        if decision == FilterDecision::Other {
            let a = Annotation::new(post.id.clone(), self.annotator.clone(), LabelSet::Filtered, now);
            return Ok((a, vec![raw1]));
        }
        let (labels, raw2) = self
            .call(
                post,
                self.frames,
                |r| parse_frames_response_with(r, self.mode),
                |ls| {
                    serde_json::Value::Array(
                        ls.iter()
                            .map(|(f, r)| serde_json::json!({ "label": f.prompt_tag(), "reason": r }))
                            .collect(),
                    )
                },
            )
            .map_err(|e| fail(Stage::Frames, e))?;
        let set: FrameSet = labels.iter().map(|(f, _)| *f).collect();
        let mut a = Annotation::new(
            post.id.clone(),
            self.annotator.clone(),
            LabelSet::frames(set).expect("parser returns at least one frame"),
            now,
        );
        a.rationales = labels.into_iter().collect::<BTreeMap<_, _>>();
        Ok((a, vec![raw1, raw2]))
    }
}

/// Runs the relevance filter on every post and the frame prompt on relevant ones.
///
/// Posts already present in the checkpoint are not re-sent. Posts that exhaust
/// their retries are reported in `failures` and the batch carries on.
pub fn annotate_two_stage(
    corpus: &Corpus,
    client: &dyn ChatClient,
    config: &LlmClientConfig,
    filter_template: &PromptTemplate,
    frames_template: &PromptTemplate,
    options: &BatchOptions,
) -> Result<BatchOutcome, LlmError> {
    config.validate()?;
    for (t, stage) in [(filter_template, Stage::Filter), (frames_template, Stage::Frames)] {
        if t.stage != stage {
            return Err(LlmError::ConfigInvalid(format!("expected a {} template", stage.as_str())));
        }
        t.validate().map_err(|e| LlmError::ConfigInvalid(e.to_string()))?;
    }

    let mut done = match &options.checkpoint {
        Some(p) => read_checkpoint(p)?,
        None => HashMap::new(),
    };
    done.retain(|id, _| corpus.contains(id));
    let pending: Vec<&Post> = corpus.iter().filter(|p| !done.contains_key(&p.id)).collect();

    let runner = Runner {
        client,
        config,
        filter: filter_template,
        frames: frames_template,
        mode: options.parse_mode,
        annotator: Annotator::new(
            options.annotator_id.clone().unwrap_or_else(|| config.model.clone()),
            AnnotatorKind::Llm,
        ),
        raw_log: Sink::open(options.raw_log.as_ref())?,
        requests: AtomicUsize::new(0),
    };
    let checkpoint = Sink::open(options.checkpoint.as_ref())?;
    let next = AtomicUsize::new(0);
    let workers = config.max_concurrency.min(pending.len()).max(1);

    let results: Vec<(usize, Result<Annotation, Failure>)> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                s.spawn(|| {
                    let mut local = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        let Some(post) = pending.get(i) else { break };
                        let r = runner.annotate(post).map(|(a, raw)| {
                            checkpoint.append(&CheckpointRecord { post_id: post.id.clone(), annotation: a.clone(), raw });
                            a
                        });
                        local.push((i, r));
                    }
                    local
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("annotation worker panicked")).collect()
    });

    let resumed = done.len();
    let mut fresh: HashMap<String, Annotation> = HashMap::new();
    let mut failures = Vec::new();
    let mut ordered = results;
    ordered.sort_by_key(|(i, _)| *i);
    for (_, r) in ordered {
        match r {
            Ok(a) => {
                fresh.insert(a.post_id.clone(), a);
            }
            Err(f) => failures.push(f),
        }
    }
    let annotations = corpus
        .iter()
        .filter_map(|p| done.remove(&p.id).or_else(|| fresh.remove(&p.id)))
        .collect();
    Ok(BatchOutcome { annotations, failures, requests: runner.requests.into_inner(), resumed })
}
