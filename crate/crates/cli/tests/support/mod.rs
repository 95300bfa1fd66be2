//! Shared fixtures for the CLI integration tests: a synthetic corpus whose frames are
//! keyed by distinctive words, a mock chat-completion server that labels by those
//! words, and a driver for the `framekit` binary.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use axum::extract::State;
use axum::routing::post;
use axum::{Json, Router};
use framekit::llm::{render_filter_response, render_frames_response, FilterDecision};
use framekit::{Annotation, Annotator, AnnotatorKind, Frame, FrameSet, LabelSet, Post};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

pub const KEYWORDS: [(Frame, &str); 9] = [
    (Frame::GovCrit, "senator"),
    (Frame::MoneyAid, "budget"),
    (Frame::SocCrit, "hypocrisy"),
    (Frame::SolnInt, "vouchers"),
    (Frame::Nimby, "zoning"),
    (Frame::Interact, "sidewalk"),
    (Frame::MediaPort, "episode"),
    (Frame::UnDeserv, "addicts"),
    (Frame::HarmGen, "dangerous"),
];

/// Posts containing this word are answered as off-topic by the mock.
pub const OFF_TOPIC: &str = "recipe";

pub const STATES: [(&str, &str); 6] = [
    ("CA", "california"),
    ("TX", "texas"),
    ("NY", "new york"),
    ("OH", "ohio"),
    ("FL", "florida"),
    ("OR", "oregon"),
];

const FILLER: [&str; 20] = [
    "people", "city", "today", "again", "really", "street", "winter", "night", "help", "need", "more", "local",
    "news", "town", "folks", "downtown", "park", "morning", "neighbors", "week",
];

const START_2022: i64 = 1_640_995_200;

pub struct SynthPost {
    pub post: Post,
    /// Labels the mock will assign if the post survives preprocessing.
    pub truth: LabelSet,
    /// Survives cleaning, dedup and the `homeless` keyword filter.
    pub kept: bool,
}

fn words(rng: &mut ChaCha8Rng, k: usize) -> Vec<String> {
    (0..k).map(|_| FILLER.choose(rng).unwrap().to_string()).collect()
}

pub fn synthetic_corpus(n: usize, seed: u64) -> Vec<SynthPost> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<SynthPost> = Vec::with_capacity(n);
    for i in 0..n {
        let id = format!("p{i:05}");
        let created_at = START_2022 + rng.gen_range(0..730 * 86_400);
        let r: f64 = rng.gen();
        if i > 0 && i % 17 == 0 {
            let src = rng.gen_range(0..out.len());
            let (text, truth) = (out[src].post.text.clone(), out[src].truth);
            out.push(SynthPost { post: Post::new(id, text, created_at), truth, kept: false });
            continue;
        }
        let mut tokens = words(&mut rng, 4);
        let (truth, kept) = if r < 0.06 {
            tokens.push("weather".into());
            (LabelSet::Filtered, false)
        } else if r < 0.14 {
            tokens.extend(["homeless".to_string(), OFF_TOPIC.to_string()]);
            (LabelSet::Filtered, true)
        } else {
            let mut frames = FrameSet::empty();
            let k = if rng.gen_bool(0.7) { 1 } else { 2 };
            while frames.len() < k {
                frames.insert(Frame::ALL[rng.gen_range(0..Frame::COUNT)]);
            }
            tokens.push("homeless".into());
            for f in frames.iter() {
                tokens.push(KEYWORDS[f.index()].1.into());
            }
            (LabelSet::frames(frames).unwrap(), true)
        };
        if rng.gen_bool(0.6) {
            tokens.push(STATES.choose(&mut rng).unwrap().1.into());
        }
        tokens.shuffle(&mut rng);
        tokens.extend(words(&mut rng, 3));
        let mut text = tokens.join(" ");
        if rng.gen_bool(0.3) {
            text = format!("@user{} {text}", rng.gen_range(0..1000));
        }
        if rng.gen_bool(0.2) {
            text.push_str(&format!(" https://t.co/x{i}"));
        }
        if rng.gen_bool(0.1) {
            text.push_str(" 😀");
        }
        out.push(SynthPost { post: Post::new(id, text, created_at), truth, kept });
    }
    // cleaning can still collide two generated texts; the first occurrence wins
    let mut seen = std::collections::HashSet::new();
    for s in &mut out {
        if s.kept && !seen.insert(framekit::preprocess::clean_text(&s.post.text)) {
            s.kept = false;
        }
    }
    out
}

/// Three experts labeling the first `n_items` kept posts, each disagreeing with the
/// truth on about a quarter of them.
pub fn expert_annotations(posts: &[SynthPost], n_items: usize, seed: u64) -> Vec<Annotation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for s in posts.iter().filter(|s| s.kept).take(n_items) {
        for e in ["e1", "e2", "e3"] {
            let mut labels = s.truth;
            if rng.gen_bool(0.25) {
                let mut set = labels.frame_set();
                let f = Frame::ALL[rng.gen_range(0..Frame::COUNT)];
                if !set.remove(f) {
                    set.insert(f);
                }
                labels = LabelSet::frames(set).unwrap_or(LabelSet::Filtered);
            }
            out.push(Annotation::new(s.post.id.clone(), Annotator::new(e, AnnotatorKind::Expert), labels, 0));
        }
    }
    out
}

fn write_lines(path: &Path, lines: impl IntoIterator<Item = String>) {
    let mut text = String::new();
    for l in lines {
        text.push_str(&l);
        text.push('\n');
    }
    std::fs::write(path, text).unwrap();
}

pub struct Inputs {
    pub raw: PathBuf,
    pub experts: PathBuf,
    pub scores: PathBuf,
    pub factors: PathBuf,
    pub posts: Vec<SynthPost>,
}

/// Writes the raw corpus, expert labels, a per-post score table and state factors.
pub fn write_inputs(dir: &Path, n: usize, seed: u64) -> Inputs {
    std::fs::create_dir_all(dir).unwrap();
    let posts = synthetic_corpus(n, seed);
    let raw = dir.join("raw.jsonl");
    write_lines(&raw, posts.iter().map(|s| serde_json::to_string(&s.post).unwrap()));

    let experts = dir.join("experts.jsonl");
    let anns = expert_annotations(&posts, 40, seed + 1);
    write_lines(&experts, anns.iter().map(|a| serde_json::to_string(a).unwrap()));

    let mut rng = ChaCha8Rng::seed_from_u64(seed + 2);
    let scores = dir.join("scores.tsv");
    write_lines(
        &scores,
        posts.iter().filter(|s| s.kept).map(|s| {
            let base = if s.truth.has_frame(Frame::HarmGen) { 0.6 } else { 0.3 };
            format!("{}\ttoxicity\t{:.4}", s.post.id, base + rng.gen_range(-0.2..0.2))
        }),
    );

    let factors = dir.join("factors.tsv");
    write_lines(&factors, STATES.iter().enumerate().map(|(i, (code, _))| format!("{code}\t{}", 1.5 * i as f64 + 2.0)));
    Inputs { raw, experts, scores, factors, posts }
}

pub struct MockLlm {
    pub endpoint: String,
    pub requests: Arc<AtomicUsize>,
}

/// The post text sits in double quotes after the first blank line of the instruction.
fn quoted_post(user: &str) -> &str {
    let Some(start) = user.find(":\n\n\"").map(|i| i + 4) else { return user };
    let end = user[start..].find("\"\n\n").map_or(user.len(), |e| start + e);
    &user[start..end]
}

async fn complete(State(requests): State<Arc<AtomicUsize>>, Json(body): Json<Value>) -> Json<Value> {
    requests.fetch_add(1, Ordering::SeqCst);
    let user = body["messages"][1]["content"].as_str().unwrap_or_default();
    let text = quoted_post(user).to_lowercase();
    let content = if user.contains("one or more") {
        let mut picked: Vec<(Frame, String)> = KEYWORDS
            .iter()
            .filter(|(_, w)| text.contains(w))
            .map(|(f, w)| (*f, format!("the post mentions {w}")))
            .collect();
        if picked.is_empty() {
            picked.push((Frame::Interact, "the post describes an encounter".into()));
        }
        render_frames_response(&picked)
    } else if text.contains(OFF_TOPIC) {
        render_filter_response(FilterDecision::Other, "the post is about cooking")
    } else {
        render_filter_response(FilterDecision::Relevant, "the post voices an opinion")
    };
    Json(json!({"choices": [{"message": {"role": "assistant", "content": content}}]}))
}

pub fn start_mock_llm() -> MockLlm {
    let requests = Arc::new(AtomicUsize::new(0));
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    listener.set_nonblocking(true).unwrap();
    let addr = listener.local_addr().unwrap();
    let state = requests.clone();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener).unwrap();
            let app = Router::new().route("/v1/chat/completions", post(complete)).with_state(state);
            axum::serve(listener, app).await.unwrap();
        });
    });
    MockLlm { endpoint: format!("http://{addr}/v1/chat/completions"), requests }
}

pub fn framekit<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_framekit")).args(args).env_remove("OPENAI_API_KEY").output().unwrap()
}

/// Runs the binary, panicking with its stderr unless it exits 0; returns stdout.
pub fn framekit_ok<I, S>(args: I) -> String
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    let args: Vec<std::ffi::OsString> = args.into_iter().map(|a| a.as_ref().to_owned()).collect();
    let out = framekit(&args);
    assert!(
        out.status.success(),
        "framekit {:?} exited with {:?}\nstderr:\n{}",
        args,
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Every CSV written by [`run_pipeline`], relative to the work directory.
pub const CSV_OUTPUTS: [&str; 14] = [
    "metrics.csv",
    "agreement_experts.csv",
    "agreement_llm.csv",
    "logodds_frame.csv",
    "logodds_groups.csv",
    "states.csv",
    "proportions.csv",
    "cooccur_frames.csv",
    "cooccur_terms.csv",
    "timeseries.csv",
    "regress.csv",
    "ttest.csv",
    "histogram.csv",
    "subset.csv",
];

/// Drives every subcommand except `serve` over the inputs, writing into `work`.
pub fn run_pipeline(inputs: &Inputs, work: &Path, llm: &MockLlm) {
    let w = |name: &str| work.join(name).to_string_lossy().into_owned();
    let p = |path: &Path| path.to_string_lossy().into_owned();
    let corpus = w("corpus.jsonl");
    let llm_anns = w("llm.jsonl");

    framekit_ok([
        "preprocess", "--input", &p(&inputs.raw), "--out-dir", &p(work), "--keyword", "homeless", "--split",
        "--fractions", "0.7,0.15,0.15", "--seed", "7",
    ]);
    framekit_ok([
        "annotate-llm", "--corpus", &corpus, "--out", &llm_anns, "--endpoint", &llm.endpoint, "--concurrency", "4",
        "--max-retries", "1",
    ]);
    framekit_ok([
        "train", "--train", &w("train.jsonl"), "--val", &w("val.jsonl"), "--annotations", &llm_anns, "--out",
        &w("model.json"), "--report", &w("train_report.json"), "--seed", "3",
    ]);
    framekit_ok([
        "predict", "--model", &w("model.json"), "--corpus", &w("test.jsonl"), "--out", &w("predictions.tsv"),
        "--gold", &llm_anns, "--metrics", &w("metrics.csv"),
    ]);
    framekit_ok([
        "import-predictions", "--predictions", &w("predictions.tsv"), "--corpus", &w("test.jsonl"), "--out",
        &w("model_annotations.jsonl"),
    ]);
    framekit_ok([
        "agreement", "--annotations", &p(&inputs.experts), "--out", &w("agreement_experts.csv"), "--json",
        &w("agreement_experts.json"),
    ]);
    framekit_ok([
        "agreement", "--annotations", &p(&inputs.experts), "--annotations", &llm_anns, "--subject", "gpt-4", "--out",
        &w("agreement_llm.csv"),
    ]);

    let with_labels = |mut args: Vec<String>| {
        args.splice(2..2, ["--corpus".to_string(), corpus.clone(), "--annotations".to_string(), llm_anns.clone()]);
        framekit_ok(args)
    };
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    with_labels(s(&["analyze", "log-odds", "--frame", "GovCrit.", "--out", &w("logodds_frame.csv")]));
    framekit_ok([
        "analyze", "log-odds", "--group-a", &w("train.jsonl"), "--group-b", &w("test.jsonl"), "--n", "2", "--out",
        &w("logodds_groups.csv"),
    ]);
    with_labels(s(&["analyze", "states", "--out", &w("states.csv")]));
    with_labels(s(&[
        "analyze", "proportions", "--group", &format!("train={}", w("train.jsonl")), "--group",
        &format!("val={}", w("val.jsonl")), "--group", &format!("test={}", w("test.jsonl")), "--normalize", "column",
        "--out", &w("proportions.csv"),
    ]));
    with_labels(s(&["analyze", "cooccur", "--out", &w("cooccur_frames.csv")]));
    with_labels(s(&[
        "analyze", "cooccur", "--terms-a", "senator,budget,zoning", "--terms-b", "california,texas,ohio", "--normalize",
        "column", "--out", &w("cooccur_terms.csv"),
    ]));
    with_labels(s(&["analyze", "timeseries", "--out", &w("timeseries.csv")]));
    with_labels(s(&["analyze", "regress", "--factors", &p(&inputs.factors), "--out", &w("regress.csv")]));
    with_labels(s(&[
        "analyze", "ttest", "--scores", &p(&inputs.scores), "--score", "toxicity", "--frame", "harmful_statements_against_homelessness",
        "--histogram", &w("histogram.csv"), "--out", &w("ttest.csv"),
    ]));
    with_labels(s(&["analyze", "subset-sig", "--state", "CA", "--out", &w("subset.csv")]));
}

pub fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let header = r.headers().unwrap().iter().map(str::to_string).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(str::to_string).collect()).collect();
    (header, rows)
}

/// Numeric body of a proportion-matrix CSV (first column holds row labels).
pub fn matrix_values(path: &Path) -> Vec<Vec<f64>> {
    read_csv(path).1.iter().map(|r| r[1..].iter().map(|v| v.parse().unwrap()).collect()).collect()
}

/// Checks the type invariants of every CSV the pipeline exports; returns the first violation.
pub fn check_csv_invariants(work: &Path) -> Result<(), String> {
    for name in CSV_OUTPUTS {
        let path = work.join(name);
        let (header, rows) = read_csv(&path);
        if rows.iter().any(|r| r.len() != header.len()) {
            return Err(format!("{name}: ragged rows"));
        }
    }
    let sums_to_one = |s: f64| (s - 1.0).abs() <= 1e-12 || s == 0.0;
    for name in ["states.csv", "cooccur_frames.csv"] {
        for (i, row) in matrix_values(&work.join(name)).iter().enumerate() {
            let s: f64 = row.iter().sum();
            if !sums_to_one(s) {
                return Err(format!("{name}: row {i} sums to {s}"));
            }
        }
    }
    for name in ["proportions.csv", "cooccur_terms.csv"] {
        let m = matrix_values(&work.join(name));
        for j in 0..m[0].len() {
            let s: f64 = m.iter().map(|r| r[j]).sum();
            if !sums_to_one(s) {
                return Err(format!("{name}: column {j} sums to {s}"));
            }
        }
    }

    let anns = framekit::io::read_annotations(&work.join("llm.jsonl")).unwrap();
    let mut expected = [0u64; Frame::COUNT];
    for a in &anns {
        for f in a.labels.frame_set().iter() {
            expected[f.index()] += 1;
        }
    }
    let mut totals = [0u64; Frame::COUNT];
    for row in read_csv(&work.join("timeseries.csv")).1 {
        let f = framekit::parse_frame(&row[1]).map_err(|e| e.to_string())?;
        totals[f.index()] += row[2].parse::<u64>().map_err(|e| e.to_string())?;
    }
    if totals != expected {
        return Err(format!("timeseries totals {totals:?} differ from frame counts {expected:?}"));
    }

    for (name, col) in [("logodds_frame.csv", "z"), ("logodds_groups.csv", "z"), ("subset.csv", "p_two_sided")] {
        let (header, rows) = read_csv(&work.join(name));
        let j = header.iter().position(|h| h == col).ok_or(format!("{name}: missing column {col}"))?;
        if rows.iter().any(|r| !r[j].parse::<f64>().is_ok_and(f64::is_finite)) {
            return Err(format!("{name}: non-finite {col}"));
        }
    }
    Ok(())
}
