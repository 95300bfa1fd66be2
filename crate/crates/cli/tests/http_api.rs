use std::net::SocketAddr;
use std::sync::Arc;

use chrono::Duration;
use framekit::validate::{ManualClock, ValidationStore};
use framekit::{Corpus, Post};
use framekit_cli::server::{spawn_background, AppState};
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};

struct Service {
    base: String,
    clock: Arc<ManualClock>,
    http: Client,
}

fn start() -> Service {
    let corpus = Corpus::from_posts(vec![
        Post::new("p1", "the city council ignores the homeless", 1_671_062_400),
        Post::new("p2", "gave a homeless man my sandwich", 1_671_148_800),
        Post::new("p3", "homeless shelters need funding", 1_671_235_200),
    ])
    .unwrap();
    let clock = Arc::new(ManualClock::at_epoch_seconds(1_700_000_000));
    let store = ValidationStore::in_memory(clock.clone(), Duration::seconds(600));
    let addr: SocketAddr = spawn_background(Arc::new(AppState { store, corpus }), "127.0.0.1:0").unwrap();
    Service { base: format!("http://{addr}"), clock, http: Client::new() }
}

fn proposal(post: &str, frames: &[&str]) -> String {
    let rationales: serde_json::Map<String, Value> =
        frames.iter().map(|f| (f.to_string(), json!(format!("mentions {f}")))).collect();
    json!({
        "post_id": post,
        "annotator": {"id": "gpt-4", "kind": "llm"},
        "labels": {"frames": frames},
        "rationales": rationales,
        "created_at": 0
    })
    .to_string()
}

impl Service {
    fn upload(&self, body: String) -> (StatusCode, Value) {
        let r = self.http.post(format!("{}/api/batches", self.base)).body(body).send().unwrap();
        let status = r.status();
        (status, r.json().unwrap_or(Value::Null))
    }

    fn next(&self, annotator: &str) -> (StatusCode, Value) {
        let r = self.http.get(format!("{}/api/queue/next?annotator={annotator}", self.base)).send().unwrap();
        let status = r.status();
        (status, if status == StatusCode::OK { r.json().unwrap() } else { Value::Null })
    }

    fn decide(&self, body: Value) -> (StatusCode, Value) {
        let r = self.http.post(format!("{}/api/decisions", self.base)).json(&body).send().unwrap();
        let status = r.status();
        (status, r.json().unwrap_or(Value::Null))
    }

    fn get_json(&self, path: &str) -> Value {
        self.http.get(format!("{}{path}", self.base)).send().unwrap().json().unwrap()
    }

    fn seed(&self) {
        let batch = [
            proposal("p1", &["government_critique", "interaction_with_homeless_person"]),
            proposal("p2", &["interaction_with_homeless_person"]),
        ]
        .join("\n");
        let (status, body) = self.upload(batch);
        assert_eq!(status, StatusCode::OK);
        assert_eq!(body["enqueued"], 2);
    }
}

#[test]
fn frames_registry_lists_nine_frames_with_definitions() {
    let s = start();
    let frames = s.get_json("/api/frames");
    let frames = frames.as_array().unwrap();
    assert_eq!(frames.len(), 9);
    assert_eq!(frames[0]["tag"], "government_critique");
    assert_eq!(frames[0]["name"], "GovCrit.");
    assert_eq!(frames[0]["theme"], "Critiques");
    assert!(frames.iter().all(|f| !f["definition"].as_str().unwrap().is_empty()));
}

#[test]
fn batch_upload_is_idempotent_and_validated() {
    let s = start();
    s.seed();
    let (status, body) = s.upload(proposal("p1", &["government_critique"]));
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["enqueued"], 0);
    assert_eq!(body["items_total"], 2);

    let (status, _) = s.upload(proposal("zz", &["government_critique"]));
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, body) = s.upload("{not json".into());
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(body["error"].as_str().unwrap().contains("line 1"));
}

#[test]
fn queue_item_shape_and_exclusive_leases() {
    let s = start();
    s.seed();
    let (status, item) = s.next("alice");
    assert_eq!(status, StatusCode::OK);
    assert_eq!(item["item_id"], "p1");
    assert_eq!(item["post"]["id"], "p1");
    assert_eq!(item["post"]["created_at"], "2022-12-15T00:00:00Z");
    assert_eq!(item["proposed"]["frames"], json!(["government_critique", "interaction_with_homeless_person"]));
    assert_eq!(item["proposed"]["rationales"]["government_critique"], "mentions government_critique");
    assert_eq!(item["lease_expiry"], "2023-11-14T22:23:20Z");

    // a repeat call returns the same lease
    assert_eq!(s.next("alice").1["item_id"], "p1");
    assert_eq!(s.next("bob").1["item_id"], "p2");
    assert_eq!(s.next("carol").0, StatusCode::NO_CONTENT);

    let r = s.http.get(format!("{}/api/queue/next", s.base)).send().unwrap();
    assert_eq!(r.status(), StatusCode::BAD_REQUEST);
}

#[test]
fn expired_lease_is_reissued() {
    let s = start();
    s.seed();
    assert_eq!(s.next("alice").1["item_id"], "p1");
    assert_eq!(s.next("bob").1["item_id"], "p2");
    assert_eq!(s.next("carol").0, StatusCode::NO_CONTENT);
    s.clock.advance(Duration::seconds(601));
    assert_eq!(s.next("carol").1["item_id"], "p1");
}

#[test]
fn decisions_map_errors_to_status_codes() {
    let s = start();
    s.seed();
    s.next("alice");
    let ok = json!({"item_id": "p1", "annotator": "alice", "kept": ["government_critique"], "elapsed_seconds": 30.0});

    let mut wrong = ok.clone();
    wrong["annotator"] = json!("mallory");
    assert_eq!(s.decide(wrong).0, StatusCode::CONFLICT);

    let mut unknown = ok.clone();
    unknown["item_id"] = json!("nope");
    assert_eq!(s.decide(unknown).0, StatusCode::NOT_FOUND);

    let empty = json!({"item_id": "p1", "annotator": "alice", "kept": [], "elapsed_seconds": 30.0});
    assert_eq!(s.decide(empty).0, StatusCode::UNPROCESSABLE_ENTITY);

    let (status, ann) = s.decide(ok.clone());
    assert_eq!(status, StatusCode::OK);
    assert_eq!(ann["annotator"]["kind"], "expert_llm");
    assert_eq!(ann["labels"], json!({"frames": ["government_critique"]}));
    assert_eq!(ann["rationales"], json!({"government_critique": "mentions government_critique"}));

    // resubmitting the same decision is idempotent
    let (status, again) = s.decide(ok);
    assert_eq!(status, StatusCode::OK);
    assert_eq!(again, ann);
}

#[test]
fn stats_and_export_follow_decisions() {
    let s = start();
    s.seed();
    s.next("alice");
    s.next("bob");
    assert_eq!(
        s.decide(json!({"item_id": "p1", "annotator": "alice", "kept": ["government_critique"], "elapsed_seconds": 10.0}))
            .0,
        StatusCode::OK
    );
    assert_eq!(
        s.decide(json!({"item_id": "p2", "annotator": "bob", "filtered": true, "elapsed_seconds": 47.6})).0,
        StatusCode::OK
    );
    let stats = s.get_json("/api/stats?baseline=187.49");
    assert_eq!(stats["items_total"], 2);
    assert_eq!(stats["items_done"], 2);
    assert_eq!(stats["items_filtered"], 1);
    assert!((stats["elapsed_mean"].as_f64().unwrap() - 28.8).abs() < 1e-12);
    assert!((stats["speedup_vs_baseline"].as_f64().unwrap() - 187.49 / 28.8).abs() < 1e-12);
    assert_eq!(stats["per_frame"]["government_critique"]["proposed_count"], 1);
    assert_eq!(stats["per_frame"]["interaction_with_homeless_person"]["proposed_count"], 2);
    assert_eq!(stats["per_frame"]["interaction_with_homeless_person"]["kept_count"], 0);

    let plain = s.get_json("/api/stats");
    assert!(plain["speedup_vs_baseline"].is_null());
    let r = s.http.get(format!("{}/api/stats?baseline=-1", s.base)).send().unwrap();
    assert_eq!(r.status(), StatusCode::BAD_REQUEST);

    let r = s.http.get(format!("{}/api/export", s.base)).send().unwrap();
    assert_eq!(r.headers()["content-type"], "application/x-ndjson");
    let body = r.text().unwrap();
    let lines: Vec<Value> = body.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["post_id"], "p1");
    assert_eq!(lines[1]["labels"], "filtered");
    let again = s.http.get(format!("{}/api/export", s.base)).send().unwrap().text().unwrap();
    assert_eq!(body, again);
}
