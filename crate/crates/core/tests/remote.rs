//! Remote backends against in-process HTTP stubs.

mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};

use common::{run_cli, write};
use factforge::advgen::{AdversarialExample, Label};
use factforge::corpus::{Document, SummaryKind, SummaryUnit};
use factforge::correct::{
    correct_summary, CorrectionParams, Corrector, FactualityClassifier, RemoteClassifier,
    RemoteCorrector, SEP,
};
use factforge::evalrep::EvalReport;
use factforge::http::{HttpError, JsonClient};
use factforge::infill::{InfillError, Infiller, MaskedQuery, RemoteInfiller, MASK};
use factforge::read_jsonl;
use factforge::toy::TOY_CORPUS;

#[derive(Default)]
struct Seen {
    requests: AtomicUsize,
    active: AtomicUsize,
    peak: AtomicUsize,
    bodies: Mutex<Vec<(String, Value)>>,
}

/// Serves `/infill`, `/correct` and `/classify` on an ephemeral port.
///
/// `/infill` answers `beam_size` candidates `["cand1"]`, `["cand2"]`, ... with
/// decreasing scores (or increasing ones when `bad_scores`). `/correct` echoes
/// the first `[SEP]` segment. `/classify` calls a summary factual when it
/// mentions "globex".
struct Stub {
    url: String,
    seen: Arc<Seen>,
}

impl Stub {
    fn start(delay: Duration, bad_scores: bool) -> Stub {
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").unwrap());
        let url = format!("http://{}", server.server_addr().to_ip().unwrap());
        let seen = Arc::new(Seen::default());
        let s = Arc::clone(&seen);
        thread::spawn(move || {
            for mut request in server.incoming_requests() {
                let s = Arc::clone(&s);
                thread::spawn(move || {
                    let now = s.active.fetch_add(1, Ordering::SeqCst) + 1;
                    s.peak.fetch_max(now, Ordering::SeqCst);
                    s.requests.fetch_add(1, Ordering::SeqCst);
                    let mut body = String::new();
                    request.as_reader().read_to_string(&mut body).unwrap();
                    let body: Value = serde_json::from_str(&body).unwrap_or(Value::Null);
                    thread::sleep(delay);
                    let route = request.url().to_string();
                    let answer = match route.as_str() {
                        "/infill" => {
                            let n = body["beam_size"].as_u64().unwrap_or(0);
                            let candidates: Vec<Value> = (1..=n)
                                .map(|i| {
                                    let score = if bad_scores { i as f64 } else { -(i as f64) };
                                    json!({"tokens": [format!("cand{i}")], "score": score})
                                })
                                .collect();
                            Some(json!({ "candidates": candidates }))
                        }
                        "/correct" => {
                            let input = body["input"].as_str().unwrap_or("");
                            let first = input.split(&format!(" {SEP} ")).next().unwrap_or("");
                            Some(json!({ "output": first }))
                        }
                        "/classify" => {
                            let factual = body["summary"]
                                .as_str()
                                .unwrap_or("")
                                .to_lowercase()
                                .contains("globex");
                            Some(
                                json!({"factual": factual, "score": if factual { 0.9 } else { 0.2 }}),
                            )
                        }
                        _ => None,
                    };
                    s.bodies.lock().unwrap().push((route, body));
                    s.active.fetch_sub(1, Ordering::SeqCst);
                    let response = match answer {
                        Some(v) => tiny_http::Response::from_string(v.to_string()).with_header(
                            "Content-Type: application/json"
                                .parse::<tiny_http::Header>()
                                .unwrap(),
                        ),
                        None => tiny_http::Response::from_string("not found").with_status_code(404),
                    };
                    let _ = request.respond(response);
                });
            }
        });
        Stub { url, seen }
    }

    fn bodies(&self, route: &str) -> Vec<Value> {
        self.seen
            .bodies
            .lock()
            .unwrap()
            .iter()
            .filter(|(r, _)| r == route)
            .map(|(_, b)| b.clone())
            .collect()
    }
}

fn fast_client() -> JsonClient {
    JsonClient::new(Duration::from_secs(5), 3, 8).with_retry_delay(Duration::ZERO)
}

fn query(context_len: usize) -> MaskedQuery {
    MaskedQuery {
        doc_id: "d".into(),
        sentence_index: 0,
        masked_text: vec!["john".into(), "founded".into(), MASK.into(), ".".into()],
        gold_span: vec!["acme".into()],
        role: factforge::extract::Role::Object,
        context: (0..context_len).map(|i| format!("c{i}")).collect(),
    }
}

#[test]
fn remote_infill_ranks_and_truncates_context() {
    let stub = Stub::start(Duration::ZERO, false);
    let infiller = RemoteInfiller::new(&stub.url, fast_client());
    let cands = infiller.infill(&query(700), 16).unwrap();
    assert_eq!(cands.len(), 16);
    assert_eq!(cands[4].rank, 5);
    assert_eq!(cands[4].tokens, ["cand5"]);
    let sent = &stub.bodies("/infill")[0];
    let ctx = sent["context"].as_array().unwrap();
    assert_eq!(ctx.len(), 512);
    assert_eq!(ctx[0], "c0");
    assert_eq!(sent["masked_text"][2], MASK);
}

#[test]
fn remote_infill_rejects_rising_scores() {
    let stub = Stub::start(Duration::ZERO, true);
    let infiller = RemoteInfiller::new(&stub.url, fast_client());
    assert!(matches!(
        infiller.infill(&query(3), 4),
        Err(InfillError::Protocol(_))
    ));
}

#[test]
fn unknown_route_is_not_retried() {
    let stub = Stub::start(Duration::ZERO, false);
    let client = fast_client();
    let r: Result<Value, HttpError> = client.post(&format!("{}/nope", stub.url), &json!({}));
    assert!(matches!(r, Err(HttpError::Status { status: 404, .. })));
    assert_eq!(stub.seen.requests.load(Ordering::SeqCst), 1);
}

#[test]
fn in_flight_requests_are_capped() {
    let stub = Stub::start(Duration::from_millis(40), false);
    let client = JsonClient::new(Duration::from_secs(5), 1, 2);
    let url = format!("{}/classify", stub.url);
    thread::scope(|scope| {
        for _ in 0..8 {
            let (client, url) = (client.clone(), url.clone());
            scope.spawn(move || {
                let v: Value = client
                    .post(&url, &json!({"summary": "x", "document": "y"}))
                    .unwrap();
                assert_eq!(v["factual"], false);
            });
        }
    });
    assert_eq!(stub.seen.requests.load(Ordering::SeqCst), 8);
    assert!(stub.seen.peak.load(Ordering::SeqCst) <= 2);
}

#[test]
fn remote_corrector_and_classifier() {
    let stub = Stub::start(Duration::ZERO, false);
    let doc = Document::from_raw("d", "John founded Acme in 1990. Globex sells tools.");
    let corrector = RemoteCorrector::new(&stub.url, fast_client());
    let classifier = RemoteClassifier::new(&stub.url, fast_client());

    let summary = SummaryUnit::from_raw("d", SummaryKind::Generated, "John founded Beta in 1990.");
    let r = correct_summary(
        "d",
        &summary,
        &doc,
        &corrector,
        Some(&classifier),
        CorrectionParams::default(),
    );
    assert!(!r.filtered_out);
    assert_eq!(r.filter_score, Some(0.2));
    assert_eq!(r.per_sentence[0].corrected, r.per_sentence[0].original);
    assert_eq!(r.per_sentence[0].corrector, corrector.name());
    let sent = &stub.bodies("/correct")[0];
    assert!(sent["input"]
        .as_str()
        .unwrap()
        .starts_with(&format!("john founded beta in 1990 . {SEP} ")));

    let factual = SummaryUnit::from_raw("d", SummaryKind::Generated, "Globex sells tools.");
    let r = correct_summary(
        "d",
        &factual,
        &doc,
        &corrector,
        Some(&classifier),
        CorrectionParams::default(),
    );
    assert!(r.filtered_out);
    assert_eq!(r.corrected.raw, "Globex sells tools.");
    assert_eq!(classifier.classify("globex", "").unwrap().score, 0.9);
}

#[test]
fn unreachable_corrector_keeps_sentences() {
    let doc = Document::from_raw("d", "John founded Acme in 1990.");
    let corrector = RemoteCorrector::new("http://127.0.0.1:9", fast_client());
    let classifier = RemoteClassifier::new("http://127.0.0.1:9", fast_client());
    let summary = SummaryUnit::from_raw(
        "d",
        SummaryKind::Generated,
        "John founded Beta in 1990. Acme grew.",
    );
    let r = correct_summary(
        "d",
        &summary,
        &doc,
        &corrector,
        Some(&classifier),
        CorrectionParams::default(),
    );
    assert!(!r.filtered_out);
    assert_eq!(r.failures(), 2);
    assert!(!r.any_changed());
    assert_eq!(r.corrected.raw, summary.raw);
    assert!(r.per_sentence[0]
        .failure
        .as_deref()
        .unwrap()
        .contains("after 3 attempt(s)"));
}

#[test]
fn pipeline_with_remote_services() {
    let stub = Stub::start(Duration::ZERO, false);
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("toy.jsonl"), TOY_CORPUS);
    let remote = format!("remote:{}", stub.url);
    let out = run_cli(
        dir.path(),
        &[
            "pipeline",
            "--corpus",
            "toy.jsonl",
            "--out-dir",
            "out",
            "--infill",
            &remote,
            "--corrector",
            &remote,
            "--filter",
            &remote,
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let examples: Vec<AdversarialExample> =
        read_jsonl(&dir.path().join("out/adversarial.jsonl")).unwrap();
    for ex in examples.iter().filter(|e| e.label == Label::Negative) {
        let meta = ex.meta.as_ref().unwrap();
        assert_eq!(meta.replacement, [format!("cand{}", meta.candidate_rank)]);
    }
    // No model is trained for a remote infiller.
    assert!(!dir.path().join("out/model.json").exists());

    let report: EvalReport = serde_json::from_slice(
        &std::fs::read(dir.path().join("out/reports/eval_report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(
        report.classifier,
        format!(
            "{}",
            RemoteClassifier::new(&stub.url, fast_client()).describe()
        )
    );
    assert!(report.factual_fraction.is_some());
    let restoration = report.restoration.unwrap();
    // The echo corrector never edits, so nothing is restored.
    assert_eq!(restoration.restored, 0);
    assert!(stub.seen.requests.load(Ordering::SeqCst) > 0);
}

#[test]
fn gen_adv_fails_when_infiller_is_unreachable() {
    let dir = tempfile::tempdir().unwrap();
    let one = TOY_CORPUS.lines().next().unwrap();
    write(&dir.path().join("one.jsonl"), &format!("{one}\n"));
    let out = run_cli(
        dir.path(),
        &[
            "gen-adv",
            "--corpus",
            "one.jsonl",
            "--out-dir",
            "out",
            "--infill",
            "remote:http://127.0.0.1:9",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("infill"));
    assert!(!dir.path().join("out/adversarial.jsonl").exists());
}
