mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::Value;
use tacos_core::classifier::{ChatClient, Classifier, ClassifyError, EncoderClassifier, PromptClassifier, ScoreKind};
use tacos_core::Taxonomy;

#[derive(Clone, Default)]
struct Seen {
    calls: Arc<AtomicUsize>,
    bodies: Arc<Mutex<Vec<Value>>>,
    auth: Arc<Mutex<Vec<String>>>,
}

type Reply = fn(usize) -> (StatusCode, Value);

fn chat_server(reply: Reply) -> (String, Seen) {
    let seen = Seen::default();
    let router = Router::new()
        .route(
            "/v1/chat/completions",
            post(|State((s, f)): State<(Seen, Reply)>, headers: HeaderMap, Json(body): Json<Value>| async move {
                let n = s.calls.fetch_add(1, Ordering::SeqCst);
                s.bodies.lock().unwrap().push(body);
                if let Some(a) = headers.get("authorization") {
                    s.auth.lock().unwrap().push(a.to_str().unwrap().to_string());
                }
                let (status, v) = f(n);
                (status, Json(v))
            }),
        )
        .with_state((seen.clone(), reply));
    (format!("{}/v1/chat/completions", common::serve(router)), seen)
}

fn is8() -> Taxonomy {
    Taxonomy::canonical().information_seeking_subset().unwrap()
}

fn client(url: &str, retries: u32, creds: Option<&str>) -> ChatClient {
    ChatClient::new(url, "stub-model", creds.map(String::from), Duration::from_secs(5), retries, 4).unwrap()
}

#[test]
fn chat_answer_is_parsed_and_request_is_temperature_zero() {
    let (url, seen) = chat_server(|_| (StatusCode::OK, common::chat_reply(" Patient Inquiry\n")));
    std::env::set_var("TACOS_TEST_KEY_A", "sekret");
    let c = PromptClassifier::new("p", is8(), 0, 1, &[], client(&url, 0, Some("TACOS_TEST_KEY_A"))).unwrap();
    let p = c.classify("When is my next appointment?").unwrap();
    assert_eq!(p.label_id, "patient_inquiry");
    p.validate(c.taxonomy(), ScoreKind::OneHot).unwrap();
    let body = &seen.bodies.lock().unwrap()[0];
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(body["model"], "stub-model");
    let content = body["messages"][0]["content"].as_str().unwrap();
    assert!(content.ends_with("User query: When is my next appointment?"));
    assert_eq!(seen.auth.lock().unwrap()[0], "Bearer sekret");
}

#[test]
fn transient_5xx_is_retried() {
    let (url, seen) = chat_server(|n| {
        if n < 2 {
            (StatusCode::SERVICE_UNAVAILABLE, serde_json::json!({}))
        } else {
            (StatusCode::OK, common::chat_reply("app_inquiry"))
        }
    });
    let c = PromptClassifier::new("p", is8(), 0, 1, &[], client(&url, 2, None)).unwrap();
    assert_eq!(c.classify("q").unwrap().label_id, "app_inquiry");
    assert_eq!(seen.calls.load(Ordering::SeqCst), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let (url, seen) = chat_server(|_| (StatusCode::BAD_REQUEST, serde_json::json!({"error": "bad"})));
    let c = PromptClassifier::new("p", is8(), 0, 1, &[], client(&url, 3, None)).unwrap();
    let err = c.classify("q").unwrap_err();
    assert!(matches!(err, ClassifyError::Http { status: 400, .. }));
    assert_eq!(seen.calls.load(Ordering::SeqCst), 1);
}

#[test]
fn unparseable_answers_exhaust_the_retry_budget() {
    let (url, seen) = chat_server(|_| (StatusCode::OK, common::chat_reply("banana")));
    let c = PromptClassifier::new("p", is8(), 0, 1, &[], client(&url, 0, None)).unwrap();
    let err = c.classify("q").unwrap_err();
    assert!(matches!(err, ClassifyError::Unparseable { attempts: 3, .. }));
    assert!(!err.is_unavailable());
    assert_eq!(seen.calls.load(Ordering::SeqCst), 3);
}

#[test]
fn missing_credentials_variable_is_a_config_error() {
    let (url, seen) = chat_server(|_| (StatusCode::OK, common::chat_reply("app_inquiry")));
    let c = PromptClassifier::new("p", is8(), 0, 1, &[], client(&url, 0, Some("TACOS_TEST_KEY_UNSET_X"))).unwrap();
    assert!(matches!(c.classify("q"), Err(ClassifyError::Config(_))));
    assert_eq!(seen.calls.load(Ordering::SeqCst), 0);
}

#[test]
fn unreachable_endpoint_is_unavailable() {
    let c = PromptClassifier::new("p", is8(), 0, 1, &[], client("http://127.0.0.1:9/none", 1, None)).unwrap();
    assert!(c.classify("q").unwrap_err().is_unavailable());
}

fn encoder_server(scores: Vec<f64>, delay: Duration) -> String {
    let router = Router::new().route(
        "/classify",
        post(move |Json(body): Json<Value>| {
            let scores = scores.clone();
            async move {
                assert!(body["text"].is_string());
                tokio::time::sleep(delay).await;
                Json(serde_json::json!({"scores": scores, "model_version": "stub-1"}))
            }
        }),
    );
    format!("{}/classify", common::serve(router))
}

#[test]
fn encoder_scores_pick_argmax() {
    let t = Taxonomy::canonical();
    let mut scores = vec![0.01; 21];
    scores[t.index_of("self_harm").unwrap()] = 0.8;
    let url = encoder_server(scores, Duration::ZERO);
    let e = EncoderClassifier::new("enc", t.clone(), &url, None, Duration::from_secs(5), 0, 2).unwrap();
    let p = e.classify("anything").unwrap();
    assert_eq!(p.label_id, "self_harm");
    p.validate(&t, ScoreKind::Probabilistic).unwrap();
}

#[test]
fn encoder_rejects_unnormalized_or_short_scores() {
    let t = Taxonomy::canonical();
    let url = encoder_server(vec![0.5; 21], Duration::ZERO);
    let e = EncoderClassifier::new("enc", t.clone(), &url, None, Duration::from_secs(5), 0, 2).unwrap();
    assert!(matches!(e.classify("x"), Err(ClassifyError::InvalidScores(_))));
    let url = encoder_server(vec![1.0], Duration::ZERO);
    let e = EncoderClassifier::new("enc", t, &url, None, Duration::from_secs(5), 0, 2).unwrap();
    assert!(matches!(e.classify("x"), Err(ClassifyError::InvalidScores(_))));
}

#[test]
fn slow_encoder_times_out() {
    let t = Taxonomy::canonical();
    let mut scores = vec![0.0; 21];
    scores[0] = 1.0;
    let url = encoder_server(scores, Duration::from_secs(3));
    let e = EncoderClassifier::new("enc", t, &url, None, Duration::from_millis(300), 0, 2).unwrap();
    let err = e.classify("x").unwrap_err();
    assert!(matches!(err, ClassifyError::Timeout(_)), "{err:?}");
    assert!(err.is_unavailable());
}
