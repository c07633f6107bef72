//! Live-endpoint behavior against an in-process mock server: verbatim
//! storage of outputs, the in-flight concurrency bound, and retries.

use axum::routing::post;
use axum::{Json, Router};
use forge_core::endpoint::{predict_with_endpoint, EndpointConfig};
use forge_core::manifest::{self, PredictionSource, RawOutputRecord, RunManifest};
use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

const ECHO_BODY: &str = r#"<function_call> {"name": "echo", "arguments": {"x": "1"}}"#;

async fn spawn_server(app: Router) -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        axum::serve(listener, app).await.unwrap();
    });
    format!("http://{addr}/generate")
}

fn config(url: String, max_in_flight: usize, retries: u32) -> EndpointConfig {
    EndpointConfig {
        url,
        request_template: r#"{"prompt": "{PROMPT}"}"#.into(),
        response_path: "choices.0.text".into(),
        headers: BTreeMap::new(),
        max_in_flight,
        timeout_secs: 5,
        retries,
    }
}

#[tokio::test]
async fn echoed_body_is_stored_verbatim_in_the_manifest() {
    let app = Router::new().route(
        "/generate",
        post(|Json(body): Json<serde_json::Value>| async move {
            assert!(body["prompt"].is_string(), "prompt must arrive as a string");
            Json(serde_json::json!({"choices": [{"text": ECHO_BODY}]}))
        }),
    );
    let url = spawn_server(app).await;

    let prompts = vec![("s1".to_string(), "a prompt\nwith \"quotes\"".to_string())];
    let outcomes = predict_with_endpoint(&config(url.clone(), 2, 0), &prompts)
        .await
        .unwrap();
    assert_eq!(outcomes.len(), 1);
    assert_eq!(outcomes[0].result.as_deref(), Ok(ECHO_BODY));

    // Round-trip through a manifest directory: the body comes back verbatim.
    let dir = tempfile::tempdir().unwrap();
    let records: Vec<RawOutputRecord> = outcomes
        .iter()
        .map(|o| RawOutputRecord {
            id: o.id.clone(),
            prompt_sha256: manifest::sha256_hex(prompts[0].1.as_bytes()),
            output: o.result.as_ref().ok().cloned(),
            error: o.result.as_ref().err().cloned(),
            diagnostics: vec![],
        })
        .collect();
    let run = RunManifest::new(
        "mock-run",
        0,
        false,
        "data.jsonl",
        manifest::sha256_hex(b""),
        PredictionSource::Endpoint { url },
    );
    manifest::write_run(dir.path(), &run, &[], &records).unwrap();
    let loaded = manifest::load_raw_outputs(dir.path()).unwrap();
    assert_eq!(loaded[0].output.as_deref(), Some(ECHO_BODY));
}

#[tokio::test]
async fn in_flight_requests_never_exceed_the_bound() {
    let in_flight = Arc::new(AtomicUsize::new(0));
    let max_seen = Arc::new(AtomicUsize::new(0));
    let probe = (in_flight.clone(), max_seen.clone());
    let app = Router::new().route(
        "/generate",
        post(move |_: Json<serde_json::Value>| {
            let (in_flight, max_seen) = probe.clone();
            async move {
                let now = in_flight.fetch_add(1, Ordering::SeqCst) + 1;
                max_seen.fetch_max(now, Ordering::SeqCst);
                tokio::time::sleep(Duration::from_millis(30)).await;
                in_flight.fetch_sub(1, Ordering::SeqCst);
                Json(serde_json::json!({"choices": [{"text": "<no_function_call>"}]}))
            }
        }),
    );
    let url = spawn_server(app).await;

    let prompts: Vec<(String, String)> = (0..12)
        .map(|i| (format!("s{i}"), format!("prompt {i}")))
        .collect();
    let outcomes = predict_with_endpoint(&config(url, 3, 0), &prompts)
        .await
        .unwrap();
    assert_eq!(outcomes.len(), 12);
    assert!(outcomes.iter().all(|o| o.result.is_ok()));
    let peak = max_seen.load(Ordering::SeqCst);
    assert!(peak <= 3, "peak concurrency {peak} exceeded bound 3");
    assert!(peak >= 2, "expected some overlap, saw peak {peak}");
}

#[tokio::test]
async fn transient_failures_are_retried_and_persistent_ones_recorded() {
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    let app = Router::new().route(
        "/generate",
        post(move |_: Json<serde_json::Value>| {
            let counter = counter.clone();
            async move {
                // Fail the first request, succeed afterwards.
                if counter.fetch_add(1, Ordering::SeqCst) == 0 {
                    Err(axum::http::StatusCode::INTERNAL_SERVER_ERROR)
                } else {
                    Ok(Json(serde_json::json!({"choices": [{"text": "ok"}]})))
                }
            }
        }),
    );
    let url = spawn_server(app).await;

    let prompts = vec![("s1".to_string(), "p".to_string())];
    let outcomes = predict_with_endpoint(&config(url.clone(), 1, 2), &prompts)
        .await
        .unwrap();
    assert_eq!(outcomes[0].result.as_deref(), Ok("ok"));

    // With retries exhausted against an always-failing endpoint, the error
    // is recorded rather than raised.
    let always_fail = Router::new().route(
        "/generate",
        post(|| async { axum::http::StatusCode::INTERNAL_SERVER_ERROR }),
    );
    let url = spawn_server(always_fail).await;
    let outcomes = predict_with_endpoint(&config(url, 1, 1), &prompts)
        .await
        .unwrap();
    let err = outcomes[0].result.as_ref().unwrap_err();
    assert!(err.contains("attempt 2"), "error should record the last attempt: {err}");
}
