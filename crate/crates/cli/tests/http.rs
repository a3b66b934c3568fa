use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use hmix_cli::api::{Content, NextResponse, SessionCreated};
use hmix_cli::server::{router, AppState};
use hmix_core::elicit::{build_pool, SessionManager, SELECTION_TRIALS};
use hmix_core::hmix::{read_records, InterfaceKind, Record};
use hmix_core::ImageTensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tower::ServiceExt;

fn pool(n: usize) -> hmix_core::elicit::StimulusPool {
    let images: Vec<(String, usize, ImageTensor)> = (0..40)
        .map(|i| {
            let v = i as f64 / 39.0;
            let px = vec![v, 1.0 - v, v * 0.5, 0.25, v, 0.75, 1.0 - v, 0.5, v, 0.1, 0.9, v];
            (format!("img-{i}"), i % 4, ImageTensor::new(2, 2, 3, px).unwrap())
        })
        .collect();
    let names = ["cat", "dog", "ship", "frog"].map(String::from).to_vec();
    build_pool(&images, names, n, &mut ChaCha8Rng::seed_from_u64(3)).unwrap()
}

fn app() -> Router {
    router(AppState::new(SessionManager::new(pool(80), 11).unwrap()), None)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn json_call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (s, b) = call(app, method, uri, body).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

async fn create(app: &Router, participant: &str, kind: &str) -> SessionCreated {
    let (s, v) = json_call(
        app,
        "POST",
        "/api/v1/sessions",
        Some(json!({"api_version": 1, "participant_id": participant, "interface_kind": kind})),
    )
    .await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    serde_json::from_value(v).unwrap()
}

async fn next(app: &Router, id: &str) -> NextResponse {
    let (s, v) = json_call(app, "GET", &format!("/api/v1/sessions/{id}/next"), None).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    serde_json::from_value(v).unwrap()
}

async fn submit(app: &Router, id: &str, trial: u32, response: Value) -> (StatusCode, Value) {
    json_call(
        app,
        "POST",
        &format!("/api/v1/sessions/{id}/responses"),
        Some(json!({"api_version": 1, "trial_index": trial, "response": response, "response_ms": 900})),
    )
    .await
}

fn answer(content: &Content, trial: u32) -> Value {
    match content {
        Content::Construct { images, .. } => json!({"type": "selection", "index": (trial as usize) % images.len()}),
        Content::SelectShuffled { options } => json!({"type": "selection", "index": options[0].index}),
        Content::InferCoefficient { .. } => {
            json!({"type": "sliders", "mix_left": (trial % 10) as f64 / 10.0, "confidence": 0.7})
        }
        Content::SoftLabel { .. } => {
            json!({"type": "soft-label", "top1": {"class": 0, "prob": 70.0}, "top2": {"class": 1, "prob": 30.0}, "ruled_out": [3]})
        }
    }
}

/// Answers every trial and returns the exported records.
async fn run_session(app: &Router, id: &str) -> Vec<Record> {
    while let NextResponse::Trial {
        trial_index, content, ..
    } = next(app, id).await
    {
        let (s, v) = submit(app, id, trial_index, answer(&content, trial_index)).await;
        assert_eq!(s, StatusCode::OK, "{v}");
    }
    let (s, v) = json_call(app, "GET", &format!("/api/v1/sessions/{id}/export"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["open"], json!(false));
    serde_json::from_value(v["records"].clone()).unwrap()
}

fn responses(records: &[Record]) -> usize {
    records.iter().filter(|r| !matches!(r, Record::Pair(_))).count()
}

#[tokio::test]
async fn health_and_placeholder() {
    let app = app();
    let (s, v) = json_call(&app, "GET", "/api/v1/health", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["api_version"], 1);
    assert_eq!(v["pairs"], 80);
    let (s, body) = call(&app, "GET", "/", None).await;
    assert_eq!(s, StatusCode::OK);
    assert!(String::from_utf8(body).unwrap().contains("/api/v1"));
}

#[tokio::test]
async fn selection_sessions_export_32_records() {
    let app = app();
    for kind in ["construct", "select-shuffled"] {
        let c = create(&app, "p1", kind).await;
        assert_eq!(c.total_trials, SELECTION_TRIALS);
        let records = run_session(&app, &c.session_id).await;
        assert_eq!(responses(&records), 32);
        let repeats = records
            .iter()
            .filter(|r| matches!(r, Record::Judgment(j) if j.repeat_of.is_some()))
            .count();
        assert_eq!(repeats, 2);
    }
}

#[tokio::test]
async fn construct_sessions_alternate_start() {
    let app = app();
    let a = create(&app, "p1", "construct").await;
    let b = create(&app, "p2", "construct").await;
    assert_eq!(a.start_lambda, Some(0.9));
    assert_eq!(b.start_lambda, Some(0.1));
    let NextResponse::Trial { content, .. } = next(&app, &a.session_id).await else { panic!() };
    let Content::Construct { images, start_index } = content else { panic!() };
    assert_eq!(images.len(), 11);
    assert_eq!(start_index, 9);
    assert_eq!(images[0].rendering, "pixelated");
    assert_eq!(&images[0].png_bytes().unwrap()[1..4], b"PNG");
}

#[tokio::test]
async fn infer_session_repeats_trials_15_and_20() {
    let app = app();
    let c = create(&app, "p1", "infer-coefficient").await;
    assert!((59..=62).contains(&c.total_trials));
    let records = run_session(&app, &c.session_id).await;
    assert_eq!(responses(&records), c.total_trials);
    let js: Vec<_> = records
        .iter()
        .filter_map(|r| match r {
            Record::Judgment(j) => Some(j),
            _ => None,
        })
        .collect();
    assert!(js.iter().all(|j| j.interface == InterfaceKind::InferCoefficient && j.confidence == Some(0.7)));
    let repeats: Vec<_> = js.iter().filter(|j| j.repeat_of.is_some()).collect();
    assert_eq!(repeats.len(), 2);
    for r in repeats {
        let src = r.repeat_of.unwrap();
        assert!(src == 14 || src == 19, "repeat of trial {src}");
        let original = js.iter().find(|j| j.trial_index == src).unwrap();
        assert_eq!(original.stimulus.pair_id, r.stimulus.pair_id);
        assert_eq!(original.stimulus.lambda_f, r.stimulus.lambda_f);
    }
}

#[tokio::test]
async fn soft_label_session_records_reports() {
    let app = app();
    let c = create(&app, "p1", "soft-label").await;
    let records = run_session(&app, &c.session_id).await;
    let soft: Vec<_> = records
        .iter()
        .filter_map(|r| match r {
            Record::SoftLabel(s) => Some(s),
            _ => None,
        })
        .collect();
    assert_eq!(soft.len(), c.total_trials);
    assert!(soft.iter().all(|s| s.top1.class == 0 && s.ruled_out.iter().eq([&3])));
}

#[tokio::test]
async fn select_shuffle_is_stable_on_reload() {
    let app = app();
    let c = create(&app, "p1", "select-shuffled").await;
    let order = |n: NextResponse| match n {
        NextResponse::Trial {
            content: Content::SelectShuffled { options },
            ..
        } => options.iter().map(|o| o.index).collect::<Vec<_>>(),
        _ => panic!(),
    };
    let first = order(next(&app, &c.session_id).await);
    let again = order(next(&app, &c.session_id).await);
    assert_eq!(first, again);
    let mut sorted = first.clone();
    sorted.sort();
    assert_eq!(sorted, (0..11).collect::<Vec<_>>());
    assert_ne!(first, sorted);
}

#[tokio::test]
async fn error_statuses() {
    let app = app();
    let (s, v) = json_call(&app, "GET", "/api/v1/sessions/s999999/next", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["error"]["code"], "not-found");

    let (s, v) = json_call(
        &app,
        "POST",
        "/api/v1/sessions",
        Some(json!({"api_version": 2, "participant_id": "p", "interface_kind": "construct"})),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"]["code"], "unsupported-api-version");

    let c = create(&app, "p", "infer-coefficient").await;
    let id = &c.session_id;
    let ok = json!({"type": "sliders", "mix_left": 0.3, "confidence": 0.8});
    let (s, v) = submit(&app, id, 0, ok.clone()).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["stored"], true);
    let (s, v) = submit(&app, id, 0, ok).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["stored"], false);
    let (s, _) = submit(&app, id, 0, json!({"type": "sliders", "mix_left": 0.4, "confidence": 0.8})).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (s, v) = submit(&app, id, 5, json!({"type": "sliders", "mix_left": 0.4, "confidence": 0.8})).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["error"]["code"], "out-of-order");
    let (s, _) = submit(&app, id, 1, json!({"type": "sliders", "mix_left": 1.4, "confidence": 0.8})).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, _) = submit(&app, id, 1, json!({"type": "selection", "index": 3})).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn hmix_export_round_trips() {
    let app = app();
    let c = create(&app, "p1", "infer-coefficient").await;
    let records = run_session(&app, &c.session_id).await;
    let (s, body) = call(&app, "GET", &format!("/api/v1/sessions/{}/export?format=hmix", c.session_id), None).await;
    assert_eq!(s, StatusCode::OK);
    assert!(body.starts_with(b"hmix-v1\n"));
    let parsed: Vec<Record> = read_records(&body[..]).unwrap().into_iter().map(|(_, r)| r).collect();
    assert_eq!(parsed, records);
}
