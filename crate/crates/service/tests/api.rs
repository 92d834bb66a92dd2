use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use scenmon_core::scenario::{catalog, ScenarioParams, SpecVariant};
use scenmon_core::synth;
use scenmon_core::trace::write_csv;
use scenmon_service::{bind, router, ServeError, ServiceConfig};
use serde_json::{json, Value};
use tower::ServiceExt;

async fn call(app: &Router, method: &str, uri: &str, body: Body) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body)
        .unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn call_json(app: &Router, method: &str, uri: &str, body: Value) -> (StatusCode, Value) {
    let (s, b) = call(app, method, uri, Body::from(body.to_string())).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

fn app() -> Router {
    router(ServiceConfig::default())
}

fn depth(node: &Value) -> usize {
    1 + node["children"].as_array().unwrap().iter().map(depth).max().unwrap_or(0)
}

#[tokio::test]
async fn health_and_atoms() {
    let app = app();
    let (s, b) = call(&app, "GET", "/health", Body::empty()).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(serde_json::from_slice::<Value>(&b).unwrap()["status"], "ok");
    let (s, b) = call(&app, "GET", "/atoms", Body::empty()).await;
    assert_eq!(s, StatusCode::OK);
    let atoms: Value = serde_json::from_slice(&b).unwrap();
    let text = atoms.to_string();
    for name in ["aheadOf", "dangerAhead", "v_gt"] {
        assert!(text.contains(name), "{name} missing from {text}");
    }
}

#[tokio::test]
async fn parse_returns_a_tree() {
    let app = app();
    let text = &catalog(SpecVariant::Base, &ScenarioParams::default())[0].formula;
    let (s, v) = call_json(&app, "POST", "/parse", json!({ "text": text })).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["errors"], json!([]));
    assert!(depth(&v["ast"]) >= 3);
    assert_eq!(v["ast"]["id"], 0);
    // the pretty form parses to the same tree
    let (_, again) = call_json(&app, "POST", "/parse", json!({ "text": v["pretty"] })).await;
    assert_eq!(again["ast"], v["ast"]);

    let (_, v) = call_json(&app, "POST", "/parse", json!({ "text": "G[2,3](v_gt(SV, 5))" })).await;
    assert_eq!(v["ast"]["kind"], "globally");
    assert_eq!(v["ast"]["interval"], json!({ "lo": 2.0, "hi": 3.0 }));
    assert_eq!(v["ast"]["children"][0]["atom"]["name"], "v_gt");
}

#[tokio::test]
async fn parse_errors_are_400() {
    let app = app();
    let (s, v) = call_json(&app, "POST", "/parse", json!({ "text": "G[3,2] p" })).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["errors"][0]["error"], "malformed_interval");
    assert!(v["ast"].is_null());
    let (s, v) = call_json(&app, "POST", "/parse", json!({ "text": "G[0,1] (" })).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["errors"][0]["error"], "syntax_error");
    let (s, b) = call(&app, "POST", "/parse", Body::empty()).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let v: Value = serde_json::from_slice(&b).unwrap();
    assert_eq!(v["errors"][0]["error"], "empty_body");
    let (s, _) = call(&app, "POST", "/parse", Body::from("{not json")).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn every_catalog_formula_parses() {
    let app = app();
    for variant in SpecVariant::ALL {
        for e in catalog(variant, &ScenarioParams::default()) {
            let (s, v) = call_json(&app, "POST", "/parse", json!({ "text": e.formula })).await;
            assert_eq!(s, StatusCode::OK, "scenario {} {:?}: {v}", e.index, variant);
        }
    }
}

#[tokio::test]
async fn evaluate_a_fixture() {
    let app = app();
    let formula = &catalog(SpecVariant::Base, &ScenarioParams::default())[0].formula;
    let req = json!({ "trace": "scenario-1", "formula": formula });
    let (s, b1) = call(&app, "POST", "/evaluate", Body::from(req.to_string())).await;
    assert_eq!(s, StatusCode::OK, "{}", String::from_utf8_lossy(&b1));
    let v: Value = serde_json::from_slice(&b1).unwrap();
    assert_eq!(v["verdict"], true);
    let n = synth::generate(1, 0).trace.times().len();
    assert_eq!(v["times"].as_array().unwrap().len(), n);
    assert_eq!(v["robustness_series"].as_array().unwrap().len(), n);
    let nodes = v["subformula_series"].as_array().unwrap();
    assert!(nodes.len() > 5);
    for (k, node) in nodes.iter().enumerate() {
        assert_eq!(node["id"], k);
        assert_eq!(node["satisfied"].as_array().unwrap().len(), n);
    }
    let (_, b2) = call(&app, "POST", "/evaluate", Body::from(req.to_string())).await;
    assert_eq!(b1, b2);
}

#[tokio::test]
async fn evaluate_errors() {
    let app = app();
    let (s, v) = call_json(&app, "POST", "/evaluate", json!({ "trace": "nope", "formula": "v_gt(SV, 5)" })).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["error"], "unknown_trace");
    let (s, v) = call_json(&app, "POST", "/evaluate", json!({ "trace": "scenario-1", "formula": "v_gt(EGO, 5)" })).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"], "unbound_name");
    let req = json!({ "trace": "scenario-1", "formula": "v_gt(X, 5)", "bindings": { "vehicles": { "X": "ghost" }, "lanes": {} } });
    let (s, v) = call_json(&app, "POST", "/evaluate", req).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"], "unknown_vehicle");
    let (s, v) = call_json(&app, "POST", "/evaluate", json!({ "trace": "scenario-1", "formula": "fly(SV)" })).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(v["known"].as_array().unwrap().len() > 10);
    let (s, _) = call(&app, "POST", "/evaluate", Body::empty()).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn session_upload_and_evaluate() {
    let app = app();
    let (s, v) = call_json(&app, "POST", "/sessions", json!({})).await;
    assert_eq!(s, StatusCode::CREATED);
    let id = v["id"].as_str().unwrap().to_string();
    assert_eq!(id.len(), 32);

    let case = synth::generate(3, 5);
    let mut csv = Vec::new();
    write_csv(&case.trace, &mut csv).unwrap();
    let (s, b) = call(&app, "PUT", &format!("/sessions/{id}/traces/mine"), Body::from(csv)).await;
    assert_eq!(s, StatusCode::CREATED, "{}", String::from_utf8_lossy(&b));

    let req = json!({ "session": id, "trace": "mine", "formula": "aheadOf(POV, SV)" });
    let (s, v) = call_json(&app, "POST", "/evaluate", req).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["times"].as_array().unwrap().len(), case.trace.times().len());

    let (s, v) = call_json(&app, "POST", &format!("/sessions/{id}/snapshots"), json!({ "formula": "F v_gt(SV, 5)" })).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(v["index"], 0);
    let (_, v) = call_json(&app, "GET", &format!("/sessions/{id}"), Value::Null).await;
    assert_eq!(v["traces"][0]["name"], "mine");
    assert_eq!(v["snapshots"].as_array().unwrap().len(), 1);

    let (s, _) = call(&app, "PUT", &format!("/sessions/{id}/traces/bad"), Body::from("t,id\n1,2\n")).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&app, "DELETE", &format!("/sessions/{id}/traces/mine"), Body::empty()).await;
    assert_eq!(s, StatusCode::NO_CONTENT);
    let (s, _) = call(&app, "DELETE", &format!("/sessions/{id}"), Body::empty()).await;
    assert_eq!(s, StatusCode::NO_CONTENT);
    let (s, _) = call(&app, "GET", &format!("/sessions/{id}"), Body::empty()).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn uploaded_maps_are_usable() {
    let app = app();
    let (_, v) = call_json(&app, "POST", "/sessions", json!({})).await;
    let id = v["id"].as_str().unwrap().to_string();
    let (s, v) = call(&app, "PUT", &format!("/sessions/{id}/maps/road"), Body::from(synth::main_road().to_json())).await;
    assert_eq!(s, StatusCode::CREATED, "{}", String::from_utf8_lossy(&v));
    let mut csv = Vec::new();
    write_csv(&synth::generate(1, 1).trace, &mut csv).unwrap();
    let (s, _) = call(&app, "PUT", &format!("/sessions/{id}/traces/t?map=road"), Body::from(csv.clone())).await;
    assert_eq!(s, StatusCode::CREATED);
    let (s, _) = call(&app, "PUT", &format!("/sessions/{id}/traces/t?map=nowhere"), Body::from(csv)).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&app, "PUT", &format!("/sessions/{id}/maps/bad"), Body::from("{")).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn oversize_uploads_are_rejected() {
    let app = router(ServiceConfig {
        max_body: 1024,
        ..ServiceConfig::default()
    });
    let (_, v) = call_json(&app, "POST", "/sessions", json!({})).await;
    let id = v["id"].as_str().unwrap().to_string();
    let big = vec![b'x'; 4096];
    let (s, _) = call(&app, "PUT", &format!("/sessions/{id}/traces/big"), Body::from(big)).await;
    assert_eq!(s, StatusCode::PAYLOAD_TOO_LARGE);
}

#[tokio::test]
async fn exemplify_finds_and_verifies() {
    let app = app();
    let (s, v) = call_json(&app, "POST", "/exemplify", json!({ "formula": "F(v_gt(SV, 5))", "seed": 7 })).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["verified"], true);
    let speeds = v["trace"]["vehicles"][0]["v"].as_array().unwrap();
    assert!(speeds.iter().any(|x| x.as_f64().unwrap() > 5.0));
    assert!(v["csv"].as_str().unwrap().starts_with("time,id,"));
}

#[tokio::test]
async fn exemplify_a_difference() {
    let app = app();
    let req = json!({ "formula": "G(v_gt(SV, 5))", "against": "G(v_gt(SV, 10))", "seed": 1 });
    let (s, v) = call_json(&app, "POST", "/exemplify", req).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let speeds: Vec<f64> = v["trace"]["vehicles"][0]["v"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert!(speeds.iter().all(|&x| x > 5.0));
    assert!(speeds.iter().any(|&x| x <= 10.0));
}

#[tokio::test]
async fn exemplify_budget_exhaustion_is_422() {
    let app = app();
    let req = json!({ "formula": "v_gt(SV, 5) & !v_gt(SV, 5)", "budget": 200, "seed": 3 });
    let (s, v) = call_json(&app, "POST", "/exemplify", req).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["failure"], "no example found");
    assert!(v["best_robustness"].as_f64().unwrap() <= 0.0);
    assert!(v["evaluations"].as_u64().unwrap() <= 200);
}

#[tokio::test]
async fn exemplify_timeout_is_504() {
    let app = router(ServiceConfig {
        exemplify_timeout: Duration::ZERO,
        ..ServiceConfig::default()
    });
    let req = json!({ "formula": "v_gt(SV, 5) & !v_gt(SV, 5)", "seed": 3 });
    let (s, v) = call_json(&app, "POST", "/exemplify", req).await;
    assert_eq!(s, StatusCode::GATEWAY_TIMEOUT, "{v}");
    assert_eq!(v["failure"], "timed out");
}

#[tokio::test]
async fn exemplify_rejects_unknown_vehicles() {
    let app = app();
    let (s, v) = call_json(&app, "POST", "/exemplify", json!({ "formula": "F(v_gt(EGO, 5))" })).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"], "unbound_name");
}

#[tokio::test]
async fn fixtures_are_listed() {
    let app = app();
    let (s, v) = call_json(&app, "GET", "/fixtures", Value::Null).await;
    assert_eq!(s, StatusCode::OK);
    let names: Vec<&str> = v.as_array().unwrap().iter().map(|f| f["name"].as_str().unwrap()).collect();
    assert_eq!(names.len(), 24);
    assert!(names.contains(&"scenario-7"));
}

#[tokio::test]
async fn second_bind_reports_port_in_use() {
    let first = bind("127.0.0.1:0".parse().unwrap()).await.unwrap();
    let addr = first.local_addr().unwrap();
    match bind(addr).await {
        Err(ServeError::PortInUse(a)) => assert_eq!(a, addr),
        other => panic!("expected PortInUse, got {other:?}"),
    }
}

#[tokio::test]
async fn serves_over_tcp_and_shuts_down() {
    let listener = bind("127.0.0.1:0".parse().unwrap()).await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let server = tokio::spawn(scenmon_service::serve(listener, ServiceConfig::default(), async {
        let _ = rx.await;
    }));
    let mut stream = tokio::net::TcpStream::connect(addr).await.unwrap();
    use tokio::io::{AsyncReadExt, AsyncWriteExt};
    stream
        .write_all(b"GET /health HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n")
        .await
        .unwrap();
    let mut out = String::new();
    stream.read_to_string(&mut out).await.unwrap();
    assert!(out.starts_with("HTTP/1.1 200"), "{out}");
    tx.send(()).unwrap();
    tokio::time::timeout(Duration::from_secs(10), server).await.unwrap().unwrap().unwrap();
}
