use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use scenmon_core::road::RoadNetwork;
use scenmon_core::standard_registry;
use scenmon_core::stl::exemplify::{exemplify_with_stop, ExemplifyConfig, ExemplifyOutcome, SignalTemplate};
use scenmon_core::stl::{eval_bool, eval_series, parse, Bindings, EvalContext, EvalError, Formula, ParseError};
use scenmon_core::trace::{read_csv, write_csv, InterpolationMode, Trace};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::session::{AppState, Session, Snapshot, StoredTrace};

type Shared = State<Arc<AppState>>;

pub(crate) struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, error: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: json!({ "error": error, "message": message.into() }),
        }
    }

    fn bad_request(error: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, error, message)
    }

    fn not_found(error: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, error, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<ParseError> for ApiError {
    fn from(e: ParseError) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            body: parse_error_json(&e),
        }
    }
}

impl From<EvalError> for ApiError {
    fn from(e: EvalError) -> Self {
        let kind = match &e {
            EvalError::UnboundName { .. } => "unbound_name",
            EvalError::ArgMismatch { .. } => "arg_mismatch",
            EvalError::UnknownVehicle { .. } => "unknown_vehicle",
            EvalError::UnknownLane { .. } => "unknown_lane",
            EvalError::Trace(_) => "trace_error",
        };
        let mut body = json!({ "error": kind, "message": e.to_string() });
        if let EvalError::UnboundName { name, known, .. } = &e {
            body["name"] = json!(name);
            body["known"] = json!(known);
        }
        Self {
            status: StatusCode::BAD_REQUEST,
            body,
        }
    }
}

fn parse_error_json(e: &ParseError) -> Value {
    let mut v = serde_json::to_value(e).expect("parse errors serialize");
    v["message"] = json!(e.to_string());
    v
}

fn body_json<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Err(ApiError::bad_request("empty_body", "the request body is empty"));
    }
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request("invalid_json", e.to_string()))
}

fn finite(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

/// Formula tree with pre-order node ids, matching the ids of `/evaluate`.
pub fn ast_json(f: &Formula) -> Value {
    fn go(f: &Formula, next: &mut usize) -> Value {
        let id = *next;
        *next += 1;
        let children: Vec<Value> = f.children().into_iter().map(|c| go(c, next)).collect();
        let mut node = json!({
            "id": id,
            "kind": f.kind_name(),
            "label": f.to_string(),
            "children": children,
        });
        if let Some(iv) = f.interval() {
            node["interval"] = json!({ "lo": iv.lo, "hi": finite(iv.hi) });
        }
        if let Formula::Atom(a) = f {
            node["atom"] = serde_json::to_value(a).expect("atoms serialize");
        }
        node
    }
    go(f, &mut 0)
}

/// Column-wise trace: one array per channel and vehicle, `null` where the
/// vehicle is absent.
pub fn trace_json(trace: &Trace) -> Value {
    let d = trace.domain();
    let vehicles: Vec<Value> = trace
        .tracks()
        .iter()
        .map(|t| {
            let ch = |f: fn(&scenmon_core::trace::VehicleState) -> f64| -> Vec<Option<f64>> {
                t.states.iter().map(|s| s.as_ref().map(f)).collect()
            };
            json!({
                "id": t.id,
                "length": t.dims.length,
                "width": t.dims.width,
                "s": ch(|s| s.s),
                "v": ch(|s| s.v),
                "a": ch(|s| s.a),
                "d": ch(|s| s.d),
                "theta": ch(|s| s.theta),
            })
        })
        .collect();
    json!({ "times": trace.times(), "domain": [d.lo, d.hi], "vehicles": vehicles })
}

fn trace_summary(name: &str, st: &StoredTrace) -> Value {
    let d = st.trace.domain();
    json!({
        "name": name,
        "map": st.map,
        "samples": st.trace.times().len(),
        "vehicles": st.trace.vehicle_ids().collect::<Vec<_>>(),
        "domain": [d.lo, d.hi],
        "bindings": st.defaults,
    })
}

pub(crate) async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

pub(crate) async fn atoms() -> Json<Value> {
    Json(json!(standard_registry().signatures()))
}

pub(crate) async fn list_fixtures(State(state): Shared) -> Json<Value> {
    Json(Value::Array(state.fixtures.iter().map(|(n, t)| trace_summary(n, t)).collect()))
}

#[derive(Deserialize)]
pub(crate) struct ParseRequest {
    text: String,
}

pub(crate) async fn parse_formula(body: Bytes) -> (StatusCode, Json<Value>) {
    let fail = |errors: Value| (StatusCode::BAD_REQUEST, Json(json!({ "ast": null, "pretty": null, "errors": errors })));
    let req: ParseRequest = match body_json(&body) {
        Ok(r) => r,
        Err(e) => return fail(json!([e.body])),
    };
    match parse(&req.text) {
        Ok(f) => (
            StatusCode::OK,
            Json(json!({ "ast": ast_json(&f), "pretty": f.to_string(), "errors": [] })),
        ),
        Err(e) => fail(json!([parse_error_json(&e)])),
    }
}

#[derive(Deserialize)]
pub(crate) struct EvaluateRequest {
    #[serde(default)]
    session: Option<String>,
    trace: String,
    formula: String,
    #[serde(default)]
    bindings: Bindings,
    #[serde(default)]
    mode: InterpolationMode,
}

async fn find_trace(state: &AppState, session: Option<&str>, name: &str) -> Result<StoredTrace, ApiError> {
    if let Some(id) = session {
        let sessions = state.sessions.read().await;
        let s = sessions
            .get(id)
            .ok_or_else(|| ApiError::not_found("unknown_session", format!("no session `{id}`")))?;
        if let Some(t) = s.traces.get(name) {
            return Ok(t.clone());
        }
    }
    state
        .fixtures
        .get(name)
        .cloned()
        .ok_or_else(|| ApiError::not_found("unknown_trace", format!("no trace `{name}`")))
}

/// Vehicles bound to themselves, then the trace's defaults, then the request.
fn merged_bindings(st: &StoredTrace, req: &Bindings) -> Bindings {
    let mut b = Bindings::new();
    for id in st.trace.vehicle_ids() {
        b.vehicles.insert(id.to_string(), id.to_string());
    }
    b.vehicles.extend(st.defaults.vehicles.clone());
    b.lanes.extend(st.defaults.lanes.clone());
    b.vehicles.extend(req.vehicles.clone());
    b.lanes.extend(req.lanes.clone());
    b
}

pub(crate) async fn evaluate(State(state): Shared, body: Bytes) -> Result<Json<Value>, ApiError> {
    let req: EvaluateRequest = body_json(&body)?;
    let st = find_trace(&state, req.session.as_deref(), &req.trace).await?;
    let f = parse(&req.formula)?;
    let p = state.cfg.params;
    let ctx = EvalContext::new(&st.trace, &st.road, merged_bindings(&st, &req.bindings))
        .with_rss(p.rss)
        .with_mode(req.mode)
        .with_convention(p.convention);
    let report = eval_series(&f, &ctx)?;
    let root = &report.nodes[0];
    Ok(Json(json!({
        "verdict": root.satisfied[0],
        "robustness": finite(root.robustness[0]),
        "times": report.times,
        "robustness_series": root.robustness,
        "subformula_series": report.nodes,
    })))
}

fn default_template() -> SignalTemplate {
    SignalTemplate::single("SV", 10.0, 0.1)
}

fn default_map() -> String {
    "main".into()
}

#[derive(Deserialize)]
pub(crate) struct ExemplifyRequest {
    formula: String,
    /// When present, the search targets `formula ∧ ¬against`.
    #[serde(default)]
    against: Option<String>,
    #[serde(default = "default_template")]
    template: SignalTemplate,
    #[serde(default)]
    budget: Option<usize>,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_map")]
    map: String,
    #[serde(default)]
    lanes: BTreeMap<String, String>,
    #[serde(default)]
    session: Option<String>,
}

async fn find_map(state: &AppState, session: Option<&str>, name: &str) -> Result<Arc<RoadNetwork>, ApiError> {
    if let Some(id) = session {
        let sessions = state.sessions.read().await;
        let s = sessions
            .get(id)
            .ok_or_else(|| ApiError::not_found("unknown_session", format!("no session `{id}`")))?;
        if let Some(m) = s.maps.get(name) {
            return Ok(m.clone());
        }
    }
    state
        .builtin_maps
        .get(name)
        .cloned()
        .ok_or_else(|| ApiError::bad_request("unknown_map", format!("no map `{name}`")))
}

pub(crate) async fn exemplify(State(state): Shared, body: Bytes) -> Result<Response, ApiError> {
    let req: ExemplifyRequest = body_json(&body)?;
    let mut f = parse(&req.formula)?;
    if let Some(after) = &req.against {
        f = Formula::and(f, Formula::not(parse(after)?));
    }
    let road = find_map(&state, req.session.as_deref(), &req.map).await?;
    let cfg = match req.budget {
        Some(b) => ExemplifyConfig::with_budget(b, req.seed),
        None => ExemplifyConfig {
            seed: req.seed,
            ..ExemplifyConfig::default()
        },
    };
    let rss = state.cfg.params.rss;
    let deadline = Instant::now() + state.cfg.exemplify_timeout;
    let (formula, template, lanes) = (f.clone(), req.template.clone(), req.lanes.clone());
    let road2 = road.clone();
    let outcome = tokio::task::spawn_blocking(move || {
        exemplify_with_stop(&formula, &template, &road2, &lanes, &rss, &cfg, &|| Instant::now() >= deadline)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
    let outcome = outcome.map_err(|e| match e {
        scenmon_core::stl::exemplify::ExemplifyError::Eval(e) => ApiError::from(e),
        other => ApiError::bad_request("invalid_template", other.to_string()),
    })?;
    match outcome {
        ExemplifyOutcome::Found {
            trace,
            robustness,
            evaluations,
        } => {
            // never hand out an unverified trace
            let bindings = Bindings {
                vehicles: trace.vehicle_ids().map(|v| (v.to_string(), v.to_string())).collect(),
                lanes: req.lanes.clone(),
            };
            let ctx = EvalContext::new(&trace, &road, bindings).with_rss(rss);
            if !eval_bool(&f, &ctx, trace.domain().lo)? {
                return Err(ApiError::new(
                    StatusCode::INTERNAL_SERVER_ERROR,
                    "verification_failed",
                    "the search returned a trace that does not satisfy the formula",
                ));
            }
            let mut csv = Vec::new();
            write_csv(&trace, &mut csv).map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
            Ok(Json(json!({
                "trace": trace_json(&trace),
                "csv": String::from_utf8(csv).expect("csv is utf-8"),
                "robustness": finite(robustness),
                "evaluations": evaluations,
                "verified": true,
            }))
            .into_response())
        }
        ExemplifyOutcome::Failure {
            best_trace,
            best_robustness,
            evaluations,
            cancelled,
        } => {
            let (status, failure) = if cancelled {
                (StatusCode::GATEWAY_TIMEOUT, "timed out")
            } else {
                (StatusCode::UNPROCESSABLE_ENTITY, "no example found")
            };
            let body = json!({
                "failure": failure,
                "best_robustness": finite(best_robustness),
                "evaluations": evaluations,
                "best_trace": trace_json(&best_trace),
            });
            Ok((status, Json(body)).into_response())
        }
    }
}

pub(crate) async fn create_session(State(state): Shared) -> (StatusCode, Json<Value>) {
    let id = uuid::Uuid::new_v4().simple().to_string();
    state.sessions.write().await.insert(id.clone(), Session::default());
    (StatusCode::CREATED, Json(json!({ "id": id })))
}

fn no_session(id: &str) -> ApiError {
    ApiError::not_found("unknown_session", format!("no session `{id}`"))
}

pub(crate) async fn get_session(State(state): Shared, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let sessions = state.sessions.read().await;
    let s = sessions.get(&id).ok_or_else(|| no_session(&id))?;
    Ok(Json(json!({
        "id": id,
        "traces": s.traces.iter().map(|(n, t)| trace_summary(n, t)).collect::<Vec<_>>(),
        "maps": s.maps.keys().collect::<Vec<_>>(),
        "snapshots": s.snapshots,
    })))
}

pub(crate) async fn delete_session(State(state): Shared, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    match state.sessions.write().await.remove(&id) {
        Some(_) => Ok(StatusCode::NO_CONTENT),
        None => Err(no_session(&id)),
    }
}

#[derive(Deserialize)]
pub(crate) struct UploadQuery {
    #[serde(default = "default_map")]
    map: String,
    #[serde(default)]
    domain_end: Option<f64>,
}

pub(crate) async fn upload_trace(
    State(state): Shared,
    Path((id, name)): Path<(String, String)>,
    Query(q): Query<UploadQuery>,
    body: Bytes,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let trace = read_csv(&body[..], q.domain_end).map_err(|e| ApiError::bad_request("invalid_trace", e.to_string()))?;
    let mut sessions = state.sessions.write().await;
    let s = sessions.get_mut(&id).ok_or_else(|| no_session(&id))?;
    let road = match s.maps.get(&q.map) {
        Some(m) => m.clone(),
        None => state
            .builtin_maps
            .get(&q.map)
            .cloned()
            .ok_or_else(|| ApiError::bad_request("unknown_map", format!("no map `{}`", q.map)))?,
    };
    let st = StoredTrace {
        trace: Arc::new(trace),
        map: q.map.clone(),
        road,
        defaults: Bindings::new(),
    };
    let summary = trace_summary(&name, &st);
    s.traces.insert(name, st);
    Ok((StatusCode::CREATED, Json(summary)))
}

pub(crate) async fn delete_trace(
    State(state): Shared,
    Path((id, name)): Path<(String, String)>,
) -> Result<StatusCode, ApiError> {
    let mut sessions = state.sessions.write().await;
    let s = sessions.get_mut(&id).ok_or_else(|| no_session(&id))?;
    match s.traces.remove(&name) {
        Some(_) => Ok(StatusCode::NO_CONTENT),
        None => Err(ApiError::not_found("unknown_trace", format!("no trace `{name}`"))),
    }
}

pub(crate) async fn upload_map(
    State(state): Shared,
    Path((id, name)): Path<(String, String)>,
    body: Bytes,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let text = std::str::from_utf8(&body).map_err(|e| ApiError::bad_request("invalid_map", e.to_string()))?;
    let road = RoadNetwork::from_json(text).map_err(|e| ApiError::bad_request("invalid_map", e.to_string()))?;
    let lanes: Vec<String> = road.lanes().iter().map(|l| l.id.clone()).collect();
    let mut sessions = state.sessions.write().await;
    let s = sessions.get_mut(&id).ok_or_else(|| no_session(&id))?;
    s.maps.insert(name.clone(), Arc::new(road));
    Ok((StatusCode::CREATED, Json(json!({ "name": name, "lanes": lanes }))))
}

#[derive(Deserialize)]
pub(crate) struct SnapshotRequest {
    #[serde(default)]
    label: Option<String>,
    formula: String,
}

pub(crate) async fn add_snapshot(
    State(state): Shared,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let req: SnapshotRequest = body_json(&body)?;
    let f = parse(&req.formula)?;
    let mut sessions = state.sessions.write().await;
    let s = sessions.get_mut(&id).ok_or_else(|| no_session(&id))?;
    s.snapshots.push(Snapshot {
        label: req.label,
        formula: f.to_string(),
    });
    Ok((StatusCode::CREATED, Json(json!({ "index": s.snapshots.len() - 1, "formula": f.to_string() }))))
}
