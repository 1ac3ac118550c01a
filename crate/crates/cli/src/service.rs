//! HTTP API over a finished bundle, plus the append-only review log.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path as FsPath, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;
use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use budgetqa_core::uq::entropy_map;
use budgetqa_core::volgrid::{read_f32, read_header, read_mask};
use budgetqa_core::{binarize, MaskGrid, ProbGrid};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bundle::{Bundle, CurveRecord, CACHE_ENTROPY, CACHE_PRED, REVIEW_DIR};
use crate::pipeline::aggregate_members;
use crate::render::{render_overlay, Axis, OverlayVolumes, PredStyle, RenderRequest};

/// Error body `{"error": "..."}` with a status code.
#[derive(Debug)]
pub struct ApiError(pub StatusCode, pub String);

impl ApiError {
    fn not_found(msg: impl Into<String>) -> Self {
        ApiError(StatusCode::NOT_FOUND, msg.into())
    }
    fn bad_request(msg: impl Into<String>) -> Self {
        ApiError(StatusCode::BAD_REQUEST, msg.into())
    }
    fn internal(e: anyhow::Error) -> Self {
        ApiError(StatusCode::INTERNAL_SERVER_ERROR, format!("{e:#}"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    BudgetSet,
    SliceViewed,
    RegionMarked,
}

/// One stored line of `review/<case>.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewEvent {
    pub session_id: String,
    pub case_id: String,
    pub method_id: String,
    pub event_kind: EventKind,
    pub timestamp_ms: u64,
    pub payload: Value,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReviewEventIn {
    session_id: String,
    method_id: String,
    event_kind: EventKind,
    /// Client clock; the server clock is used when absent.
    timestamp_ms: Option<u64>,
    #[serde(default)]
    payload: Value,
}

struct CaseVolumes {
    ct: Option<ProbGrid>,
    gt: MaskGrid,
    pred: MaskGrid,
    unc: ProbGrid,
}

const VOLUME_CACHE_ENTRIES: usize = 4;

pub struct AppState {
    bundle: Bundle,
    volumes: Mutex<VecDeque<((String, String), Arc<CaseVolumes>)>>,
    /// Last timestamp per (case, session); appends happen under this lock.
    review: Mutex<HashMap<(String, String), u64>>,
}

impl AppState {
    pub fn new(bundle: Bundle) -> anyhow::Result<Self> {
        let mut last = HashMap::new();
        let dir = bundle.dir.join(REVIEW_DIR);
        if dir.is_dir() {
            let mut files: Vec<PathBuf> = fs::read_dir(&dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
                .collect();
            files.sort();
            for f in files {
                for ev in read_events(&f)? {
                    let slot = last.entry((ev.case_id, ev.session_id)).or_insert(0);
                    *slot = (*slot).max(ev.timestamp_ms);
                }
            }
        }
        Ok(AppState {
            bundle,
            volumes: Mutex::new(VecDeque::new()),
            review: Mutex::new(last),
        })
    }

    fn check_case(&self, id: &str) -> ApiResult<()> {
        match self.bundle.index.case(id) {
            Some(_) => Ok(()),
            None => Err(ApiError::not_found(format!("unknown case {id}"))),
        }
    }

    fn check_method(&self, m: &str) -> ApiResult<()> {
        if self.bundle.index.has_method(m) {
            Ok(())
        } else {
            Err(ApiError::not_found(format!("unknown method {m}")))
        }
    }

    fn volumes(&self, case_id: &str, method_id: &str) -> anyhow::Result<Arc<CaseVolumes>> {
        let key = (case_id.to_string(), method_id.to_string());
        if let Some((_, v)) = self.volumes.lock().unwrap().iter().find(|(k, _)| *k == key) {
            return Ok(v.clone());
        }
        let v = Arc::new(self.load_volumes(case_id, method_id)?);
        let mut cache = self.volumes.lock().unwrap();
        if !cache.iter().any(|(k, _)| *k == key) {
            if cache.len() == VOLUME_CACHE_ENTRIES {
                cache.pop_front();
            }
            cache.push_back((key, v.clone()));
        }
        Ok(v)
    }

    fn load_volumes(&self, case_id: &str, method_id: &str) -> anyhow::Result<CaseVolumes> {
        let idx = &self.bundle.index;
        let case = idx.case(case_id).context("unknown case")?;
        let gt = read_mask(&idx.data_root.join(&case.ground_truth))?;
        let ct = match &case.ct {
            Some(p) => Some(read_f32(&idx.data_root.join(p))?),
            None => None,
        };
        let cached_unc = self.bundle.cache(case_id, method_id, CACHE_ENTROPY);
        let (pred, unc) = if idx.cache_volumes && read_header(&cached_unc).is_ok() {
            (
                read_mask(&self.bundle.cache(case_id, method_id, CACHE_PRED))?,
                read_f32(&cached_unc)?,
            )
        } else {
            let method = idx
                .methods
                .iter()
                .find(|m| m.method_id == method_id)
                .context("unknown method")?;
            let prob = aggregate_members(method, &method.member_paths(&idx.data_root, case_id))?;
            (binarize(&prob, 0.5)?, entropy_map(&prob)?)
        };
        Ok(CaseVolumes { ct, gt, pred, unc })
    }
}

fn read_events(path: &FsPath) -> anyhow::Result<Vec<ReviewEvent>> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .with_context(|| format!("{}: line {}", path.display(), n + 1))?,
        );
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
struct CaseSummary<'a> {
    case_id: &'a str,
    methods: Vec<&'a str>,
    tags: &'a BTreeMap<String, String>,
}

async fn list_cases(State(st): State<Arc<AppState>>) -> Json<Value> {
    let b = &st.bundle;
    let cases: Vec<CaseSummary> = b
        .index
        .cases
        .iter()
        .map(|c| CaseSummary {
            case_id: &c.case_id,
            methods: b
                .records
                .iter()
                .filter(|r| r.case_id == c.case_id)
                .map(|r| r.method_id.as_str())
                .collect(),
            tags: &c.tags,
        })
        .collect();
    Json(json!(cases))
}

async fn case_meta(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    st.check_case(&id)?;
    let idx = &st.bundle.index;
    let case = idx.case(&id).expect("checked");
    let header = read_header(&idx.data_root.join(&case.ground_truth))
        .map_err(|e| ApiError::internal(e.into()))?;
    let points = idx.budget.points().map_err(|e| ApiError::internal(e.into()))?;
    let methods: Vec<&str> = idx.methods.iter().map(|m| m.method_id.as_str()).collect();
    Ok(Json(json!({
        "case_id": id,
        "dims": header.dims,
        "spacing_mm": header.spacing_mm,
        "slices": { "z": header.dims[0], "y": header.dims[1], "x": header.dims[2] },
        "has_ct": case.ct.is_some(),
        "tags": case.tags,
        "methods": methods,
        "budget_grid": { "v1": idx.budget.v1, "v2": idx.budget.v2, "step": idx.budget.step, "points": points },
        "point_budgets": idx.point_budgets,
    })))
}

#[derive(Debug, Deserialize)]
struct MethodQuery {
    method: Option<String>,
}

async fn case_metrics(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<MethodQuery>,
) -> ApiResult<Json<Value>> {
    st.check_case(&id)?;
    let b = &st.bundle;
    let render = |r: &crate::report::MetricsRecord| {
        json!({
            "case_id": r.case_id,
            "method_id": r.method_id,
            "metrics": r.as_map(&b.columns),
            "flags": r.flags,
        })
    };
    match q.method {
        Some(m) => {
            st.check_method(&m)?;
            let r = b
                .record(&id, &m)
                .ok_or_else(|| ApiError::not_found(format!("no metrics for {id} / {m}")))?;
            Ok(Json(render(r)))
        }
        None => Ok(Json(json!(b
            .records
            .iter()
            .filter(|r| r.case_id == id)
            .map(render)
            .collect::<Vec<_>>()))),
    }
}

fn required_method(q: MethodQuery) -> ApiResult<String> {
    q.method
        .ok_or_else(|| ApiError::bad_request("query parameter `method` is required"))
}

async fn budget_curve(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<MethodQuery>,
) -> ApiResult<Json<CurveRecord>> {
    st.check_case(&id)?;
    let m = required_method(q)?;
    st.check_method(&m)?;
    st.bundle
        .curve(&id, &m)
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError::not_found(format!("no curve for {id} / {m}")))
}

#[derive(Debug, Deserialize)]
struct SliceQuery {
    method: Option<String>,
    budget: Option<f64>,
    layers: Option<String>,
    style: Option<PredStyle>,
}

async fn slice_png(
    State(st): State<Arc<AppState>>,
    Path((id, axis, file)): Path<(String, String, String)>,
    Query(q): Query<SliceQuery>,
) -> ApiResult<Response> {
    st.check_case(&id)?;
    let axis: Axis = axis.parse().map_err(|e: anyhow::Error| ApiError::bad_request(e.to_string()))?;
    let index: usize = file
        .strip_suffix(".png")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| ApiError::not_found(format!("expected <index>.png, got {file}")))?;
    let method = q
        .method
        .ok_or_else(|| ApiError::bad_request("query parameter `method` is required"))?;
    st.check_method(&method)?;
    let mut req = RenderRequest::new(axis, index, q.budget.unwrap_or(0.0));
    if let Some(l) = &q.layers {
        req.layers = l.parse().map_err(|e: anyhow::Error| ApiError::bad_request(e.to_string()))?;
    }
    if let Some(s) = q.style {
        req.pred_style = s;
    }
    let grid = st.bundle.index.budget;
    if grid.position(req.budget).is_none() {
        return Err(ApiError::bad_request(format!(
            "budget {}% is not on the grid",
            req.budget
        )));
    }
    let st2 = st.clone();
    let png = tokio::task::spawn_blocking(move || -> ApiResult<Vec<u8>> {
        let v = st2.volumes(&id, &method).map_err(ApiError::internal)?;
        let d = v.gt.dims();
        if index >= axis.extent(d) {
            return Err(ApiError::bad_request(format!(
                "slice {index} out of range for axis {axis} (0..{})",
                axis.extent(d)
            )));
        }
        let vols = OverlayVolumes {
            ct: v.ct.as_ref(),
            gt: Some(&v.gt),
            pred: Some(&v.pred),
            unc: Some(&v.unc),
        };
        let ov = render_overlay(vols, &req, &grid).map_err(|e| ApiError::bad_request(format!("{e:#}")))?;
        ov.png().map_err(ApiError::internal)
    })
    .await
    .map_err(|e| ApiError::internal(e.into()))??;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

fn valid_session(s: &str) -> bool {
    !s.is_empty()
        && s.len() <= 128
        && s.chars().all(|c| c.is_ascii_alphanumeric() || "-_.:".contains(c))
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

async fn post_review(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<ReviewEvent>)> {
    st.check_case(&id)?;
    let ev: ReviewEventIn = serde_json::from_slice(&body)
        .map_err(|e| ApiError::bad_request(format!("invalid review event: {e}")))?;
    if !valid_session(&ev.session_id) {
        return Err(ApiError::bad_request("session_id must be 1-128 characters of [A-Za-z0-9-_.:]"));
    }
    st.check_method(&ev.method_id)?;
    if ev.event_kind == EventKind::BudgetSet {
        let b = ev
            .payload
            .get("budget")
            .and_then(Value::as_f64)
            .ok_or_else(|| ApiError::bad_request("budget_set payload needs a numeric `budget`"))?;
        if st.bundle.index.budget.position(b).is_none() {
            return Err(ApiError::bad_request(format!("budget {b}% is not on the grid")));
        }
    }
    let key = (id.clone(), ev.session_id.clone());
    let mut last = st.review.lock().unwrap();
    let prev = last.get(&key).copied();
    let ts = match (ev.timestamp_ms, prev) {
        (Some(t), Some(p)) if t <= p => {
            return Err(ApiError(
                StatusCode::CONFLICT,
                format!("timestamp {t} is not after the session's last event at {p}"),
            ))
        }
        (Some(t), _) => t,
        (None, Some(p)) => now_ms().max(p + 1),
        (None, None) => now_ms(),
    };
    let stored = ReviewEvent {
        session_id: ev.session_id,
        case_id: id.clone(),
        method_id: ev.method_id,
        event_kind: ev.event_kind,
        timestamp_ms: ts,
        payload: ev.payload,
    };
    let dir = st.bundle.dir.join(REVIEW_DIR);
    let append = || -> anyhow::Result<()> {
        fs::create_dir_all(&dir)?;
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(dir.join(format!("{id}.jsonl")))?;
        let mut line = serde_json::to_string(&stored)?;
        line.push('\n');
        f.write_all(line.as_bytes())?;
        f.sync_data()?;
        Ok(())
    };
    append().map_err(ApiError::internal)?;
    last.insert(key, ts);
    drop(last);
    Ok((StatusCode::CREATED, Json(stored)))
}

#[derive(Debug, Deserialize)]
struct SessionQuery {
    session: Option<String>,
}

async fn get_review(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<SessionQuery>,
) -> ApiResult<Json<Vec<ReviewEvent>>> {
    st.check_case(&id)?;
    let path = st.bundle.dir.join(REVIEW_DIR).join(format!("{id}.jsonl"));
    // hold the append lock so a half-written line is never read
    let _guard = st.review.lock().unwrap();
    let events = if path.is_file() {
        read_events(&path).map_err(ApiError::internal)?
    } else {
        Vec::new()
    };
    Ok(Json(
        events
            .into_iter()
            .filter(|e| q.session.as_ref().is_none_or(|s| *s == e.session_id))
            .collect(),
    ))
}

async fn not_found() -> ApiError {
    ApiError::not_found("no such endpoint")
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/cases", get(list_cases))
        .route("/api/cases/{id}/meta", get(case_meta))
        .route("/api/cases/{id}/metrics", get(case_metrics))
        .route("/api/cases/{id}/budget-curve", get(budget_curve))
        .route("/api/cases/{id}/slice/{axis}/{file}", get(slice_png))
        .route("/api/review/{id}/log", get(get_review).post(post_review))
        .fallback(not_found)
        .with_state(state)
}

pub fn app(bundle_dir: &FsPath) -> anyhow::Result<Router> {
    let bundle = Bundle::open(bundle_dir)?;
    Ok(router(Arc::new(AppState::new(bundle)?)))
}

/// Serves a bundle until the process is stopped.
pub async fn serve(bundle_dir: &FsPath, host: &str, port: u16) -> anyhow::Result<()> {
    let app = app(bundle_dir)?;
    let listener = tokio::net::TcpListener::bind((host, port))
        .await
        .with_context(|| format!("binding {host}:{port}"))?;
    eprintln!("serving {} on http://{}", bundle_dir.display(), listener.local_addr()?);
    axum::serve(listener, app).await?;
    Ok(())
}
