//! HTTP delivery of a compiled story bundle.
//!
//! All content is loaded and validated before the listener accepts a
//! connection and is immutable afterwards, so handlers only clone shared
//! bytes. Routes:
//!
//! | path | body |
//! |---|---|
//! | `GET /bundle.json` | the bundle file, byte for byte |
//! | `GET /parity.json` | loss parity fixtures for the UI |
//! | `GET /api/stats` | study report for the embedded scores |
//! | `GET /api/validate` | violations of the served bundle (always empty) |
//! | `GET /api/loss?anchor=..&positive=..&negative=..&margin=..` | triplet loss |
//! | anything else | the UI directory, when configured, else 404 |
//!
//! Only GET and HEAD are accepted; other methods get 405.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{header, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::Serialize;
use snnstory_core::bundle::{parity_fixtures, validate_bundle, Violation};
use snnstory_core::losses::{euclidean_distance, triplet_loss_value, Margin};
use snnstory_core::stats::{embedded_study_data, study_report};
use tokio::net::TcpListener;
use tower_http::services::ServeDir;

/// Seed of the parity fixtures served at `/parity.json`.
pub const PARITY_SEED: u64 = 2024;

#[derive(Debug, thiserror::Error)]
pub enum ServerError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} is not JSON: {source}")]
    NotJson {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path} has {} validation errors, first at {}: {}", .violations.len(), .violations[0].path, .violations[0].message)]
    InvalidBundle {
        path: PathBuf,
        violations: Vec<Violation>,
    },
    #[error("ui directory {0} does not exist")]
    MissingUiDir(PathBuf),
    #[error(transparent)]
    Core(#[from] snnstory_core::Error),
}

/// Immutable payloads shared by every request.
#[derive(Debug, Clone)]
pub struct Content {
    bundle: Bytes,
    parity: Bytes,
    stats: Bytes,
}

impl Content {
    /// Reads and validates the bundle; refuses anything with violations.
    pub fn load(bundle_path: &Path) -> Result<Self, ServerError> {
        let bytes = std::fs::read(bundle_path).map_err(|source| ServerError::Io {
            path: bundle_path.to_owned(),
            source,
        })?;
        Content::from_bytes(bundle_path, bytes)
    }

    pub fn from_bytes(label: &Path, bytes: Vec<u8>) -> Result<Self, ServerError> {
        let doc: serde_json::Value =
            serde_json::from_slice(&bytes).map_err(|source| ServerError::NotJson {
                path: label.to_owned(),
                source,
            })?;
        let violations = validate_bundle(&doc);
        if !violations.is_empty() {
            return Err(ServerError::InvalidBundle {
                path: label.to_owned(),
                violations,
            });
        }
        Ok(Content {
            bundle: Bytes::from(bytes),
            parity: pretty(&parity_fixtures(PARITY_SEED)),
            stats: pretty(&study_report(&embedded_study_data())?),
        })
    }
}

fn pretty<T: Serialize>(v: &T) -> Bytes {
    Bytes::from(serde_json::to_vec_pretty(v).expect("in-memory values serialize"))
}

fn json_bytes(body: Bytes) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], body).into_response()
}

async fn bundle(State(c): State<Arc<Content>>) -> Response {
    json_bytes(c.bundle.clone())
}

async fn parity(State(c): State<Arc<Content>>) -> Response {
    json_bytes(c.parity.clone())
}

async fn stats(State(c): State<Arc<Content>>) -> Response {
    json_bytes(c.stats.clone())
}

async fn validation() -> Json<Vec<Violation>> {
    // content was validated at startup
    Json(Vec::new())
}

#[derive(Debug, Serialize)]
struct LossReply {
    loss: f64,
    d_ap: f64,
    d_an: f64,
}

#[derive(Debug, Serialize)]
struct ErrorReply {
    error: String,
}

fn bad_request(msg: impl Into<String>) -> Response {
    (
        StatusCode::BAD_REQUEST,
        Json(ErrorReply { error: msg.into() }),
    )
        .into_response()
}

fn vector(params: &HashMap<String, String>, key: &str) -> Result<Vec<f64>, String> {
    let raw = params
        .get(key)
        .ok_or_else(|| format!("missing parameter {key}"))?;
    raw.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| format!("{key}: {e}")))
        .collect()
}

async fn loss(Query(params): Query<HashMap<String, String>>) -> Response {
    let parsed = (|| {
        let a = vector(&params, "anchor")?;
        let p = vector(&params, "positive")?;
        let n = vector(&params, "negative")?;
        let m = match params.get("margin") {
            None => Margin::DEFAULT,
            Some(s) => {
                let v: f64 = s.parse().map_err(|e| format!("margin: {e}"))?;
                Margin::new(v).map_err(|e| e.to_string())?
            }
        };
        let reply = LossReply {
            loss: triplet_loss_value(&a, &p, &n, m).map_err(|e| e.to_string())?,
            d_ap: euclidean_distance(&a, &p).map_err(|e| e.to_string())?,
            d_an: euclidean_distance(&a, &n).map_err(|e| e.to_string())?,
        };
        Ok::<_, String>(reply)
    })();
    match parsed {
        Ok(r) => Json(r).into_response(),
        Err(e) => bad_request(e),
    }
}

async fn fallback(method: Method) -> StatusCode {
    if method == Method::GET || method == Method::HEAD {
        StatusCode::NOT_FOUND
    } else {
        StatusCode::METHOD_NOT_ALLOWED
    }
}

pub fn router(content: Content, ui_dir: Option<&Path>) -> Result<Router, ServerError> {
    let app = Router::new()
        .route("/bundle.json", get(bundle))
        .route("/parity.json", get(parity))
        .route("/api/stats", get(stats))
        .route("/api/validate", get(validation))
        .route("/api/loss", get(loss))
        .with_state(Arc::new(content));
    Ok(match ui_dir {
        Some(dir) => {
            if !dir.is_dir() {
                return Err(ServerError::MissingUiDir(dir.to_owned()));
            }
            app.fallback_service(ServeDir::new(dir))
        }
        None => app.fallback(fallback),
    })
}

/// A bound listener plus its application, ready to run.
pub struct Server {
    listener: TcpListener,
    app: Router,
}

impl Server {
    pub async fn bind(addr: SocketAddr, app: Router) -> Result<Self, ServerError> {
        let listener = TcpListener::bind(addr)
            .await
            .map_err(|source| ServerError::Io {
                path: PathBuf::from(addr.to_string()),
                source,
            })?;
        Ok(Server { listener, app })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.listener
            .local_addr()
            .expect("bound listener has an address")
    }

    pub async fn run(self) -> std::io::Result<()> {
        tracing::info!(addr = %self.local_addr(), "serving");
        axum::serve(self.listener, self.app).await
    }
}
