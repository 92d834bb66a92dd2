//! HTTP API for parsing, evaluating and exemplifying STL formulas over
//! uploaded or built-in traces.
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/health` | liveness |
//! | GET | `/atoms` | registered atom signatures |
//! | GET | `/fixtures` | built-in traces |
//! | POST | `/parse` | `{text}` to `{ast, pretty, errors}` |
//! | POST | `/evaluate` | verdict and per-node series |
//! | POST | `/exemplify` | search for a satisfying trace |
//! | POST | `/sessions` | new session |
//! | GET, DELETE | `/sessions/{id}` | |
//! | PUT, DELETE | `/sessions/{id}/traces/{name}` | CSV upload (`?map=`) |
//! | PUT | `/sessions/{id}/maps/{name}` | lanelet JSON upload |
//! | POST | `/sessions/{id}/snapshots` | store a formula for comparison |

use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::DefaultBodyLimit;
use axum::routing::{get, post, put};
use axum::Router;
use scenmon_core::pipeline::PipelineParams;
use thiserror::Error;
use tokio::net::TcpListener;

mod api;
mod session;

pub use api::{ast_json, trace_json};
pub use session::{fixtures, StoredTrace};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Largest accepted request body in bytes.
    pub max_body: usize,
    pub exemplify_timeout: Duration,
    pub params: PipelineParams,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            max_body: 10 * 1024 * 1024,
            exemplify_timeout: Duration::from_secs(30),
            params: PipelineParams::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("port in use: {0}")]
    PortInUse(SocketAddr),
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn router(cfg: ServiceConfig) -> Router {
    let max_body = cfg.max_body;
    let state = Arc::new(session::AppState::new(cfg));
    Router::new()
        .route("/health", get(api::health))
        .route("/atoms", get(api::atoms))
        .route("/fixtures", get(api::list_fixtures))
        .route("/parse", post(api::parse_formula))
        .route("/evaluate", post(api::evaluate))
        .route("/exemplify", post(api::exemplify))
        .route("/sessions", post(api::create_session))
        .route("/sessions/{id}", get(api::get_session).delete(api::delete_session))
        .route("/sessions/{id}/traces/{name}", put(api::upload_trace).delete(api::delete_trace))
        .route("/sessions/{id}/maps/{name}", put(api::upload_map))
        .route("/sessions/{id}/snapshots", post(api::add_snapshot))
        .layer(DefaultBodyLimit::max(max_body))
        .with_state(state)
}

pub async fn bind(addr: SocketAddr) -> Result<TcpListener, ServeError> {
    TcpListener::bind(addr).await.map_err(|source| {
        if source.kind() == std::io::ErrorKind::AddrInUse {
            ServeError::PortInUse(addr)
        } else {
            ServeError::Bind { addr, source }
        }
    })
}

/// Serves until `shutdown` resolves, then lets in-flight requests finish.
pub async fn serve(listener: TcpListener, cfg: ServiceConfig, shutdown: impl Future<Output = ()> + Send + 'static) -> Result<(), ServeError> {
    axum::serve(listener, router(cfg)).with_graceful_shutdown(shutdown).await?;
    Ok(())
}
