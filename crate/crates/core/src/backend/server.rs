//! HTTP server side of the prediction protocol, backed by a stub predictor.
//! Used for protocol tests and as a stand-in endpoint.

use std::io;
use std::net::{SocketAddr, TcpListener};
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use tokio::sync::oneshot;

use crate::corpus::{TaskRegistry, TaskSpec};
use crate::perturb::{strip_segment, strip_seq2seq};

use super::protocol::{
    ClassifyRequest, ClassifyResponse, ErrorBody, GenerateRequest, GenerateResponse, HealthResponse, CLASSIFY_PATH,
    GENERATE_PATH, HEALTH_PATH,
};
use super::stub::{order_sensitive_label, symmetric_label, StubKind};

#[derive(Debug, Clone)]
pub struct StubService {
    pub kind: StubKind,
    pub seed: u64,
    pub model: String,
    pub registry: TaskRegistry,
}

type ApiResult<T> = Result<Json<T>, ApiError>;

pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(ErrorBody { error: self.1 })).into_response()
    }
}

fn bad_request(msg: impl Into<String>) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, msg.into())
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| bad_request(format!("malformed request: {e}")))
}

impl StubService {
    fn task(&self, id: &str) -> Result<&TaskSpec, ApiError> {
        self.registry
            .get(id)
            .ok_or_else(|| bad_request(format!("unknown task `{id}`")))
    }

    fn classify(&self, req: ClassifyRequest) -> ApiResult<ClassifyResponse> {
        let task = self.task(&req.task)?;
        let predictions = req
            .inputs
            .iter()
            .map(|i| {
                let label = match self.kind {
                    StubKind::Symmetric => {
                        let a = strip_segment(&i.segment_a, task).map_err(|e| bad_request(e.to_string()))?;
                        let b = strip_segment(&i.segment_b, task).map_err(|e| bad_request(e.to_string()))?;
                        symmetric_label(task, self.seed, a.sentence, b.sentence)
                    }
                    StubKind::OrderSensitive => {
                        order_sensitive_label(task, self.seed, &format!("{} {}", i.segment_a, i.segment_b))
                    }
                };
                Ok(label.to_string())
            })
            .collect::<Result<_, ApiError>>()?;
        Ok(Json(ClassifyResponse { predictions }))
    }

    fn generate(&self, req: GenerateRequest) -> ApiResult<GenerateResponse> {
        let task = self.task(&req.task)?;
        let generations = req
            .inputs
            .iter()
            .map(|i| {
                let label = match self.kind {
                    StubKind::Symmetric => {
                        let (a, b) = strip_seq2seq(&i.text, task).map_err(|e| bad_request(e.to_string()))?;
                        symmetric_label(task, self.seed, &a, &b)
                    }
                    StubKind::OrderSensitive => order_sensitive_label(task, self.seed, &i.text),
                };
                Ok(label.to_string())
            })
            .collect::<Result<_, ApiError>>()?;
        Ok(Json(GenerateResponse { generations }))
    }
}

pub fn router(service: StubService) -> Router {
    let state = Arc::new(service);
    Router::new()
        .route(
            HEALTH_PATH,
            get(|State(s): State<Arc<StubService>>| async move {
                Json(HealthResponse {
                    status: "ok".into(),
                    model: s.model.clone(),
                })
            }),
        )
        .route(
            CLASSIFY_PATH,
            post(|State(s): State<Arc<StubService>>, body: Bytes| async move { s.classify(parse_body(&body)?) }),
        )
        .route(
            GENERATE_PATH,
            post(|State(s): State<Arc<StubService>>, body: Bytes| async move { s.generate(parse_body(&body)?) }),
        )
        .with_state(state)
}

/// A server running on its own thread; shut down on drop.
pub struct RunningServer {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<io::Result<()>>>,
}

impl RunningServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Bind `addr` (port 0 picks a free port) and serve `app` in the background.
pub fn spawn(app: Router, addr: SocketAddr) -> io::Result<RunningServer> {
    let listener = TcpListener::bind(addr)?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()?;
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener)?;
            axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await
        })
    });
    Ok(RunningServer {
        addr,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}

/// Serve `app` on `addr` until the process is killed.
pub fn serve_forever(app: Router, addr: SocketAddr) -> io::Result<()> {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        log::info!("listening on {}", listener.local_addr()?);
        axum::serve(listener, app).await
    })
}
