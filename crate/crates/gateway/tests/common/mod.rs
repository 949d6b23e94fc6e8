#![allow(dead_code)]

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{HeaderMap, Method, Request, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use tacos_core::classifier::{EncoderRequest, EncoderResponse};
use tacos_core::Taxonomy;
use tacos_gateway::{router, AppState};
use tower::ServiceExt;

/// Router plus a runtime to drive it. The runtime is declared first so it is
/// dropped before the state, which may own blocking HTTP clients.
pub struct Harness {
    pub rt: tokio::runtime::Runtime,
    pub state: Arc<AppState>,
    app: Router,
}

pub struct Reply {
    pub status: StatusCode,
    pub headers: HeaderMap,
    pub bytes: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> serde_json::Value {
        serde_json::from_slice(&self.bytes).unwrap_or_else(|e| panic!("not json ({e}): {}", String::from_utf8_lossy(&self.bytes)))
    }

    pub fn content_type(&self) -> &str {
        self.headers.get("content-type").and_then(|v| v.to_str().ok()).unwrap_or("")
    }
}

impl Harness {
    pub fn new(state: AppState) -> Self {
        let state = Arc::new(state);
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(4)
            .enable_all()
            .build()
            .unwrap();
        Self {
            rt,
            app: router(state.clone()),
            state,
        }
    }

    pub fn send(&self, method: Method, uri: &str, body: Option<serde_json::Value>, headers: &[(&str, &str)]) -> Reply {
        let mut req = Request::builder().method(method).uri(uri);
        for (k, v) in headers {
            req = req.header(*k, *v);
        }
        let req = match body {
            Some(b) => req
                .header("content-type", "application/vnd.tacos.v1+json")
                .body(Body::from(serde_json::to_vec(&b).unwrap())),
            None => req.body(Body::empty()),
        }
        .unwrap();
        let app = self.app.clone();
        self.rt.block_on(async move {
            let resp = app.oneshot(req).await.unwrap();
            let status = resp.status();
            let headers = resp.headers().clone();
            let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec();
            Reply { status, headers, bytes }
        })
    }

    pub fn get(&self, uri: &str) -> Reply {
        self.send(Method::GET, uri, None, &[])
    }

    pub fn post(&self, uri: &str, body: serde_json::Value) -> Reply {
        self.send(Method::POST, uri, Some(body), &[])
    }

    pub fn classify(&self, text: &str) -> Reply {
        self.post("/v1/classify-route", serde_json::json!({ "text": text }))
    }
}

/// Serves `router` on an ephemeral port from a background runtime.
pub fn serve(router: Router) -> String {
    let (tx, rx) = std::sync::mpsc::channel::<SocketAddr>();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, router).await.unwrap();
        });
    });
    format!("http://{}", rx.recv().unwrap())
}

/// Marker the encoder stub looks for: a query containing `[label:ID]` gets a
/// one-hot score on that leaf; anything else gets uniform scores.
pub fn tagged(text: &str, label: &str) -> String {
    format!("{text} [label:{label}]")
}

/// Encoder endpoint speaking the `{text}` -> `{scores, model_version}` schema.
pub fn encoder_stub(taxonomy: &Taxonomy) -> String {
    let ids: Vec<String> = taxonomy.ids().map(String::from).collect();
    serve(Router::new().route(
        "/score",
        post(move |Json(req): Json<EncoderRequest>| {
            let ids = ids.clone();
            async move {
                let n = ids.len();
                let tag = req
                    .text
                    .split("[label:")
                    .nth(1)
                    .and_then(|rest| rest.split(']').next())
                    .and_then(|id| ids.iter().position(|x| x == id));
                let scores = match tag {
                    Some(i) => (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect(),
                    None => vec![1.0 / n as f64; n],
                };
                Json(EncoderResponse {
                    scores,
                    model_version: "stub-1".into(),
                })
            }
        }),
    ))
}
