//! A scripted model server. The first path segment selects the behaviour,
//! so one server can serve every scenario: a backend pointed at
//! `{url}/ok` sees a well-behaved server, `{url}/unavailable` one that
//! always answers 503, and so on.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::Router;
use serde_json::{json, Value};

pub const DIM: usize = 8;
pub const SLOW_MS: u64 = 600;

#[derive(Default)]
struct Log {
    hits: HashMap<String, usize>,
    bodies: HashMap<String, Value>,
}

type Shared = Arc<Mutex<Log>>;

pub struct FakeServer {
    pub addr: SocketAddr,
    log: Shared,
    _runtime: tokio::runtime::Runtime,
}

impl FakeServer {
    pub fn start() -> Self {
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .unwrap();
        let log: Shared = Arc::default();
        let app = Router::new()
            .route("/{scenario}/v1/{*endpoint}", post(handle))
            .with_state(log.clone());
        let listener = runtime
            .block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))
            .unwrap();
        let addr = listener.local_addr().unwrap();
        runtime.spawn(async move { axum::serve(listener, app).await.unwrap() });
        Self {
            addr,
            log,
            _runtime: runtime,
        }
    }

    pub fn endpoint(&self, scenario: &str) -> String {
        format!("http://{}/{scenario}", self.addr)
    }

    /// Requests received for `scenario` on `endpoint` (e.g. `"encode/text"`).
    pub fn hits(&self, scenario: &str, endpoint: &str) -> usize {
        let log = self.log.lock().unwrap();
        log.hits.get(&format!("{scenario}/{endpoint}")).copied().unwrap_or(0)
    }

    pub fn last_body(&self, scenario: &str, endpoint: &str) -> Option<Value> {
        let log = self.log.lock().unwrap();
        log.bodies.get(&format!("{scenario}/{endpoint}")).cloned()
    }
}

pub fn recorded_embedding(dim: usize) -> Vec<f32> {
    (0..dim).map(|i| (i as f32 + 1.0) / dim as f32).collect()
}

fn ok(endpoint: &str) -> Value {
    match endpoint {
        "encode/text" | "encode/image" => json!({ "embedding": recorded_embedding(DIM) }),
        "complete" => json!({ "text": "a red car on a beach" }),
        "generate" => json!({ "image_b64": "iVBORw0=", "media_type": "image/png" }),
        _ => json!({}),
    }
}

fn json_response(status: StatusCode, body: Value) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body.to_string()).into_response()
}

async fn handle(
    State(log): State<Shared>,
    Path((scenario, endpoint)): Path<(String, String)>,
    body: Bytes,
) -> Response {
    let attempt = {
        let mut log = log.lock().unwrap();
        let key = format!("{scenario}/{endpoint}");
        if let Ok(v) = serde_json::from_slice(&body) {
            log.bodies.insert(key.clone(), v);
        }
        let n = log.hits.entry(key).or_insert(0);
        *n += 1;
        *n
    };
    match scenario.as_str() {
        "ok" => json_response(StatusCode::OK, ok(&endpoint)),
        "uri" => json_response(StatusCode::OK, json!({ "uri": "https://images.example/x.png" })),
        "slow" => {
            tokio::time::sleep(Duration::from_millis(SLOW_MS)).await;
            json_response(StatusCode::OK, ok(&endpoint))
        }
        "unavailable" => json_response(StatusCode::SERVICE_UNAVAILABLE, json!({ "error": "busy" })),
        // 503 twice, then healthy
        "flaky" if attempt <= 2 => json_response(StatusCode::SERVICE_UNAVAILABLE, json!({})),
        "flaky" => json_response(StatusCode::OK, ok(&endpoint)),
        "notfound" => json_response(StatusCode::NOT_FOUND, json!({})),
        "wrongdim" => json_response(StatusCode::OK, json!({ "embedding": recorded_embedding(DIM - 3) })),
        "garbage" => (StatusCode::OK, "<html>definitely not json").into_response(),
        "schema" => json_response(StatusCode::OK, json!({ "unexpected": true })),
        "nonfinite" => json_response(StatusCode::OK, json!({ "embedding": [1.0, null, 0.5] })),
        "empty" => json_response(StatusCode::OK, json!({ "text": "   " })),
        "both" => json_response(
            StatusCode::OK,
            json!({ "image_b64": "AAAA", "media_type": "image/png", "uri": "https://x/y.png" }),
        ),
        "badb64" => json_response(StatusCode::OK, json!({ "image_b64": "@@@", "media_type": "image/png" })),
        _ => json_response(StatusCode::NOT_FOUND, json!({})),
    }
}

use dar::backends::http::HttpBackend;
use dar::backends::{
    BackendConfig, BackendRole, Completer, GenerationRequest, ImageEncoder, ImageGenerator,
    ImageRef, TextEncoder,
};
use dar::BackendError;

pub fn backend(server: &FakeServer, scenario: &str, role: BackendRole, timeout_ms: u64, retries: u32) -> HttpBackend {
    let cfg = BackendConfig {
        endpoint: server.endpoint(scenario),
        timeout_ms,
        retries,
    };
    HttpBackend::new(cfg, role, Some(DIM)).unwrap()
}

fn expect<T: std::fmt::Debug>(
    name: &str,
    got: Result<T, BackendError>,
    pred: impl FnOnce(&Result<T, BackendError>) -> bool,
) -> Result<(), String> {
    if pred(&got) {
        Ok(())
    } else {
        Err(format!("{name}: unexpected {got:?}"))
    }
}

fn malformed<T>(r: &Result<T, BackendError>) -> bool {
    matches!(r, Err(BackendError::MalformedResponse(_)))
}

/// Every endpoint on the happy path and every mapped failure. Returns the
/// number of checks run or the first mismatch.
pub fn conformance(server: &FakeServer) -> Result<usize, String> {
    use BackendRole::*;
    let mut checks = 0;
    let mut check = |r: Result<(), String>| {
        checks += 1;
        r
    };
    let image = ImageRef::inline(vec![1, 2, 3], "image/png");
    let request = GenerationRequest::new("a red car", 42, 64, 32).unwrap();

    // happy paths on all four endpoints
    let text = backend(server, "ok", TextEncoder, 2000, 0);
    check(expect("encode/text", text.encode_text("red car"), |r| {
        r.as_ref().is_ok_and(|e| e.as_slice() == recorded_embedding(DIM).as_slice())
    }))?;
    let img = backend(server, "ok", ImageEncoder, 2000, 0);
    check(expect("encode/image", img.encode_image(&image), |r| r.is_ok()))?;
    let body = server.last_body("ok", "encode/image").unwrap_or_default();
    check(if body == json!({ "image_b64": "AQID", "media_type": "image/png" }) {
        Ok(())
    } else {
        Err(format!("encode/image body {body}"))
    })?;
    let llm = backend(server, "ok", Llm, 2000, 0);
    check(expect("complete", llm.complete("summarize", 0.0, 64), |r| {
        r.as_deref() == Ok("a red car on a beach")
    }))?;
    let gen = backend(server, "ok", Generator, 2000, 0);
    check(expect("generate", gen.generate(&request), |r| {
        r.as_ref().is_ok_and(|i| {
            i.provenance.as_ref().is_some_and(|p| p.prompt == "a red car" && p.seed == 42)
        })
    }))?;
    let body = server.last_body("ok", "generate").unwrap_or_default();
    check(if body == json!({ "prompt": "a red car", "seed": 42, "width": 64, "height": 32 }) {
        Ok(())
    } else {
        Err(format!("generate body {body}"))
    })?;
    let gen_uri = backend(server, "uri", Generator, 2000, 0);
    check(expect("generate uri", gen_uri.generate(&request), |r| {
        r.as_ref()
            .is_ok_and(|i| *i == ImageRef::uri("https://images.example/x.png").with_provenance(i.provenance.clone().unwrap()))
    }))?;

    // timeout
    let slow = backend(server, "slow", TextEncoder, 100, 0);
    check(expect("timeout", slow.encode_text("x"), |r| {
        matches!(r, Err(BackendError::Timeout { .. }))
    }))?;

    // 503 with retries: 1 + retries attempts, then BadStatus
    let busy = backend(server, "unavailable", Llm, 2000, 2);
    check(expect("503", busy.complete("p", 0.0, 8), |r| {
        matches!(r, Err(BackendError::BadStatus { status: 503 }))
    }))?;
    let n = server.hits("unavailable", "complete");
    check(if n == 3 { Ok(()) } else { Err(format!("503 attempts: {n}")) })?;
    let flaky = backend(server, "flaky", Generator, 2000, 2);
    check(expect("503 then ok", flaky.generate(&request), |r| r.is_ok()))?;
    let notfound = backend(server, "notfound", ImageEncoder, 2000, 3);
    check(expect("404", notfound.encode_image(&image), |r| {
        matches!(r, Err(BackendError::BadStatus { status: 404 }))
    }))?;
    let n = server.hits("notfound", "encode/image");
    check(if n == 1 { Ok(()) } else { Err(format!("4xx must not retry, saw {n}")) })?;

    // dimension mismatch on both encoders
    for role in [TextEncoder, ImageEncoder] {
        let b = backend(server, "wrongdim", role, 2000, 0);
        let got = match role {
            TextEncoder => b.encode_text("x"),
            _ => b.encode_image(&image),
        };
        check(expect("dim mismatch", got, |r| {
            matches!(r, Err(BackendError::DimMismatch { expected: DIM, found }) if *found == DIM - 3)
        }))?;
    }

    // malformed JSON and schema violations on every endpoint
    for scenario in ["garbage", "schema"] {
        check(expect(scenario, backend(server, scenario, TextEncoder, 2000, 0).encode_text("x"), malformed))?;
        check(expect(scenario, backend(server, scenario, ImageEncoder, 2000, 0).encode_image(&image), malformed))?;
        check(expect(scenario, backend(server, scenario, Llm, 2000, 0).complete("p", 0.0, 8), malformed))?;
        check(expect(scenario, backend(server, scenario, Generator, 2000, 0).generate(&request), malformed))?;
    }
    check(expect("non-finite", backend(server, "nonfinite", TextEncoder, 2000, 0).encode_text("x"), |r| {
        matches!(r, Err(BackendError::MalformedResponse(_)))
    }))?;
    check(expect("both image forms", backend(server, "both", Generator, 2000, 0).generate(&request), |r| {
        matches!(r, Err(BackendError::MalformedResponse(_)))
    }))?;
    check(expect("bad base64", backend(server, "badb64", Generator, 2000, 0).generate(&request), |r| {
        matches!(r, Err(BackendError::MalformedResponse(_)))
    }))?;
    check(expect("empty completion", backend(server, "empty", Llm, 2000, 0).complete("p", 0.0, 8), |r| {
        matches!(r, Err(BackendError::EmptyCompletion))
    }))?;
    Ok(checks)
}
