//! Serves the reference backends over the model-server protocol and runs a
//! session against them through the HTTP client, next to an in-process run
//! with the same backends. Any server implementing the four endpoints can
//! be swapped in through the `[backends]` config section.
//!
//! ```text
//! cargo run --release -p dar-core --example remote_backends
//! ```

use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use dar::backends::wire::{
    CompleteRequest, CompleteResponse, EmbeddingResponse, EncodeTextRequest, GenerateRequest,
    COMPLETE_PATH, ENCODE_IMAGE_PATH, ENCODE_TEXT_PATH, GENERATE_PATH,
};
use dar::backends::{BackendConfig, BackendSpec, BackendsConfig, GenerationRequest, ImageRef, ReferenceConfig};
use dar::synthetic::{build_caption_index, caption_corpus};
use dar::{BackendError, Backends, DarEngine, SessionConfig};

const DIM: usize = 128;

type Reply<T> = Result<Json<T>, (StatusCode, String)>;

fn reject(e: BackendError) -> (StatusCode, String) {
    (StatusCode::UNPROCESSABLE_ENTITY, e.to_string())
}

async fn encode_text(State(b): State<Arc<Backends>>, Json(r): Json<EncodeTextRequest>) -> Reply<EmbeddingResponse> {
    let e = b.encode_text(&r.text).map_err(reject)?;
    Ok(Json(EmbeddingResponse { embedding: e.as_slice().to_vec() }))
}

async fn encode_image(State(b): State<Arc<Backends>>, Json(r): Json<ImageRef>) -> Reply<EmbeddingResponse> {
    let e = b.encode_image(&r).map_err(reject)?;
    Ok(Json(EmbeddingResponse { embedding: e.as_slice().to_vec() }))
}

async fn complete(State(b): State<Arc<Backends>>, Json(r): Json<CompleteRequest>) -> Reply<CompleteResponse> {
    let text = b.complete(&r.prompt, r.temperature, r.max_tokens).map_err(reject)?;
    Ok(Json(CompleteResponse { text }))
}

async fn generate(State(b): State<Arc<Backends>>, Json(r): Json<GenerateRequest>) -> Reply<ImageRef> {
    let req = GenerationRequest::new(r.prompt, r.seed, r.width, r.height)
        .map_err(|e| (StatusCode::BAD_REQUEST, e.to_string()))?;
    let mut image = b.generate_image(&req).map_err(reject)?;
    image.provenance = None;
    Ok(Json(image))
}

fn start_server(backends: Backends) -> (String, tokio::runtime::Runtime) {
    let rt = tokio::runtime::Runtime::new().expect("tokio runtime");
    let app = Router::new()
        .route(ENCODE_TEXT_PATH, post(encode_text))
        .route(ENCODE_IMAGE_PATH, post(encode_image))
        .route(COMPLETE_PATH, post(complete))
        .route(GENERATE_PATH, post(generate))
        .with_state(Arc::new(backends));
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).expect("bind");
    let url = format!("http://{}", listener.local_addr().expect("addr"));
    rt.spawn(async move { axum::serve(listener, app).await });
    (url, rt)
}

fn main() -> dar::Result<()> {
    let reference = Backends::reference(DIM, ReferenceConfig::default());
    let (url, _runtime) = start_server(reference.clone());
    println!("model server on {url}");

    let http = BackendSpec::Http(BackendConfig::new(&url));
    let remote = Backends::from_config(&BackendsConfig {
        dim: DIM,
        text_encoder: http.clone(),
        image_encoder: http.clone(),
        llm: http.clone(),
        generator: http,
        ..BackendsConfig::default()
    })?;

    let captions = caption_corpus(1000, 3);
    let index = Arc::new(build_caption_index(&captions, &reference)?);
    let local = DarEngine::new(index.clone(), reference)?;
    let remote = DarEngine::new(index, remote)?;

    let answers = [
        ("what is it doing?", "it is sleeping"),
        ("where is it?", "on a pier"),
        ("what is the weather like?", "foggy"),
    ];
    let mut a = local.create_session("demo", "a small blue boat", SessionConfig::default(), None)?;
    let mut b = remote.create_session("demo", "a small blue boat", SessionConfig::default(), None)?;
    for (q, ans) in answers {
        local.submit_turn(&mut a, q, ans)?;
        let rec = remote.submit_turn(&mut b, q, ans)?;
        println!("turn {}: {}", rec.turn, rec.refined_query.text);
        for r in rec.ranking.iter().take(3) {
            println!("    {:>4}  {:.4}  {}", r.id, r.score, captions[r.id as usize].text);
        }
    }
    let same = a.records.iter().zip(&b.records).all(|(x, y)| x.ranking == y.ranking);
    println!("remote rankings identical to in-process: {same}");
    Ok(())
}
