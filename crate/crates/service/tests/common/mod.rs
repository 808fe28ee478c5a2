#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use dar::backends::ReferenceConfig;
use dar::synthetic::{build_caption_index, caption_corpus, SyntheticCaption};
use dar::{Backends, DarConfig, EmbeddingIndex};
use dar_service::{AppState, ServiceConfig};
use serde_json::Value;
use tokio::sync::oneshot;

pub const DIM: usize = 64;
pub const CAPTIONS: usize = 120;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn corpus() -> (Vec<SyntheticCaption>, EmbeddingIndex) {
    let caps = caption_corpus(CAPTIONS, 4);
    let b = Backends::reference(DIM, ReferenceConfig { seed: 0, sigma: 0.1 });
    let ix = build_caption_index(&caps, &b).unwrap();
    (caps, ix)
}

pub fn service_config(demo_mode: bool) -> ServiceConfig {
    let mut dar = DarConfig::default();
    dar.backends.dim = DIM;
    ServiceConfig {
        demo_mode,
        dar,
        ..ServiceConfig::default()
    }
}

/// An in-process server on an ephemeral port, stopped on drop.
pub struct Server {
    pub base: String,
    pub state: Arc<AppState>,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
    client: reqwest::blocking::Client,
}

impl Server {
    pub fn start(config: ServiceConfig, index: EmbeddingIndex) -> Self {
        let engine = config.dar.engine(Arc::new(index)).unwrap();
        let state = Arc::new(AppState::new(engine, config).unwrap());
        let (tx, rx) = oneshot::channel();
        let (addr_tx, addr_rx) = std::sync::mpsc::channel();
        let st = state.clone();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Runtime::new().unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                addr_tx.send(listener.local_addr().unwrap()).unwrap();
                dar_service::server::serve_with(listener, st, async {
                    let _ = rx.await;
                })
                .await
                .unwrap();
            });
        });
        let addr = addr_rx.recv().unwrap();
        Self {
            base: format!("http://{addr}"),
            state,
            stop: Some(tx),
            thread: Some(thread),
            client: reqwest::blocking::Client::builder()
                .redirect(reqwest::redirect::Policy::none())
                .build()
                .unwrap(),
        }
    }

    pub fn get(&self, path: &str) -> (u16, Value) {
        let r = self.client.get(format!("{}{path}", self.base)).send().unwrap();
        let status = r.status().as_u16();
        (status, r.json().unwrap_or(Value::Null))
    }

    pub fn get_raw(&self, path: &str) -> reqwest::blocking::Response {
        self.client.get(format!("{}{path}", self.base)).send().unwrap()
    }

    pub fn post(&self, path: &str, body: &Value) -> (u16, Value) {
        self.post_raw(path, body.to_string())
    }

    pub fn post_raw(&self, path: &str, body: String) -> (u16, Value) {
        let r = self
            .client
            .post(format!("{}{path}", self.base))
            .header("content-type", "application/json")
            .body(body)
            .send()
            .unwrap();
        let status = r.status().as_u16();
        (status, r.json().unwrap_or(Value::Null))
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
