#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::PathBuf;

use citeqa_service::config::EngineConfig;

pub const GOLDEN_QUESTION: &str = "Which genes are targets in breast cancer?";

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(rel)
}

/// The golden fixture config with extra `CITEQA_*` overrides. Feedback goes
/// to `feedback` so tests never write into the fixture directory.
pub fn golden_config(feedback: &std::path::Path, env: &[(&str, &str)]) -> EngineConfig {
    let mut vars: Vec<(String, String)> = env.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    vars.push(("CITEQA_FEEDBACK_PATH".into(), feedback.display().to_string()));
    EngineConfig::load_with_env(Some(&fixture("golden/citeqa.toml")), vars).unwrap()
}

/// A localhost URL nothing is listening on.
pub fn dead_url(path: &str) -> String {
    let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = l.local_addr().unwrap().port();
    drop(l);
    format!("http://127.0.0.1:{port}{path}")
}

/// Serves `router` on an ephemeral port from a background runtime.
pub fn spawn(router: axum::Router) -> SocketAddr {
    let (tx, rx) = std::sync::mpsc::channel();
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
    rx.recv().unwrap()
}

pub fn agent() -> ureq::Agent {
    ureq::Agent::config_builder().http_status_as_error(false).build().into()
}

/// (status, parsed body)
pub fn post_json(addr: SocketAddr, path: &str, body: &str) -> (u16, serde_json::Value) {
    let mut resp = agent()
        .post(format!("http://{addr}{path}"))
        .header("content-type", "application/json")
        .send(body)
        .unwrap();
    let status = resp.status().as_u16();
    let text = resp.body_mut().read_to_string().unwrap();
    (
        status,
        serde_json::from_str(&text).unwrap_or(serde_json::Value::String(text)),
    )
}

pub fn get_json(addr: SocketAddr, path: &str) -> (u16, serde_json::Value) {
    let mut resp = agent().get(format!("http://{addr}{path}")).call().unwrap();
    let status = resp.status().as_u16();
    let text = resp.body_mut().read_to_string().unwrap();
    (
        status,
        serde_json::from_str(&text).unwrap_or(serde_json::Value::String(text)),
    )
}
