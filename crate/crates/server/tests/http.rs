use std::net::SocketAddr;
use std::path::Path;

use snnstory_client::{Client, ClientError};
use snnstory_core::pipeline::{run_pipeline, PipelineConfig};
use snnstory_core::projection::TsneConfig;
use snnstory_core::trainer::HyperParams;
use snnstory_server::{router, Content, Server, ServerError};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::TcpStream;

fn bundle_text() -> String {
    let cfg = PipelineConfig {
        hyperparams: HyperParams {
            epochs: 3,
            batch_triplets: 16,
            ..HyperParams::default()
        },
        tsne: TsneConfig {
            iterations: 60,
            exaggeration_iters: 20,
            ..TsneConfig::default()
        },
        ..PipelineConfig::default()
    };
    run_pipeline(&cfg).unwrap().bundle.to_json().unwrap()
}

async fn start(dir: &Path, ui: Option<&Path>) -> (SocketAddr, String) {
    let text = bundle_text();
    let path = dir.join("bundle.json");
    std::fs::write(&path, &text).unwrap();
    let app = router(Content::load(&path).unwrap(), ui).unwrap();
    let server = Server::bind("127.0.0.1:0".parse().unwrap(), app)
        .await
        .unwrap();
    let addr = server.local_addr();
    tokio::spawn(server.run());
    (addr, text)
}

/// Status line and headers of a raw HTTP/1.1 exchange, plus the body.
async fn raw(addr: SocketAddr, method: &str, path: &str) -> (u16, String, Vec<u8>) {
    let mut s = TcpStream::connect(addr).await.unwrap();
    let req = format!(
        "{method} {path} HTTP/1.1\r\nHost: x\r\nConnection: close\r\nContent-Length: 0\r\n\r\n"
    );
    s.write_all(req.as_bytes()).await.unwrap();
    let mut buf = Vec::new();
    s.read_to_end(&mut buf).await.unwrap();
    let split = buf.windows(4).position(|w| w == b"\r\n\r\n").unwrap();
    let head = String::from_utf8(buf[..split].to_vec()).unwrap();
    let status = head.split(' ').nth(1).unwrap().parse().unwrap();
    (status, head.to_ascii_lowercase(), buf[split + 4..].to_vec())
}

#[tokio::test]
async fn serves_bundle_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let (addr, text) = start(dir.path(), None).await;
    let client = Client::new(format!("http://{addr}"));
    assert_eq!(
        client.get_bytes("/bundle.json").await.unwrap(),
        text.as_bytes()
    );
    let (status, head, body) = raw(addr, "GET", "/bundle.json").await;
    assert_eq!(status, 200);
    assert!(head.contains("content-type: application/json"));
    assert!(!body.is_empty());
    let (status, _, body) = raw(addr, "HEAD", "/bundle.json").await;
    assert_eq!(status, 200);
    assert!(body.is_empty());
    assert_eq!(client.bundle().await.unwrap().slices.len(), 6);
    assert!(client.validation().await.unwrap().is_empty());
}

#[tokio::test]
async fn unknown_paths_and_methods() {
    let dir = tempfile::tempdir().unwrap();
    let (addr, _) = start(dir.path(), None).await;
    assert_eq!(raw(addr, "GET", "/nope").await.0, 404);
    assert_eq!(raw(addr, "POST", "/").await.0, 405);
    assert_eq!(raw(addr, "POST", "/bundle.json").await.0, 405);
    let client = Client::new(format!("http://{addr}"));
    assert!(matches!(
        client.get_bytes("/nope").await,
        Err(ClientError::Status { status: 404, .. })
    ));
}

#[tokio::test]
async fn ui_directory_is_served() {
    let dir = tempfile::tempdir().unwrap();
    let ui = dir.path().join("ui");
    std::fs::create_dir(&ui).unwrap();
    std::fs::write(ui.join("index.html"), "<!doctype html><title>story</title>").unwrap();
    std::fs::write(ui.join("app.js"), "console.log(1)").unwrap();
    let (addr, _) = start(dir.path(), Some(&ui)).await;
    let (status, head, body) = raw(addr, "GET", "/").await;
    assert_eq!(status, 200);
    assert!(head.contains("text/html"));
    assert!(body.starts_with(b"<!doctype html>"));
    let (status, head, _) = raw(addr, "GET", "/app.js").await;
    assert_eq!(status, 200);
    assert!(head.contains("javascript"));
    assert_eq!(raw(addr, "GET", "/missing.css").await.0, 404);
    assert_eq!(raw(addr, "POST", "/").await.0, 405);
    assert_eq!(raw(addr, "GET", "/bundle.json").await.0, 200);
}

#[tokio::test]
async fn parity_stats_and_loss() {
    let dir = tempfile::tempdir().unwrap();
    let (addr, _) = start(dir.path(), None).await;
    let client = Client::new(format!("http://{addr}/"));
    let parity = client.parity().await.unwrap();
    assert_eq!(parity.cases.len(), 20);
    for c in &parity.cases {
        let r = client
            .triplet_loss(&c.anchor, &c.positive, &c.negative, c.margin)
            .await
            .unwrap();
        assert!((r.loss - c.expected_loss).abs() <= 1e-9);
        assert!((r.d_ap - c.d_ap).abs() <= 1e-9);
    }
    let report = client.stats().await.unwrap();
    let t = report.independent_samples_test.equal_variances_assumed;
    assert!((t.t - 4.44).abs() <= 0.01);
    assert_eq!(t.df, 48.0);
    assert!(matches!(
        client.get_bytes("/api/loss?anchor=0,0&positive=1").await,
        Err(ClientError::Status { status: 400, .. })
    ));
}

#[test]
fn refuses_invalid_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bundle.json");
    let mut v: serde_json::Value = serde_json::from_str(&bundle_text()).unwrap();
    v["slices"].as_array_mut().unwrap().reverse();
    std::fs::write(&path, serde_json::to_vec(&v).unwrap()).unwrap();
    match Content::load(&path) {
        Err(ServerError::InvalidBundle { violations, .. }) => assert!(!violations.is_empty()),
        other => panic!("expected InvalidBundle, got {other:?}"),
    }
    std::fs::write(&path, "not json").unwrap();
    assert!(matches!(
        Content::load(&path),
        Err(ServerError::NotJson { .. })
    ));
    assert!(matches!(
        Content::load(&dir.path().join("absent.json")),
        Err(ServerError::Io { .. })
    ));
}

#[tokio::test]
async fn port_in_use() {
    let dir = tempfile::tempdir().unwrap();
    let (addr, _) = start(dir.path(), None).await;
    let path = dir.path().join("bundle.json");
    let app = router(Content::load(&path).unwrap(), None).unwrap();
    assert!(matches!(
        Server::bind(addr, app).await,
        Err(ServerError::Io { .. })
    ));
}
