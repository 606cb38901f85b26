#![allow(dead_code)]

pub mod load;

use std::future::Future;

use dyad_gateway::client::{ClientError, Http};
use dyad_gateway::{GatewayConfig, RunningServer};
use serde_json::Value;

pub fn config() -> GatewayConfig {
    GatewayConfig { listen: "127.0.0.1:0".into(), ..GatewayConfig::default() }
}

pub async fn server(config: GatewayConfig) -> RunningServer {
    dyad_gateway::start(config).await.expect("server starts")
}

pub async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> T {
    tokio::task::spawn_blocking(f).await.unwrap()
}

pub async fn login(server: &RunningServer, user: &str) -> Http {
    let base = server.http_url();
    let user = user.to_string();
    blocking(move || Http::login(&base, &user).unwrap()).await
}

pub async fn get(http: &Http, path: &str) -> Result<Value, ClientError> {
    let (h, p) = (http.clone(), path.to_string());
    blocking(move || h.get(&p)).await
}

pub async fn post(http: &Http, path: &str, body: Value) -> Result<Value, ClientError> {
    let (h, p) = (http.clone(), path.to_string());
    blocking(move || h.post(&p, &body)).await
}

/// Opens the conversation between the two logged-in users.
pub async fn conversation(a: &Http, peer: &str) -> String {
    let v = post(a, "/conversations", serde_json::json!({ "peer_id": peer })).await.unwrap();
    v["conversation_id"].as_str().unwrap().to_string()
}

pub fn with_timeout<F: Future>(secs: u64, f: F) -> impl Future<Output = F::Output> {
    async move {
        tokio::time::timeout(std::time::Duration::from_secs(secs), f)
            .await
            .expect("test timed out")
    }
}
