//! Minimal protocol client: a blocking HTTP helper and an async event-stream
//! session. Used by the CLI script runner and the integration tests.

use std::collections::{BTreeMap, VecDeque};
use std::time::Duration;

use dyad_core::store::RecordId;
use futures_util::{SinkExt, StreamExt};
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

use crate::protocol::{AuthRequest, Envelope, Event};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("http {status}: {body}")]
    Status { status: u16, body: String },
    #[error("transport: {0}")]
    Transport(String),
    #[error("bad frame: {0}")]
    Decode(String),
    #[error("connection closed")]
    Closed,
    #[error("no reply within {0:?}")]
    Timeout(Duration),
    #[error("server error {code}: {message}")]
    Rejected { code: String, message: String },
}

impl ClientError {
    /// Error code of a server rejection, if that is what this is.
    pub fn code(&self) -> Option<String> {
        match self {
            ClientError::Rejected { code, .. } => Some(code.clone()),
            ClientError::Status { body, .. } => serde_json::from_str::<Value>(body)
                .ok()
                .and_then(|v| v.get("code").and_then(Value::as_str).map(str::to_string)),
            _ => None,
        }
    }
}

/// Blocking JSON-over-HTTP calls.
#[derive(Clone)]
pub struct Http {
    base: String,
    token: Option<String>,
    agent: ureq::Agent,
}

impl Http {
    pub fn new(base: &str) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(30)))
            .build()
            .into();
        Self { base: base.trim_end_matches('/').to_string(), token: None, agent }
    }

    pub fn with_token(mut self, token: &str) -> Self {
        self.token = Some(token.to_string());
        self
    }

    pub fn token(&self) -> Option<&str> {
        self.token.as_deref()
    }

    /// Logs in as `user_id` and returns a client carrying the token.
    pub fn login(base: &str, user_id: &str) -> Result<Self, ClientError> {
        let http = Self::new(base);
        let v = http.post("/login", &serde_json::json!({ "user_id": user_id }))?;
        let token = v["token"].as_str().ok_or_else(|| ClientError::Decode("login reply has no token".into()))?;
        Ok(http.with_token(token))
    }

    fn finish(mut response: ureq::http::Response<ureq::Body>) -> Result<Value, ClientError> {
        let status = response.status().as_u16();
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(ClientError::Status { status, body });
        }
        serde_json::from_str(&body).map_err(|e| ClientError::Decode(e.to_string()))
    }

    pub fn get(&self, path: &str) -> Result<Value, ClientError> {
        let mut req = self.agent.get(format!("{}{path}", self.base));
        if let Some(t) = &self.token {
            req = req.header("Authorization", format!("Bearer {t}"));
        }
        Self::finish(req.call().map_err(|e| ClientError::Transport(e.to_string()))?)
    }

    pub fn post(&self, path: &str, body: &impl Serialize) -> Result<Value, ClientError> {
        let mut req = self.agent.post(format!("{}{path}", self.base));
        if let Some(t) = &self.token {
            req = req.header("Authorization", format!("Bearer {t}"));
        }
        Self::finish(req.send_json(body).map_err(|e| ClientError::Transport(e.to_string()))?)
    }

    pub fn post_raw(&self, path: &str, body: &str) -> Result<Value, ClientError> {
        let mut req = self.agent.post(format!("{}{path}", self.base)).header("Content-Type", "application/json");
        if let Some(t) = &self.token {
            req = req.header("Authorization", format!("Bearer {t}"));
        }
        Self::finish(req.send(body).map_err(|e| ClientError::Transport(e.to_string()))?)
    }
}

/// One authenticated event-stream connection. Server pushes that arrive while
/// waiting for a reply are buffered and handed out by [`Session::next_push`].
pub struct Session {
    ws: WebSocketStream<MaybeTlsStream<TcpStream>>,
    pushes: VecDeque<Envelope>,
    prefix: String,
    counter: u64,
    pub timeout: Duration,
}

impl Session {
    /// Connects and authenticates with an `auth` frame, returning the ack.
    pub async fn connect(
        ws_url: &str,
        token: &str,
        resume: BTreeMap<String, RecordId>,
    ) -> Result<(Self, Envelope), ClientError> {
        let (ws, _) = tokio_tungstenite::connect_async(ws_url)
            .await
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        let mut session = Self {
            ws,
            pushes: VecDeque::new(),
            prefix: uuid::Uuid::new_v4().simple().to_string()[..12].to_string(),
            counter: 0,
            timeout: Duration::from_secs(10),
        };
        let ack = session
            .request(Event::Auth, AuthRequest { token: token.to_string(), resume })
            .await?;
        Ok((session, ack))
    }

    pub fn next_request_id(&mut self) -> String {
        self.counter += 1;
        format!("{}-{}", self.prefix, self.counter)
    }

    pub async fn send_text(&mut self, text: String) -> Result<(), ClientError> {
        self.ws
            .send(Message::Text(text.into()))
            .await
            .map_err(|e| ClientError::Transport(e.to_string()))
    }

    async fn read(&mut self, timeout: Duration) -> Result<Envelope, ClientError> {
        loop {
            let msg = tokio::time::timeout(timeout, self.ws.next())
                .await
                .map_err(|_| ClientError::Timeout(timeout))?;
            match msg {
                None | Some(Ok(Message::Close(_))) => return Err(ClientError::Closed),
                Some(Err(e)) => return Err(ClientError::Transport(e.to_string())),
                Some(Ok(Message::Text(t))) => {
                    return serde_json::from_str(t.as_str()).map_err(|e| ClientError::Decode(e.to_string()))
                }
                Some(Ok(_)) => continue,
            }
        }
    }

    /// Sends a frame with a fresh request id and waits for its reply.
    /// An `error` reply comes back as `Err(Rejected)`.
    pub async fn request(&mut self, event: Event, payload: impl Serialize) -> Result<Envelope, ClientError> {
        let rid = self.next_request_id();
        self.request_with_id(event, &rid, payload).await
    }

    pub async fn request_with_id(
        &mut self,
        event: Event,
        request_id: &str,
        payload: impl Serialize,
    ) -> Result<Envelope, ClientError> {
        self.send_text(Envelope::request(event, request_id, payload).to_text()).await?;
        self.reply_to(request_id).await
    }

    /// Waits for the reply carrying `request_id`, buffering pushes.
    pub async fn reply_to(&mut self, request_id: &str) -> Result<Envelope, ClientError> {
        loop {
            let env = self.read(self.timeout).await?;
            if env.request_id.as_deref() == Some(request_id) {
                if env.event == Event::Error {
                    return Err(ClientError::Rejected {
                        code: env.payload["code"].as_str().unwrap_or_default().to_string(),
                        message: env.payload["message"].as_str().unwrap_or_default().to_string(),
                    });
                }
                return Ok(env);
            }
            self.pushes.push_back(env);
        }
    }

    /// Next server push, or `None` if nothing arrives within `timeout`.
    pub async fn next_push(&mut self, timeout: Duration) -> Result<Option<Envelope>, ClientError> {
        if let Some(env) = self.pushes.pop_front() {
            return Ok(Some(env));
        }
        match self.read(timeout).await {
            Ok(env) => Ok(Some(env)),
            Err(ClientError::Timeout(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }

    /// Buffered and newly arriving pushes until the stream is quiet for `quiet`.
    pub async fn drain(&mut self, quiet: Duration) -> Result<Vec<Envelope>, ClientError> {
        let mut out = Vec::new();
        while let Some(env) = self.next_push(quiet).await? {
            out.push(env);
        }
        Ok(out)
    }

    pub async fn close(mut self) {
        let _ = self.ws.close(None).await;
    }
}
