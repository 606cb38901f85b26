use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket};
use futures_util::{SinkExt, StreamExt};
use serde_json::Value;
use tokio::sync::mpsc;

use crate::protocol::{AuthRequest, Envelope, Event};
use crate::service::SessionHandle;
use crate::{Gateway, GatewayError};

enum Incoming {
    Frame(Envelope),
    Bad(Option<String>, GatewayError),
    Skip,
    Closed,
}

fn decode(msg: Option<Result<Message, axum::Error>>) -> Incoming {
    let text = match msg {
        None | Some(Err(_)) | Some(Ok(Message::Close(_))) => return Incoming::Closed,
        Some(Ok(Message::Text(t))) => t.to_string(),
        Some(Ok(Message::Binary(b))) => match String::from_utf8(b.to_vec()) {
            Ok(t) => t,
            Err(_) => return Incoming::Bad(None, GatewayError::Schema("frames must be UTF-8 JSON".into())),
        },
        Some(Ok(_)) => return Incoming::Skip,
    };
    let raw: Value = match serde_json::from_str(&text) {
        Ok(v) => v,
        Err(e) => return Incoming::Bad(None, GatewayError::Schema(e.to_string())),
    };
    let request_id = raw.get("request_id").and_then(Value::as_str).map(str::to_string);
    match serde_json::from_value::<Envelope>(raw) {
        Ok(env) => Incoming::Frame(env),
        Err(e) => Incoming::Bad(request_id, GatewayError::Schema(e.to_string())),
    }
}

/// Runs one socket: authenticate, then handle frames one at a time while a
/// writer task drains the session queue.
pub(crate) async fn serve(gateway: Arc<Gateway>, socket: WebSocket, preauth: Option<String>) {
    let (mut sink, mut stream) = socket.split();
    let (tx, mut rx) = mpsc::unbounded_channel::<Envelope>();
    let writer = tokio::spawn(async move {
        while let Some(env) = rx.recv().await {
            if sink.send(Message::Text(env.to_text().into())).await.is_err() {
                break;
            }
        }
        let _ = sink.close().await;
    });

    let session: SessionHandle = match preauth {
        Some(user) => gateway.register_session(&user, tx.clone()),
        None => loop {
            match decode(stream.next().await) {
                Incoming::Closed => {
                    drop(tx);
                    let _ = writer.await;
                    return;
                }
                Incoming::Skip => continue,
                Incoming::Bad(rid, e) => {
                    let _ = tx.send(gateway.error_envelope(rid, &e));
                }
                Incoming::Frame(env) if env.event == Event::Auth => {
                    let rid = env.request_id.clone();
                    let result = match serde_json::from_value::<AuthRequest>(env.payload) {
                        Ok(auth) => gateway.authenticate_session(rid.clone(), auth, tx.clone()).await,
                        Err(e) => Err(GatewayError::Schema(e.to_string())),
                    };
                    match result {
                        Ok(s) => break s,
                        Err(e) => {
                            let _ = tx.send(gateway.error_envelope(rid, &e));
                        }
                    }
                }
                Incoming::Frame(env) => {
                    let _ = tx.send(gateway.error_envelope(env.request_id, &GatewayError::Unauthenticated));
                }
            }
        },
    };

    loop {
        match decode(stream.next().await) {
            Incoming::Closed => break,
            Incoming::Skip => {}
            Incoming::Bad(rid, e) => {
                let _ = tx.send(gateway.error_envelope(rid, &e));
            }
            Incoming::Frame(env) => {
                let reply = gateway.handle_frame(&session, env).await;
                let _ = tx.send(reply);
            }
        }
    }
    gateway.unregister_session(session.id);
    drop(tx);
    drop(session);
    let _ = writer.await;
}
