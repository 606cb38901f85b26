//! HTTP routes. All but `/login` and `/health` need `Authorization: Bearer <token>`.
//!
//! | route | body / query | result |
//! |---|---|---|
//! | `POST /login` | `{user_id, display_name?}` | `{token, user_id}` |
//! | `GET /library` | | action library JSON |
//! | `GET /conversations`, `POST /conversations` | `{peer_id}` | conversations |
//! | `GET /contacts`, `POST /contacts` | `{peer_id, relationship_icon}` | contacts |
//! | `GET /history/{conversation_id}` | `?offset&limit` | `{records, next_offset}` |
//! | `GET /replay/{record_id}` | | replay or `ephemeral_record` error |
//! | `POST /recommend` | `{conversation_id, draft_text?, seed?}` | recommend-response payload |
//! | `POST /recommend/outcome` | `{shown, chosen?, hidden?}` | `{}` |
//! | `GET /tags` | | proposed and selected tags |
//! | `POST /narrate` | `{action_id, conversation_id?, tags?}` | `{micronarrative, degraded}` |
//! | `POST /narrate/regenerate` | `{previous, conversation_id?, tags?}` | same |
//! | `POST /narrate/edit` | `{previous, text}` | the edited micronarrative |
//! | `GET /ws` | `?token=` optional | event stream |

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{FromRequestParts, Path, Query, State, WebSocketUpgrade};
use axum::http::request::Parts;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use dyad_core::store::RecordId;
use serde::Deserialize;
use serde_json::Value;

use crate::protocol::{ErrorBody, Outcome, RecommendRequest};
use crate::service::{
    ContactRequest, ConversationRequest, EditRequest, LoginRequest, NarrateRequest, RegenerateRequest,
    DEFAULT_PAGE_SIZE,
};
use crate::{Gateway, GatewayError};

type AppState = Arc<Gateway>;

impl IntoResponse for GatewayError {
    fn into_response(self) -> Response {
        let status = match self.code() {
            "schema" | "invalid" => StatusCode::BAD_REQUEST,
            "unauthenticated" => StatusCode::UNAUTHORIZED,
            "unauthorized" => StatusCode::FORBIDDEN,
            "not_found" => StatusCode::NOT_FOUND,
            "ephemeral_record" => StatusCode::GONE,
            "empty_library" | "config" => StatusCode::CONFLICT,
            "provider" => StatusCode::BAD_GATEWAY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let body = ErrorBody { code: self.code().to_string(), message: self.to_string() };
        (status, Json(body)).into_response()
    }
}

/// Authenticated caller, from the bearer token.
pub struct Caller(pub String);

impl FromRequestParts<AppState> for Caller {
    type Rejection = GatewayError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, Self::Rejection> {
        let token = parts
            .headers
            .get(axum::http::header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .ok_or(GatewayError::Unauthenticated)?;
        state.authenticate(token.trim()).map(Caller)
    }
}

/// JSON body whose parse failures come back as `schema` errors.
pub struct Body<T>(pub T);

impl<T, S> axum::extract::FromRequest<S> for Body<T>
where
    Json<T>: axum::extract::FromRequest<S, Rejection = JsonRejection>,
    S: Send + Sync,
{
    type Rejection = GatewayError;

    async fn from_request(req: axum::extract::Request, state: &S) -> Result<Self, Self::Rejection> {
        Json::<T>::from_request(req, state)
            .await
            .map(|Json(v)| Body(v))
            .map_err(|e| GatewayError::Schema(e.body_text()))
    }
}

type Reply = Result<Json<Value>, GatewayError>;

fn reply(v: impl serde::Serialize) -> Reply {
    serde_json::to_value(v)
        .map(Json)
        .map_err(|e| GatewayError::Internal(e.to_string()))
}

pub fn router(gateway: Arc<Gateway>) -> Router {
    Router::new()
        .route("/health", get(|| async { Json(serde_json::json!({"status": "ok"})) }))
        .route("/login", post(login))
        .route("/library", get(library))
        .route("/conversations", get(list_conversations).post(open_conversation))
        .route("/contacts", get(list_contacts).post(set_contact))
        .route("/history/{conversation_id}", get(history))
        .route("/replay/{record_id}", get(replay))
        .route("/recommend", post(recommend))
        .route("/recommend/outcome", post(outcome))
        .route("/tags", get(tags))
        .route("/narrate", post(narrate))
        .route("/narrate/regenerate", post(regenerate))
        .route("/narrate/edit", post(edit))
        .route("/ws", get(websocket))
        .with_state(gateway)
}

async fn login(State(g): State<AppState>, Body(req): Body<LoginRequest>) -> Reply {
    reply(g.login(&req)?)
}

async fn library(State(g): State<AppState>, _: Caller) -> Response {
    (
        [(axum::http::header::CONTENT_TYPE, "application/json")],
        g.library().to_json(),
    )
        .into_response()
}

async fn list_conversations(State(g): State<AppState>, Caller(user): Caller) -> Reply {
    reply(g.conversations(&user))
}

async fn open_conversation(State(g): State<AppState>, Caller(user): Caller, Body(req): Body<ConversationRequest>) -> Reply {
    reply(g.open_conversation(&user, &req.peer_id)?)
}

async fn list_contacts(State(g): State<AppState>, Caller(user): Caller) -> Reply {
    reply(g.contacts(&user))
}

async fn set_contact(State(g): State<AppState>, Caller(user): Caller, Body(req): Body<ContactRequest>) -> Reply {
    reply(g.set_contact(&user, req)?)
}

#[derive(Deserialize)]
struct PageQuery {
    #[serde(default)]
    offset: usize,
    #[serde(default)]
    limit: Option<usize>,
}

async fn history(
    State(g): State<AppState>,
    Caller(user): Caller,
    Path(conversation_id): Path<String>,
    query: Result<Query<PageQuery>, axum::extract::rejection::QueryRejection>,
) -> Reply {
    let Query(q) = query.map_err(|e| GatewayError::Schema(e.body_text()))?;
    reply(g.history(&user, &conversation_id, q.offset, q.limit.unwrap_or(DEFAULT_PAGE_SIZE))?)
}

async fn replay(State(g): State<AppState>, Caller(user): Caller, Path(record_id): Path<String>) -> Reply {
    let id: RecordId = record_id
        .parse()
        .map_err(|_| GatewayError::Schema(format!("record id {record_id:?} is not a number")))?;
    reply(g.replay(&user, id)?)
}

async fn recommend(State(g): State<AppState>, Caller(user): Caller, Body(req): Body<RecommendRequest>) -> Reply {
    reply(g.recommend(&user, req).await?)
}

async fn outcome(State(g): State<AppState>, Caller(user): Caller, Body(req): Body<Outcome>) -> Reply {
    g.record_outcome(&user, &req)?;
    reply(serde_json::json!({}))
}

async fn tags(State(g): State<AppState>, Caller(user): Caller) -> Reply {
    reply(g.tags(&user).await?)
}

async fn narrate(State(g): State<AppState>, Caller(user): Caller, Body(req): Body<NarrateRequest>) -> Reply {
    reply(g.narrate(&user, req).await?)
}

async fn regenerate(State(g): State<AppState>, Caller(user): Caller, Body(req): Body<RegenerateRequest>) -> Reply {
    reply(g.regenerate(&user, req).await?)
}

async fn edit(State(g): State<AppState>, _: Caller, Body(req): Body<EditRequest>) -> Reply {
    reply(g.edit(req)?)
}

#[derive(Deserialize)]
struct WsQuery {
    token: Option<String>,
}

async fn websocket(State(g): State<AppState>, Query(q): Query<WsQuery>, ws: WebSocketUpgrade) -> Response {
    let user = match q.token.as_deref().map(|t| g.authenticate(t)).transpose() {
        Ok(user) => user,
        Err(e) => return e.into_response(),
    };
    ws.on_upgrade(move |socket| crate::ws::serve(g, socket, user))
}
