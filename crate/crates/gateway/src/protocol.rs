//! Wire schema for the event stream.
//!
//! Every frame is a JSON text message `{event, request_id, payload, server_ts}`.
//! Client requests carry a `request_id` and receive exactly one `ack` or
//! `error` with the same id (`recommend-request` is answered by its
//! `recommend-response`). Server pushes carry no `request_id`.
//!
//! | event | direction | payload |
//! |---|---|---|
//! | `auth` | client | `{token, resume?: {conversation_id: last_seen_record_id}}` |
//! | `chat-message` | both | client: `{conversation_id, text}`; server: the stored record |
//! | `puppet-action` | both | client: [`PuppetAction`]; server: the record |
//! | `emn-update` | both | client: `{story}` or `{tags: {selected, custom}}`; server: `{user_id, story?, tags?}` to the owner's sessions |
//! | `recommend-request` | client | [`RecommendRequest`] |
//! | `recommend-response` | server | [`RecommendResponse`] |
//! | `exchange-status` | server | [`ExchangeStatus`] |
//! | `ack` / `error` | server | request result / `{code, message}` |

use std::collections::BTreeMap;

use dyad_core::narrative::TagSelection;
use dyad_core::recommend::{ConversationState, ScoreBreakdown};
use dyad_core::store::RecordId;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Event {
    #[serde(rename = "auth")]
    Auth,
    #[serde(rename = "chat-message")]
    ChatMessage,
    #[serde(rename = "puppet-action")]
    PuppetAction,
    #[serde(rename = "emn-update")]
    EmnUpdate,
    #[serde(rename = "recommend-request")]
    RecommendRequest,
    #[serde(rename = "recommend-response")]
    RecommendResponse,
    #[serde(rename = "exchange-status")]
    ExchangeStatus,
    #[serde(rename = "error")]
    Error,
    #[serde(rename = "ack")]
    Ack,
}

impl Event {
    pub fn as_str(self) -> &'static str {
        match self {
            Event::Auth => "auth",
            Event::ChatMessage => "chat-message",
            Event::PuppetAction => "puppet-action",
            Event::EmnUpdate => "emn-update",
            Event::RecommendRequest => "recommend-request",
            Event::RecommendResponse => "recommend-response",
            Event::ExchangeStatus => "exchange-status",
            Event::Error => "error",
            Event::Ack => "ack",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub event: Event,
    #[serde(default)]
    pub request_id: Option<String>,
    #[serde(default)]
    pub payload: Value,
    #[serde(default)]
    pub server_ts: u64,
}

impl Envelope {
    pub fn new(event: Event, request_id: Option<String>, payload: impl Serialize, server_ts: u64) -> Self {
        Self {
            event,
            request_id,
            payload: serde_json::to_value(payload).unwrap_or(Value::Null),
            server_ts,
        }
    }

    pub fn request(event: Event, request_id: impl Into<String>, payload: impl Serialize) -> Self {
        Self::new(event, Some(request_id.into()), payload, 0)
    }

    pub fn to_text(&self) -> String {
        serde_json::to_string(self).expect("envelopes always serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuthRequest {
    pub token: String,
    #[serde(default)]
    pub resume: BTreeMap<String, RecordId>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChatMessage {
    pub conversation_id: String,
    pub text: String,
}

/// Outcome of the recommendation strip, reported with the chosen action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outcome {
    pub shown: Vec<String>,
    #[serde(default)]
    pub chosen: Option<String>,
    #[serde(default)]
    pub hidden: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PuppetAction {
    pub conversation_id: String,
    pub action: String,
    /// `false` is "Action Only": delivered live, never stored.
    pub persist: bool,
    #[serde(default)]
    pub micronarrative: Option<String>,
    #[serde(default)]
    pub edited: bool,
    /// The partner's action record this one answers, making a dyadic exchange.
    #[serde(default)]
    pub paired_with: Option<RecordId>,
    /// Strip shown before this action was picked; recorded as an outcome.
    #[serde(default)]
    pub shown: Option<Vec<String>>,
    #[serde(default)]
    pub hidden: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmnUpdate {
    #[serde(default)]
    pub story: Option<String>,
    #[serde(default)]
    pub tags: Option<TagSelection>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecommendRequest {
    pub conversation_id: String,
    #[serde(default)]
    pub draft_text: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendResponse {
    pub conversation_id: String,
    pub actions: Vec<ScoreBreakdown>,
    pub conversation_state: ConversationState,
    pub partner_last_action: Option<String>,
    pub seed: u64,
    /// The remote provider failed and the offline one answered instead.
    pub degraded: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExchangeStatus {
    pub conversation_id: String,
    pub record_id: RecordId,
    pub paired_with: RecordId,
    /// `[partner's action, answering action]`
    pub actions: [String; 2],
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn event_names_are_exact() {
        for e in [Event::PuppetAction, Event::EmnUpdate, Event::RecommendRequest, Event::ExchangeStatus] {
            let json = serde_json::to_string(&e).unwrap();
            assert_eq!(json, format!("\"{}\"", e.as_str()));
        }
        assert_eq!(Event::PuppetAction.as_str(), "puppet-action");
        assert_eq!(Event::EmnUpdate.as_str(), "emn-update");
    }

    #[test]
    fn envelope_round_trip() {
        let e = Envelope::request(Event::ChatMessage, "r1", ChatMessage { conversation_id: "c".into(), text: "hi".into() });
        let back: Envelope = serde_json::from_str(&e.to_text()).unwrap();
        assert_eq!(back, e);
        assert!(serde_json::from_str::<Envelope>(r#"{"event":"wave","payload":{}}"#).is_err());
    }

    #[test]
    fn unknown_fields_are_schema_errors() {
        let v = serde_json::json!({"conversation_id": "c", "action": "hug", "persist": true, "bogus": 1});
        assert!(serde_json::from_value::<PuppetAction>(v).is_err());
        let v = serde_json::json!({"conversation_id": "c", "action": "hug"});
        assert!(serde_json::from_value::<PuppetAction>(v).is_err(), "persist is required");
    }
}
