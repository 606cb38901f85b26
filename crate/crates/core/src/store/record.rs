use serde::{Deserialize, Serialize};

use crate::clock::Millis;

pub type RecordId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Text,
    ActionWithNarrative,
    ActionOnlyStatus,
    DyadicExchange,
}

impl RecordKind {
    pub fn is_durable(self) -> bool {
        self != RecordKind::ActionOnlyStatus
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RecordKind::Text => "text",
            RecordKind::ActionWithNarrative => "action_with_narrative",
            RecordKind::ActionOnlyStatus => "action_only_status",
            RecordKind::DyadicExchange => "dyadic_exchange",
        }
    }
}

/// Caption attached to an action as it was sent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caption {
    pub text: String,
    #[serde(default)]
    pub edited: bool,
}

impl Caption {
    pub fn new(text: impl Into<String>, edited: bool) -> Self {
        Self { text: text.into(), edited }
    }
}

/// What a client submits; the store assigns id and timestamp.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewRecord {
    pub conversation_id: String,
    pub sender_id: String,
    pub kind: RecordKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub micronarrative: Option<Caption>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paired_with: Option<RecordId>,
}

impl NewRecord {
    fn base(conversation_id: &str, sender_id: &str, kind: RecordKind) -> Self {
        Self {
            conversation_id: conversation_id.into(),
            sender_id: sender_id.into(),
            kind,
            text: None,
            action_id: None,
            micronarrative: None,
            paired_with: None,
        }
    }

    pub fn text(conversation_id: &str, sender_id: &str, text: impl Into<String>) -> Self {
        Self {
            text: Some(text.into()),
            ..Self::base(conversation_id, sender_id, RecordKind::Text)
        }
    }

    pub fn action(conversation_id: &str, sender_id: &str, action_id: &str, caption: Caption) -> Self {
        Self {
            action_id: Some(action_id.into()),
            micronarrative: Some(caption),
            ..Self::base(conversation_id, sender_id, RecordKind::ActionWithNarrative)
        }
    }

    pub fn action_only(conversation_id: &str, sender_id: &str, action_id: &str) -> Self {
        Self {
            action_id: Some(action_id.into()),
            ..Self::base(conversation_id, sender_id, RecordKind::ActionOnlyStatus)
        }
    }

    pub fn dyadic(
        conversation_id: &str,
        sender_id: &str,
        action_id: &str,
        paired_with: RecordId,
        caption: Option<Caption>,
    ) -> Self {
        Self {
            action_id: Some(action_id.into()),
            micronarrative: caption,
            paired_with: Some(paired_with),
            ..Self::base(conversation_id, sender_id, RecordKind::DyadicExchange)
        }
    }

    pub fn with_text(mut self, text: impl Into<String>) -> Self {
        self.text = Some(text.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExchangeRecord {
    pub record_id: RecordId,
    pub conversation_id: String,
    pub sender_id: String,
    pub kind: RecordKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub micronarrative: Option<Caption>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paired_with: Option<RecordId>,
    pub timestamp: Millis,
}

impl ExchangeRecord {
    pub fn from_new(new: NewRecord, record_id: RecordId, timestamp: Millis) -> Self {
        Self {
            record_id,
            conversation_id: new.conversation_id,
            sender_id: new.sender_id,
            kind: new.kind,
            text: new.text,
            action_id: new.action_id,
            micronarrative: new.micronarrative,
            paired_with: new.paired_with,
            timestamp,
        }
    }
}

/// Everything a client needs to re-render a sent action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Replay {
    pub record_id: RecordId,
    pub action_id: String,
    pub micronarrative: Option<Caption>,
    pub timestamp: Millis,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paired_with: Option<RecordId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Page {
    pub records: Vec<ExchangeRecord>,
    /// Offset of the next page, absent on the last one.
    pub next_offset: Option<usize>,
}
