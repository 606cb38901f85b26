//! Users, contacts, dyads and the exchange log.
//!
//! Durable records go to one newline-delimited JSON file per conversation and
//! are synced to disk before `append` returns. `action_only_status` records
//! never touch disk: they live in a per-conversation buffer until their TTL
//! runs out, and only their id is remembered so replay can say why it fails.

mod record;

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{Clock, Millis};

pub use record::{Caption, ExchangeRecord, NewRecord, Page, RecordId, RecordKind, Replay};

pub const DEFAULT_EPHEMERAL_TTL_MS: Millis = 60_000;
pub const MAX_CAPTION_CHARS: usize = 200;
pub const MAX_TEXT_CHARS: usize = 4000;
pub const MAX_USER_ID_CHARS: usize = 64;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("invalid user id {0:?}: use 1-64 letters, digits, '.', '_' or '-'")]
    InvalidUserId(String),
    #[error("unknown user {0:?}")]
    UnknownUser(String),
    #[error("a user cannot add themselves as a contact")]
    SelfContact,
    #[error("a conversation needs two different members")]
    SelfConversation,
    #[error("unknown conversation {0:?}")]
    UnknownConversation(String),
    #[error("{user:?} is not a member of conversation {conversation:?}")]
    NotMember { user: String, conversation: String },
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("unknown record {0}")]
    UnknownRecord(RecordId),
    #[error("record {0} is text only and has no action to replay")]
    TextOnly(RecordId),
    #[error("record {0} is an ephemeral record and was never stored")]
    Ephemeral(RecordId),
    #[error("invalid relationship icon {0:?}")]
    InvalidIcon(String),
    #[error("corrupt log {path}:{line}: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
    #[error("storage i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct User {
    pub user_id: String,
    pub display_name: String,
    pub current_story_version: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum RelationshipIcon {
    Friend,
    Family,
    Partner,
    Custom(String),
}

impl fmt::Display for RelationshipIcon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RelationshipIcon::Friend => f.write_str("friend"),
            RelationshipIcon::Family => f.write_str("family"),
            RelationshipIcon::Partner => f.write_str("partner"),
            RelationshipIcon::Custom(token) => write!(f, "custom:{token}"),
        }
    }
}

impl FromStr for RelationshipIcon {
    type Err = StoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "friend" => Ok(Self::Friend),
            "family" => Ok(Self::Family),
            "partner" => Ok(Self::Partner),
            _ => match s.strip_prefix("custom:") {
                Some(token) if !token.trim().is_empty() && token.chars().count() <= 32 => {
                    Ok(Self::Custom(token.to_string()))
                }
                _ => Err(StoreError::InvalidIcon(s.to_string())),
            },
        }
    }
}

impl Serialize for RelationshipIcon {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RelationshipIcon {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contact {
    pub owner_id: String,
    pub peer_id: String,
    pub relationship_icon: RelationshipIcon,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    pub conversation_id: String,
    /// Sorted pair of member ids.
    pub members: [String; 2],
    pub created_at: Millis,
}

impl Conversation {
    pub fn is_member(&self, user_id: &str) -> bool {
        self.members.iter().any(|m| m == user_id)
    }

    pub fn partner_of(&self, user_id: &str) -> Option<&str> {
        match &self.members {
            [a, b] if a == user_id => Some(b),
            [a, b] if b == user_id => Some(a),
            _ => None,
        }
    }
}

/// The most recent move in a conversation, ephemeral ones included.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatestMove {
    pub record_id: RecordId,
    pub sender_id: String,
    pub kind: RecordKind,
    pub action_id: Option<String>,
    pub timestamp: Millis,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "entry", rename_all = "snake_case")]
enum MetaEntry {
    User(User),
    Contact(Contact),
    Conversation(Conversation),
}

#[derive(Default)]
struct Meta {
    users: BTreeMap<String, User>,
    contacts: BTreeMap<(String, String), Contact>,
    conversations: BTreeMap<String, Conversation>,
    by_pair: HashMap<[String; 2], String>,
    file: Option<File>,
}

impl Meta {
    fn apply(&mut self, entry: MetaEntry) {
        match entry {
            MetaEntry::User(u) => {
                self.users.insert(u.user_id.clone(), u);
            }
            MetaEntry::Contact(c) => {
                self.contacts.insert((c.owner_id.clone(), c.peer_id.clone()), c);
            }
            MetaEntry::Conversation(c) => {
                self.by_pair.insert(c.members.clone(), c.conversation_id.clone());
                self.conversations.insert(c.conversation_id.clone(), c);
            }
        }
    }

    fn write(&mut self, entry: MetaEntry) -> Result<(), StoreError> {
        if let Some(file) = &mut self.file {
            append_line(file, &entry)?;
        }
        self.apply(entry);
        Ok(())
    }

    fn conversation(&self, id: &str) -> Result<&Conversation, StoreError> {
        self.conversations
            .get(id)
            .ok_or_else(|| StoreError::UnknownConversation(id.to_string()))
    }

    fn require_member(&self, conversation_id: &str, user_id: &str) -> Result<&Conversation, StoreError> {
        let conv = self.conversation(conversation_id)?;
        if !conv.is_member(user_id) {
            return Err(StoreError::NotMember {
                user: user_id.to_string(),
                conversation: conversation_id.to_string(),
            });
        }
        Ok(conv)
    }
}

#[derive(Default)]
struct ConversationLog {
    durable: Vec<ExchangeRecord>,
    ephemeral: VecDeque<(ExchangeRecord, Millis)>,
    last_timestamp: Millis,
    latest: Option<LatestMove>,
    last_action_by: HashMap<String, String>,
    file: Option<File>,
}

impl ConversationLog {
    fn purge(&mut self, now: Millis) {
        while self.ephemeral.front().is_some_and(|(_, expires)| *expires <= now) {
            self.ephemeral.pop_front();
        }
    }

    fn observe(&mut self, record: &ExchangeRecord) {
        self.last_timestamp = self.last_timestamp.max(record.timestamp);
        if let Some(action) = &record.action_id {
            self.last_action_by.insert(record.sender_id.clone(), action.clone());
        }
        self.latest = Some(LatestMove {
            record_id: record.record_id,
            sender_id: record.sender_id.clone(),
            kind: record.kind,
            action_id: record.action_id.clone(),
            timestamp: record.timestamp,
        });
    }
}

#[derive(Debug, Clone)]
struct Location {
    conversation_id: String,
    durable: bool,
}

pub struct ConversationStore {
    dir: Option<PathBuf>,
    clock: Arc<dyn Clock>,
    ephemeral_ttl_ms: Millis,
    meta: RwLock<Meta>,
    logs: RwLock<HashMap<String, Arc<Mutex<ConversationLog>>>>,
    locations: RwLock<HashMap<RecordId, Location>>,
    next_id: AtomicU64,
}

impl fmt::Debug for ConversationStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConversationStore")
            .field("dir", &self.dir)
            .field("ephemeral_ttl_ms", &self.ephemeral_ttl_ms)
            .finish_non_exhaustive()
    }
}

pub fn validate_user_id(user_id: &str) -> Result<(), StoreError> {
    let ok = !user_id.is_empty()
        && user_id.chars().count() <= MAX_USER_ID_CHARS
        && user_id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'));
    if ok {
        Ok(())
    } else {
        Err(StoreError::InvalidUserId(user_id.to_string()))
    }
}

fn append_line<T: Serialize>(file: &mut File, value: &T) -> Result<(), StoreError> {
    let mut line = serde_json::to_string(value).map_err(std::io::Error::other)?;
    line.push('\n');
    file.write_all(line.as_bytes())?;
    file.sync_data()?;
    Ok(())
}

/// Reads a JSONL file. A torn final line (no trailing newline, unparsable) is
/// an unacknowledged write and is dropped; anything else unparsable is an error.
fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    let mut file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut text = String::new();
    file.read_to_string(&mut text)?;
    let ends_clean = text.is_empty() || text.ends_with('\n');
    let lines: Vec<&str> = text.lines().collect();
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(v) => out.push(v),
            Err(_) if i + 1 == lines.len() && !ends_clean => {}
            Err(e) => {
                return Err(StoreError::Corrupt {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}

/// Opens a log for appending, cutting off a torn tail first.
fn open_append(path: &Path) -> Result<File, StoreError> {
    let mut file = OpenOptions::new().create(true).read(true).append(true).open(path)?;
    let mut reader = BufReader::new(&file);
    let mut clean_len = 0u64;
    let mut line = String::new();
    loop {
        line.clear();
        let n = reader.read_line(&mut line)?;
        if n == 0 {
            break;
        }
        if line.ends_with('\n') {
            clean_len += n as u64;
        }
    }
    drop(reader);
    if clean_len < file.metadata()?.len() {
        file.set_len(clean_len)?;
        file.seek(SeekFrom::End(0))?;
    }
    Ok(file)
}

impl ConversationStore {
    pub fn in_memory(clock: Arc<dyn Clock>, ephemeral_ttl_ms: Millis) -> Self {
        Self {
            dir: None,
            clock,
            ephemeral_ttl_ms,
            meta: RwLock::new(Meta::default()),
            logs: RwLock::new(HashMap::new()),
            locations: RwLock::new(HashMap::new()),
            next_id: AtomicU64::new(1),
        }
    }

    /// Opens (or creates) a store under `dir`, rebuilding the index from the logs.
    pub fn open(dir: impl AsRef<Path>, clock: Arc<dyn Clock>, ephemeral_ttl_ms: Millis) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(dir.join("conversations"))?;
        let meta_path = dir.join("meta.jsonl");
        let mut meta = Meta::default();
        for entry in read_jsonl::<MetaEntry>(&meta_path)? {
            meta.apply(entry);
        }
        meta.file = Some(open_append(&meta_path)?);

        let mut logs = HashMap::new();
        let mut locations = HashMap::new();
        let mut max_id = 0;
        for conv_id in meta.conversations.keys() {
            let path = Self::log_path(&dir, conv_id);
            let mut log = ConversationLog::default();
            for record in read_jsonl::<ExchangeRecord>(&path)? {
                max_id = max_id.max(record.record_id);
                locations.insert(
                    record.record_id,
                    Location { conversation_id: conv_id.clone(), durable: true },
                );
                log.observe(&record);
                log.durable.push(record);
            }
            log.file = Some(open_append(&path)?);
            logs.insert(conv_id.clone(), Arc::new(Mutex::new(log)));
        }
        Ok(Self {
            dir: Some(dir),
            clock,
            ephemeral_ttl_ms,
            meta: RwLock::new(meta),
            logs: RwLock::new(logs),
            locations: RwLock::new(locations),
            next_id: AtomicU64::new(max_id + 1),
        })
    }

    fn log_path(dir: &Path, conversation_id: &str) -> PathBuf {
        dir.join("conversations").join(format!("{conversation_id}.jsonl"))
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn ephemeral_ttl_ms(&self) -> Millis {
        self.ephemeral_ttl_ms
    }

    pub fn now_ms(&self) -> Millis {
        self.clock.now_ms()
    }

    fn meta(&self) -> std::sync::RwLockReadGuard<'_, Meta> {
        self.meta.read().unwrap_or_else(|e| e.into_inner())
    }

    fn meta_mut(&self) -> std::sync::RwLockWriteGuard<'_, Meta> {
        self.meta.write().unwrap_or_else(|e| e.into_inner())
    }

    fn log(&self, conversation_id: &str) -> Result<Arc<Mutex<ConversationLog>>, StoreError> {
        self.logs
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(conversation_id)
            .cloned()
            .ok_or_else(|| StoreError::UnknownConversation(conversation_id.to_string()))
    }

    /// Returns the user, creating it on first sight.
    pub fn ensure_user(&self, user_id: &str, display_name: Option<&str>) -> Result<User, StoreError> {
        validate_user_id(user_id)?;
        let mut meta = self.meta_mut();
        if let Some(u) = meta.users.get(user_id) {
            return Ok(u.clone());
        }
        let user = User {
            user_id: user_id.to_string(),
            display_name: display_name.unwrap_or(user_id).to_string(),
            current_story_version: 0,
        };
        meta.write(MetaEntry::User(user.clone()))?;
        Ok(user)
    }

    pub fn user(&self, user_id: &str) -> Option<User> {
        self.meta().users.get(user_id).cloned()
    }

    pub fn users(&self) -> Vec<User> {
        self.meta().users.values().cloned().collect()
    }

    pub fn set_story_version(&self, user_id: &str, version: u64) -> Result<User, StoreError> {
        let mut meta = self.meta_mut();
        let mut user = meta
            .users
            .get(user_id)
            .cloned()
            .ok_or_else(|| StoreError::UnknownUser(user_id.to_string()))?;
        user.current_story_version = version;
        meta.write(MetaEntry::User(user.clone()))?;
        Ok(user)
    }

    /// Adds or updates the single contact entry for `owner → peer`.
    pub fn set_contact(&self, owner_id: &str, peer_id: &str, icon: RelationshipIcon) -> Result<Contact, StoreError> {
        if owner_id == peer_id {
            return Err(StoreError::SelfContact);
        }
        let mut meta = self.meta_mut();
        for id in [owner_id, peer_id] {
            if !meta.users.contains_key(id) {
                return Err(StoreError::UnknownUser(id.to_string()));
            }
        }
        let contact = Contact {
            owner_id: owner_id.to_string(),
            peer_id: peer_id.to_string(),
            relationship_icon: icon,
        };
        meta.write(MetaEntry::Contact(contact.clone()))?;
        Ok(contact)
    }

    pub fn contacts_of(&self, owner_id: &str) -> Vec<Contact> {
        self.meta()
            .contacts
            .values()
            .filter(|c| c.owner_id == owner_id)
            .cloned()
            .collect()
    }

    /// Returns the dyad of `a` and `b`, creating it if needed.
    pub fn open_conversation(&self, a: &str, b: &str) -> Result<Conversation, StoreError> {
        if a == b {
            return Err(StoreError::SelfConversation);
        }
        let mut members = [a.to_string(), b.to_string()];
        members.sort();
        let mut meta = self.meta_mut();
        for id in &members {
            if !meta.users.contains_key(id) {
                return Err(StoreError::UnknownUser(id.clone()));
            }
        }
        if let Some(id) = meta.by_pair.get(&members) {
            return Ok(meta.conversations[id].clone());
        }
        let conversation = Conversation {
            conversation_id: format!("conv-{}", meta.conversations.len() + 1),
            members,
            created_at: self.clock.now_ms(),
        };
        let mut log = ConversationLog::default();
        if let Some(dir) = &self.dir {
            log.file = Some(open_append(&Self::log_path(dir, &conversation.conversation_id))?);
        }
        meta.write(MetaEntry::Conversation(conversation.clone()))?;
        self.logs
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(conversation.conversation_id.clone(), Arc::new(Mutex::new(log)));
        Ok(conversation)
    }

    pub fn conversation(&self, conversation_id: &str) -> Result<Conversation, StoreError> {
        self.meta().conversation(conversation_id).cloned()
    }

    pub fn conversations_of(&self, user_id: &str) -> Vec<Conversation> {
        self.meta()
            .conversations
            .values()
            .filter(|c| c.is_member(user_id))
            .cloned()
            .collect()
    }

    pub fn require_member(&self, conversation_id: &str, user_id: &str) -> Result<Conversation, StoreError> {
        self.meta().require_member(conversation_id, user_id).cloned()
    }

    fn check_shape(new: &NewRecord) -> Result<(), StoreError> {
        let bad = |m: &str| Err(StoreError::InvalidRecord(format!("{}: {m}", new.kind.as_str())));
        if let Some(text) = &new.text {
            if text.chars().count() > MAX_TEXT_CHARS {
                return bad("text exceeds 4000 characters");
            }
        }
        if let Some(caption) = &new.micronarrative {
            if caption.text.trim().is_empty() {
                return bad("micronarrative must not be empty");
            }
            if caption.text.chars().count() > MAX_CAPTION_CHARS {
                return bad("micronarrative exceeds 200 characters");
            }
        }
        if new.action_id.as_deref().is_some_and(|a| a.is_empty()) {
            return bad("action_id must not be empty");
        }
        match new.kind {
            RecordKind::Text => {
                if new.text.as_deref().is_none_or(|t| t.trim().is_empty()) {
                    return bad("text is required");
                }
                if new.action_id.is_some() || new.micronarrative.is_some() {
                    return bad("text records carry no action or micronarrative");
                }
            }
            RecordKind::ActionWithNarrative => {
                if new.action_id.is_none() || new.micronarrative.is_none() {
                    return bad("action_id and micronarrative are required");
                }
            }
            RecordKind::ActionOnlyStatus => {
                if new.action_id.is_none() {
                    return bad("action_id is required");
                }
                if new.micronarrative.is_some() {
                    return bad("an action-only status carries no micronarrative");
                }
            }
            RecordKind::DyadicExchange => {
                if new.action_id.is_none() || new.paired_with.is_none() {
                    return bad("action_id and paired_with are required");
                }
            }
        }
        if new.kind != RecordKind::DyadicExchange && new.paired_with.is_some() {
            return bad("only dyadic exchanges pair with another record");
        }
        Ok(())
    }

    /// Appends a record. Durable kinds are on disk when this returns.
    pub fn append(&self, new: NewRecord) -> Result<ExchangeRecord, StoreError> {
        Self::check_shape(&new)?;
        self.require_member(&new.conversation_id, &new.sender_id)?;
        let log = self.log(&new.conversation_id)?;
        let mut log = log.lock().unwrap_or_else(|e| e.into_inner());

        if let Some(partner_record) = new.paired_with {
            let target = log
                .durable
                .iter()
                .find(|r| r.record_id == partner_record)
                .ok_or_else(|| {
                    StoreError::InvalidRecord(format!(
                        "paired_with {partner_record} is not a durable record of this conversation"
                    ))
                })?;
            if target.sender_id == new.sender_id {
                return Err(StoreError::InvalidRecord(
                    "a dyadic exchange pairs with the other member's action".into(),
                ));
            }
            if target.action_id.is_none() {
                return Err(StoreError::InvalidRecord(format!(
                    "paired_with {partner_record} has no action"
                )));
            }
        }

        let now = self.clock.now_ms();
        let timestamp = now.max(log.last_timestamp);
        let record_id = self.next_id.fetch_add(1, Ordering::SeqCst);
        let durable = new.kind.is_durable();
        let record = ExchangeRecord::from_new(new, record_id, timestamp);
        if durable {
            if let Some(file) = &mut log.file {
                append_line(file, &record)?;
            }
            log.durable.push(record.clone());
        } else {
            log.purge(now);
            log.ephemeral.push_back((record.clone(), now + self.ephemeral_ttl_ms));
        }
        log.observe(&record);
        self.locations.write().unwrap_or_else(|e| e.into_inner()).insert(
            record_id,
            Location { conversation_id: record.conversation_id.clone(), durable },
        );
        Ok(record)
    }

    /// Durable records in thread order, `limit` at a time from `offset`.
    pub fn history(&self, conversation_id: &str, requester: &str, offset: usize, limit: usize) -> Result<Page, StoreError> {
        self.require_member(conversation_id, requester)?;
        let log = self.log(conversation_id)?;
        let log = log.lock().unwrap_or_else(|e| e.into_inner());
        let limit = limit.max(1);
        let end = offset.saturating_add(limit).min(log.durable.len());
        let records = log.durable.get(offset.min(end)..end).unwrap_or_default().to_vec();
        let next_offset = (end < log.durable.len()).then_some(end);
        Ok(Page { records, next_offset })
    }

    /// Durable records with ids greater than `after` (all of them for `None`).
    pub fn records_after(&self, conversation_id: &str, requester: &str, after: Option<RecordId>) -> Result<Vec<ExchangeRecord>, StoreError> {
        self.require_member(conversation_id, requester)?;
        let log = self.log(conversation_id)?;
        let log = log.lock().unwrap_or_else(|e| e.into_inner());
        let after = after.unwrap_or(0);
        Ok(log.durable.iter().filter(|r| r.record_id > after).cloned().collect())
    }

    /// The last `n` durable records, oldest first.
    pub fn recent(&self, conversation_id: &str, n: usize) -> Result<Vec<ExchangeRecord>, StoreError> {
        let log = self.log(conversation_id)?;
        let log = log.lock().unwrap_or_else(|e| e.into_inner());
        let start = log.durable.len().saturating_sub(n);
        Ok(log.durable[start..].to_vec())
    }

    /// Action-only statuses still inside their TTL.
    pub fn live_statuses(&self, conversation_id: &str, requester: &str) -> Result<Vec<ExchangeRecord>, StoreError> {
        self.require_member(conversation_id, requester)?;
        let log = self.log(conversation_id)?;
        let mut log = log.lock().unwrap_or_else(|e| e.into_inner());
        log.purge(self.clock.now_ms());
        Ok(log.ephemeral.iter().map(|(r, _)| r.clone()).collect())
    }

    pub fn latest_move(&self, conversation_id: &str) -> Result<Option<LatestMove>, StoreError> {
        let log = self.log(conversation_id)?;
        let log = log.lock().unwrap_or_else(|e| e.into_inner());
        Ok(log.latest.clone())
    }

    /// Most recent action sent by `user_id` here, ephemeral or durable.
    pub fn last_action_of(&self, conversation_id: &str, user_id: &str) -> Result<Option<String>, StoreError> {
        let log = self.log(conversation_id)?;
        let log = log.lock().unwrap_or_else(|e| e.into_inner());
        Ok(log.last_action_by.get(user_id).cloned())
    }

    pub fn replay(&self, record_id: RecordId, requester: &str) -> Result<Replay, StoreError> {
        let location = self
            .locations
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(&record_id)
            .cloned()
            .ok_or(StoreError::UnknownRecord(record_id))?;
        self.require_member(&location.conversation_id, requester)?;
        if !location.durable {
            return Err(StoreError::Ephemeral(record_id));
        }
        let log = self.log(&location.conversation_id)?;
        let log = log.lock().unwrap_or_else(|e| e.into_inner());
        let record = log
            .durable
            .iter()
            .find(|r| r.record_id == record_id)
            .ok_or(StoreError::UnknownRecord(record_id))?;
        let action_id = record.action_id.clone().ok_or(StoreError::TextOnly(record_id))?;
        Ok(Replay {
            record_id,
            action_id,
            micronarrative: record.micronarrative.clone(),
            timestamp: record.timestamp,
            paired_with: record.paired_with,
        })
    }

    /// The full durable thread, for operators.
    pub fn export(&self, conversation_id: &str) -> Result<Vec<ExchangeRecord>, StoreError> {
        let log = self.log(conversation_id)?;
        let log = log.lock().unwrap_or_else(|e| e.into_inner());
        Ok(log.durable.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;

    fn store() -> (ConversationStore, ManualClock, String) {
        let clock = ManualClock::new(1_000);
        let store = ConversationStore::in_memory(Arc::new(clock.clone()), DEFAULT_EPHEMERAL_TTL_MS);
        store.ensure_user("alice", None).unwrap();
        store.ensure_user("bob", None).unwrap();
        let conv = store.open_conversation("alice", "bob").unwrap().conversation_id;
        (store, clock, conv)
    }

    fn caption(t: &str) -> Caption {
        Caption::new(t, false)
    }

    #[test]
    fn fresh_conversation_is_empty() {
        let (s, _, c) = store();
        assert!(s.history(&c, "alice", 0, 10).unwrap().records.is_empty());
    }

    #[test]
    fn durable_and_ephemeral_counts() {
        let (s, clock, c) = store();
        s.append(NewRecord::action(&c, "alice", "hug", caption("I wrap you in a warm hug"))).unwrap();
        s.append(NewRecord::action_only(&c, "bob", "wave-back")).unwrap();
        s.append(NewRecord::text(&c, "bob", "hi")).unwrap();
        s.append(NewRecord::action_only(&c, "alice", "yawn")).unwrap();
        s.append(NewRecord::text(&c, "alice", "night")).unwrap();
        assert_eq!(s.history(&c, "bob", 0, 100).unwrap().records.len(), 3);
        assert_eq!(s.live_statuses(&c, "bob").unwrap().len(), 2);
        clock.advance(DEFAULT_EPHEMERAL_TTL_MS);
        assert!(s.live_statuses(&c, "bob").unwrap().is_empty());
        assert_eq!(s.history(&c, "bob", 0, 100).unwrap().records.len(), 3);
    }

    #[test]
    fn pagination_is_stable() {
        let (s, _, c) = store();
        for t in ["a", "b", "c"] {
            s.append(NewRecord::text(&c, "alice", t)).unwrap();
        }
        let p1 = s.history(&c, "alice", 0, 2).unwrap();
        assert_eq!(p1.records.len(), 2);
        let p2 = s.history(&c, "alice", p1.next_offset.unwrap(), 2).unwrap();
        assert_eq!(p2.records.len(), 1);
        assert_eq!(p2.next_offset, None);
        let mut ids: Vec<_> = p1.records.iter().chain(&p2.records).map(|r| r.record_id).collect();
        ids.dedup();
        assert_eq!(ids.len(), 3);
        assert!(s.history(&c, "alice", 10, 2).unwrap().records.is_empty());
    }

    #[test]
    fn replay_semantics() {
        let (s, clock, c) = store();
        let hug = s.append(NewRecord::action(&c, "alice", "hug", caption("warm"))).unwrap();
        let r1 = s.replay(hug.record_id, "bob").unwrap();
        assert_eq!(r1.action_id, "hug");
        assert_eq!(r1.micronarrative, Some(caption("warm")));
        assert_eq!(s.replay(hug.record_id, "alice").unwrap(), r1);

        let status = s.append(NewRecord::action_only(&c, "alice", "yawn")).unwrap();
        clock.advance(DEFAULT_EPHEMERAL_TTL_MS + 1);
        let err = s.replay(status.record_id, "bob").unwrap_err();
        assert!(matches!(err, StoreError::Ephemeral(_)));
        assert!(err.to_string().contains("ephemeral record"));

        let text = s.append(NewRecord::text(&c, "alice", "hi")).unwrap();
        assert!(matches!(s.replay(text.record_id, "bob"), Err(StoreError::TextOnly(_))));
        assert!(matches!(s.replay(999, "bob"), Err(StoreError::UnknownRecord(999))));
    }

    #[test]
    fn authorization() {
        let (s, _, c) = store();
        s.ensure_user("mallory", None).unwrap();
        let hug = s.append(NewRecord::action(&c, "alice", "hug", caption("x"))).unwrap();
        assert!(matches!(s.history(&c, "mallory", 0, 5), Err(StoreError::NotMember { .. })));
        assert!(matches!(s.replay(hug.record_id, "mallory"), Err(StoreError::NotMember { .. })));
        assert!(matches!(
            s.append(NewRecord::text(&c, "mallory", "hey")),
            Err(StoreError::NotMember { .. })
        ));
    }

    #[test]
    fn shape_invariants() {
        let (s, _, c) = store();
        let mut r = NewRecord::text(&c, "alice", "hi");
        r.action_id = Some("hug".into());
        assert!(s.append(r).is_err());
        let mut r = NewRecord::action(&c, "alice", "hug", caption("x"));
        r.micronarrative = None;
        assert!(s.append(r).is_err());
        let mut r = NewRecord::action_only(&c, "alice", "hug");
        r.micronarrative = Some(caption("x"));
        assert!(s.append(r).is_err());
        assert!(s.append(NewRecord::action(&c, "alice", "hug", caption(&"x".repeat(201)))).is_err());
        assert!(s.append(NewRecord::text(&c, "alice", "  ")).is_err());
        assert!(s.history(&c, "alice", 0, 10).unwrap().records.is_empty());
    }

    #[test]
    fn dyadic_pairing() {
        let (s, _, c) = store();
        let heart = s.append(NewRecord::action(&c, "alice", "throw-heart", caption("for you"))).unwrap();
        let catch = s
            .append(NewRecord::dyadic(&c, "bob", "catch-heart", heart.record_id, None))
            .unwrap();
        let replay = s.replay(catch.record_id, "alice").unwrap();
        assert_eq!(replay.paired_with, Some(heart.record_id));
        assert_eq!(s.replay(heart.record_id, "alice").unwrap().action_id, "throw-heart");

        // own record, text record, ephemeral record and unknown ids are rejected
        assert!(s.append(NewRecord::dyadic(&c, "alice", "hug", heart.record_id, None)).is_err());
        let text = s.append(NewRecord::text(&c, "alice", "hi")).unwrap();
        assert!(s.append(NewRecord::dyadic(&c, "bob", "hug", text.record_id, None)).is_err());
        let status = s.append(NewRecord::action_only(&c, "alice", "cry")).unwrap();
        assert!(s.append(NewRecord::dyadic(&c, "bob", "pat-shoulder", status.record_id, None)).is_err());
        assert!(s.append(NewRecord::dyadic(&c, "bob", "hug", 12345, None)).is_err());
    }

    #[test]
    fn timestamps_never_decrease() {
        let (s, clock, c) = store();
        clock.set(5_000);
        let a = s.append(NewRecord::text(&c, "alice", "a")).unwrap();
        clock.set(4_000);
        let b = s.append(NewRecord::text(&c, "bob", "b")).unwrap();
        assert!(b.timestamp >= a.timestamp);
        assert!(b.record_id > a.record_id);
    }

    #[test]
    fn users_contacts_conversations() {
        let (s, _, c) = store();
        assert!(matches!(s.ensure_user("bad id", None), Err(StoreError::InvalidUserId(_))));
        assert_eq!(s.open_conversation("bob", "alice").unwrap().conversation_id, c);
        assert!(matches!(s.open_conversation("bob", "bob"), Err(StoreError::SelfConversation)));
        assert!(matches!(s.set_contact("bob", "bob", RelationshipIcon::Friend), Err(StoreError::SelfContact)));
        s.set_contact("alice", "bob", RelationshipIcon::Friend).unwrap();
        s.set_contact("alice", "bob", "custom:cat".parse().unwrap()).unwrap();
        let contacts = s.contacts_of("alice");
        assert_eq!(contacts.len(), 1);
        assert_eq!(contacts[0].relationship_icon, RelationshipIcon::Custom("cat".into()));
        assert!("custom:".parse::<RelationshipIcon>().is_err());
        assert_eq!(s.conversation(&c).unwrap().partner_of("alice"), Some("bob"));
    }

    #[test]
    fn latest_move_and_last_action() {
        let (s, _, c) = store();
        assert_eq!(s.latest_move(&c).unwrap(), None);
        s.append(NewRecord::action_only(&c, "alice", "cry")).unwrap();
        s.append(NewRecord::text(&c, "alice", "sigh")).unwrap();
        let latest = s.latest_move(&c).unwrap().unwrap();
        assert_eq!(latest.sender_id, "alice");
        assert_eq!(latest.kind, RecordKind::Text);
        assert_eq!(s.last_action_of(&c, "alice").unwrap().as_deref(), Some("cry"));
        assert_eq!(s.last_action_of(&c, "bob").unwrap(), None);
    }
}
