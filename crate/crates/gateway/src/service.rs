//! Request handling shared by the HTTP routes and the event stream.

use std::collections::{HashMap, VecDeque};
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use dyad_core::clock::{Clock, SystemClock};
use dyad_core::interpreter::{content_hash, ProviderKind, TextInterpreter};
use dyad_core::library::ActionLibrary;
use dyad_core::narrative::{apply_user_edit, GeneratedBy, Micronarrative, Narrator, StoryBook, TagSelection, TagSet};
use dyad_core::preference::PreferenceStore;
use dyad_core::recommend::{ConversationState, RecommendError, RecommendationContext, Recommender};
use dyad_core::store::{
    Caption, Contact, Conversation, ConversationStore, ExchangeRecord, NewRecord, Page, RecordId, RecordKind,
    RelationshipIcon, Replay,
};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tokio::sync::mpsc::UnboundedSender;

use crate::config::GatewayConfig;
use crate::protocol::{
    AuthRequest, ChatMessage, EmnUpdate, Envelope, ErrorBody, Event, ExchangeStatus, Outcome, PuppetAction,
    RecommendRequest, RecommendResponse,
};
use crate::GatewayError;

const IDEMPOTENCE_CAPACITY: usize = 50_000;
pub const DEFAULT_PAGE_SIZE: usize = 50;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoginRequest {
    pub user_id: String,
    #[serde(default)]
    pub display_name: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoginResponse {
    pub token: String,
    pub user_id: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NarrateRequest {
    pub action_id: String,
    #[serde(default)]
    pub conversation_id: Option<String>,
    /// Defaults to the user's saved tag selection.
    #[serde(default)]
    pub tags: Option<Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegenerateRequest {
    pub previous: Micronarrative,
    #[serde(default)]
    pub conversation_id: Option<String>,
    #[serde(default)]
    pub tags: Option<Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditRequest {
    pub previous: Micronarrative,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NarrateResponse {
    pub micronarrative: Micronarrative,
    pub degraded: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactRequest {
    pub peer_id: String,
    pub relationship_icon: RelationshipIcon,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConversationRequest {
    pub peer_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagsResponse {
    pub story_version: u64,
    pub tags: TagSet,
    pub degraded: bool,
}

/// Outgoing frame queue of one connected socket.
#[derive(Debug, Clone)]
pub struct SessionHandle {
    pub id: u64,
    pub user_id: String,
    pub tx: UnboundedSender<Envelope>,
}

#[derive(Default)]
struct ReplyCache {
    replies: HashMap<(String, String), Envelope>,
    order: VecDeque<(String, String)>,
}

impl ReplyCache {
    fn get(&self, key: &(String, String)) -> Option<Envelope> {
        self.replies.get(key).cloned()
    }

    fn put(&mut self, key: (String, String), reply: Envelope) {
        if self.replies.insert(key.clone(), reply).is_none() {
            self.order.push_back(key);
        }
        while self.order.len() > IDEMPOTENCE_CAPACITY {
            if let Some(old) = self.order.pop_front() {
                self.replies.remove(&old);
            }
        }
    }
}

type LockMap = Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>;

fn lock_for(map: &LockMap, key: &str) -> Arc<tokio::sync::Mutex<()>> {
    map.lock()
        .unwrap_or_else(|e| e.into_inner())
        .entry(key.to_string())
        .or_default()
        .clone()
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

fn parse<T: serde::de::DeserializeOwned>(payload: Value) -> Result<T, GatewayError> {
    serde_json::from_value(payload).map_err(|e| GatewayError::Schema(e.to_string()))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, GatewayError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| GatewayError::Internal(e.to_string()))
}

pub struct Gateway {
    config: GatewayConfig,
    clock: Arc<dyn Clock>,
    store: Arc<ConversationStore>,
    library: RwLock<Arc<ActionLibrary>>,
    interpreter: TextInterpreter,
    narrator: Narrator,
    preferences: Mutex<PreferenceStore>,
    preferences_path: Option<PathBuf>,
    stories: Mutex<StoryBook>,
    proposals: Mutex<HashMap<(String, u64), TagSet>>,
    tokens: RwLock<HashMap<String, String>>,
    sessions: RwLock<HashMap<u64, SessionHandle>>,
    next_session: AtomicU64,
    conversation_locks: LockMap,
    user_locks: LockMap,
    replies: Mutex<ReplyCache>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway").field("config", &self.config).finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn from_config(config: GatewayConfig) -> Result<Self, GatewayError> {
        Self::with_clock(config, Arc::new(SystemClock))
    }

    pub fn with_clock(mut config: GatewayConfig, clock: Arc<dyn Clock>) -> Result<Self, GatewayError> {
        config.validate()?;
        let library = match &config.library_path {
            Some(path) => ActionLibrary::from_path(path)?,
            None => ActionLibrary::canonical(),
        };
        let ttl_ms = config.ephemeral_ttl_secs.saturating_mul(1000);
        let (store, stories, preferences, preferences_path) = match &config.data_dir {
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                if config.provider.cache_path.is_none() {
                    config.provider.cache_path = Some(dir.join("embeddings.jsonl"));
                }
                let prefs_path = dir.join("preferences.json");
                let prefs = match std::fs::read_to_string(&prefs_path) {
                    Ok(text) => serde_json::from_str(&text)
                        .map_err(|e| GatewayError::Config(format!("{}: {e}", prefs_path.display())))?,
                    Err(e) if e.kind() == std::io::ErrorKind::NotFound => PreferenceStore::new(),
                    Err(e) => return Err(e.into()),
                };
                (
                    ConversationStore::open(dir, clock.clone(), ttl_ms)?,
                    StoryBook::open(dir.join("stories.jsonl"))?,
                    prefs,
                    Some(prefs_path),
                )
            }
            None => (
                ConversationStore::in_memory(clock.clone(), ttl_ms),
                StoryBook::in_memory(),
                PreferenceStore::new(),
                None,
            ),
        };
        let interpreter = TextInterpreter::from_config(&config.provider, library.embedding_dimension())?;
        let narrator = Narrator::with_provider(interpreter.provider().clone());
        Ok(Self {
            config,
            clock,
            store: Arc::new(store),
            library: RwLock::new(Arc::new(library)),
            interpreter,
            narrator,
            preferences: Mutex::new(preferences),
            preferences_path,
            stories: Mutex::new(stories),
            proposals: Mutex::default(),
            tokens: RwLock::default(),
            sessions: RwLock::default(),
            next_session: AtomicU64::new(1),
            conversation_locks: Mutex::default(),
            user_locks: Mutex::default(),
            replies: Mutex::default(),
        })
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn store(&self) -> &ConversationStore {
        &self.store
    }

    pub fn library(&self) -> Arc<ActionLibrary> {
        self.library.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn now_ms(&self) -> u64 {
        self.clock.now_ms()
    }

    fn degraded_possible(&self) -> bool {
        self.interpreter.kind() == ProviderKind::Remote
    }

    // sessions and auth

    pub fn login(&self, req: &LoginRequest) -> Result<LoginResponse, GatewayError> {
        self.store.ensure_user(&req.user_id, req.display_name.as_deref())?;
        let token = uuid::Uuid::new_v4().simple().to_string();
        self.tokens
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(token.clone(), req.user_id.clone());
        Ok(LoginResponse { token, user_id: req.user_id.clone() })
    }

    pub fn authenticate(&self, token: &str) -> Result<String, GatewayError> {
        self.tokens
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(token)
            .cloned()
            .ok_or(GatewayError::Unauthenticated)
    }

    pub(crate) fn register_session(&self, user_id: &str, tx: UnboundedSender<Envelope>) -> SessionHandle {
        let handle = SessionHandle {
            id: self.next_session.fetch_add(1, Ordering::SeqCst),
            user_id: user_id.to_string(),
            tx,
        };
        self.sessions
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(handle.id, handle.clone());
        handle
    }

    pub(crate) fn unregister_session(&self, id: u64) {
        self.sessions.write().unwrap_or_else(|e| e.into_inner()).remove(&id);
    }

    fn push_to_users(&self, users: &[&str], envelope: &Envelope, skip_session: Option<u64>) {
        let sessions = self.sessions.read().unwrap_or_else(|e| e.into_inner());
        for s in sessions.values() {
            if users.contains(&s.user_id.as_str()) && Some(s.id) != skip_session {
                let _ = s.tx.send(envelope.clone());
            }
        }
    }

    fn envelope(&self, event: Event, request_id: Option<String>, payload: impl Serialize) -> Envelope {
        Envelope::new(event, request_id, payload, self.now_ms())
    }

    pub fn error_envelope(&self, request_id: Option<String>, err: &GatewayError) -> Envelope {
        self.envelope(
            Event::Error,
            request_id,
            ErrorBody { code: err.code().to_string(), message: err.to_string() },
        )
    }

    // users, contacts, conversations

    pub fn open_conversation(&self, user: &str, peer: &str) -> Result<Conversation, GatewayError> {
        Ok(self.store.open_conversation(user, peer)?)
    }

    pub fn conversations(&self, user: &str) -> Vec<Conversation> {
        self.store.conversations_of(user)
    }

    pub fn set_contact(&self, user: &str, req: ContactRequest) -> Result<Contact, GatewayError> {
        Ok(self.store.set_contact(user, &req.peer_id, req.relationship_icon)?)
    }

    pub fn contacts(&self, user: &str) -> Vec<Contact> {
        self.store.contacts_of(user)
    }

    pub fn history(&self, user: &str, conversation_id: &str, offset: usize, limit: usize) -> Result<Page, GatewayError> {
        Ok(self.store.history(conversation_id, user, offset, limit)?)
    }

    pub fn replay(&self, user: &str, record_id: RecordId) -> Result<Replay, GatewayError> {
        Ok(self.store.replay(record_id, user)?)
    }

    // recommendations

    fn context_for(&self, user: &str, req: &RecommendRequest) -> Result<RecommendationContext, GatewayError> {
        let conv = self.store.require_member(&req.conversation_id, user)?;
        let partner = conv.partner_of(user).unwrap_or_default().to_string();
        let latest = self.store.latest_move(&req.conversation_id)?;
        let partner_last_action = self
            .store
            .last_action_of(&req.conversation_id, &partner)?
            .filter(|a| self.library().contains(a));
        let idle_ms = self.config.idle_after_secs.saturating_mul(1000);
        let conversation_state = match &latest {
            None => ConversationState::Opening,
            Some(m) if self.now_ms().saturating_sub(m.timestamp) > idle_ms => ConversationState::Idle,
            Some(m) if m.sender_id == partner && partner_last_action.is_some() => ConversationState::PartnerActedLast,
            Some(m) if m.sender_id == partner => ConversationState::Opening,
            Some(_) => ConversationState::SelfActedLast,
        };
        let seed = req.seed.unwrap_or_else(|| {
            let basis = format!(
                "{user}\n{}\n{}",
                req.conversation_id,
                latest.as_ref().map_or(0, |m| m.record_id)
            );
            u64::from_str_radix(&content_hash(&basis)[..16], 16).unwrap_or(0)
        });
        Ok(RecommendationContext {
            user_id: user.to_string(),
            draft_text: req.draft_text.clone(),
            partner_last_action,
            conversation_state,
            seed,
        })
    }

    pub async fn recommend(&self, user: &str, req: RecommendRequest) -> Result<RecommendResponse, GatewayError> {
        let ctx = self.context_for(user, &req)?;
        let library = self.library();
        let prefs = lock(&self.preferences).clone();
        let primary = Recommender::new(self.config.weights, self.interpreter.clone());
        let remote = self.degraded_possible();
        let job_ctx = ctx.clone();
        let (actions, degraded) = blocking(move || match primary.recommend(&job_ctx, &library, &prefs) {
            Err(RecommendError::Provider(_)) if remote => {
                let fallback = Recommender::new(primary.weights, primary.interpreter().offline_fallback());
                fallback.recommend(&job_ctx, &library, &prefs).map(|r| (r, true))
            }
            other => other.map(|r| (r, false)),
        })
        .await??;
        Ok(RecommendResponse {
            conversation_id: req.conversation_id,
            actions,
            conversation_state: ctx.conversation_state,
            partner_last_action: ctx.partner_last_action,
            seed: ctx.seed,
            degraded,
        })
    }

    pub fn record_outcome(&self, user: &str, outcome: &Outcome) -> Result<(), GatewayError> {
        let mut prefs = lock(&self.preferences);
        prefs.record_outcome(user, &outcome.shown, outcome.chosen.as_deref(), outcome.hidden.as_deref())?;
        if let Some(path) = &self.preferences_path {
            let tmp = path.with_extension("json.tmp");
            std::fs::write(&tmp, serde_json::to_vec(&*prefs).map_err(std::io::Error::other)?)?;
            std::fs::rename(&tmp, path)?;
        }
        Ok(())
    }

    pub fn preferences(&self) -> PreferenceStore {
        lock(&self.preferences).clone()
    }

    // stories, tags, captions

    pub fn story_version(&self, user: &str) -> u64 {
        lock(&self.stories).latest(user).version
    }

    pub async fn tags(&self, user: &str) -> Result<TagsResponse, GatewayError> {
        let story = lock(&self.stories).latest(user);
        let key = (user.to_string(), story.version);
        let cached = lock(&self.proposals).get(&key).cloned();
        let (mut tags, by) = match cached {
            Some(t) => (t, GeneratedBy::OfflineTemplate),
            None => {
                let narrator = self.narrator.clone();
                let s = story.clone();
                let (t, by) = blocking(move || narrator.propose_tags_with_source(&s)).await?;
                lock(&self.proposals).insert(key, t.clone());
                (t, by)
            }
        };
        if let Some(selection) = lock(&self.stories).selection(user).cloned() {
            // a saved selection may predate the current proposal; keep what still fits
            let mut kept = tags.clone();
            for c in &selection.custom {
                let _ = kept.add_custom(c);
            }
            let valid: Vec<&String> = selection.selected.iter().filter(|t| kept.proposed().any(|p| p == *t) || kept.custom.contains(t)).collect();
            if kept.select(&valid).is_ok() {
                tags = kept;
            }
        }
        Ok(TagsResponse {
            story_version: story.version,
            degraded: self.degraded_possible() && by == GeneratedBy::OfflineTemplate && !story.is_empty(),
            tags,
        })
    }

    pub async fn update_story(&self, user: &str, text: &str) -> Result<u64, GatewayError> {
        let story = lock(&self.stories).update(user, text, self.now_ms())?;
        self.store.set_story_version(user, story.version)?;
        Ok(story.version)
    }

    pub async fn select_tags(&self, user: &str, selection: &TagSelection) -> Result<TagSelection, GatewayError> {
        let mut tags = self.tags(user).await?.tags;
        tags.custom.clear();
        tags.selected.clear();
        tags.apply_selection(selection)?;
        let normalized = tags.selection();
        lock(&self.stories).set_selection(user, normalized.clone())?;
        Ok(normalized)
    }

    fn context_records(&self, user: &str, conversation_id: Option<&str>) -> Result<Vec<ExchangeRecord>, GatewayError> {
        match conversation_id {
            Some(c) => {
                self.store.require_member(c, user)?;
                Ok(self.store.recent(c, dyad_core::narrative::CONTEXT_WINDOW)?)
            }
            None => Ok(Vec::new()),
        }
    }

    fn saved_tags(&self, user: &str) -> Vec<String> {
        lock(&self.stories).selection(user).map(|s| s.selected.clone()).unwrap_or_default()
    }

    fn narrate_response(&self, m: Micronarrative) -> NarrateResponse {
        let degraded = self.degraded_possible() && m.generated_by == GeneratedBy::OfflineTemplate;
        NarrateResponse { micronarrative: m, degraded }
    }

    pub async fn narrate(&self, user: &str, req: NarrateRequest) -> Result<NarrateResponse, GatewayError> {
        let context = self.context_records(user, req.conversation_id.as_deref())?;
        let tags = req.tags.unwrap_or_else(|| self.saved_tags(user));
        let story = lock(&self.stories).latest(user);
        let narrator = self.narrator.clone();
        let library = self.library();
        let m = blocking(move || narrator.generate(&library, &req.action_id, &story, &context, &tags)).await??;
        Ok(self.narrate_response(m))
    }

    pub async fn regenerate(&self, user: &str, req: RegenerateRequest) -> Result<NarrateResponse, GatewayError> {
        let context = self.context_records(user, req.conversation_id.as_deref())?;
        let tags = req.tags.unwrap_or_else(|| self.saved_tags(user));
        let story = lock(&self.stories).latest(user);
        let narrator = self.narrator.clone();
        let library = self.library();
        let m = blocking(move || narrator.regenerate(&library, &req.previous, &tags, &story, &context)).await??;
        Ok(self.narrate_response(m))
    }

    pub fn edit(&self, req: EditRequest) -> Result<Micronarrative, GatewayError> {
        Ok(apply_user_edit(&req.previous, &req.text)?)
    }

    // event stream

    /// Handles one client frame and returns the reply. Replies to a repeated
    /// `request_id` come from the cache without re-running the request.
    pub async fn handle_frame(&self, session: &SessionHandle, frame: Envelope) -> Envelope {
        let Some(request_id) = frame.request_id.clone().filter(|r| !r.is_empty()) else {
            return self.error_envelope(None, &GatewayError::Schema("request_id is required".into()));
        };
        let user_lock = lock_for(&self.user_locks, &session.user_id);
        let _user_guard = user_lock.lock().await;
        let key = (session.user_id.clone(), request_id.clone());
        if let Some(reply) = lock(&self.replies).get(&key) {
            return reply;
        }
        let reply = match self.dispatch(session, &request_id, frame).await {
            Ok(reply) => reply,
            Err(e) => self.error_envelope(Some(request_id), &e),
        };
        lock(&self.replies).put(key, reply.clone());
        reply
    }

    async fn dispatch(&self, session: &SessionHandle, request_id: &str, frame: Envelope) -> Result<Envelope, GatewayError> {
        let user = session.user_id.as_str();
        let rid = Some(request_id.to_string());
        match frame.event {
            Event::ChatMessage => {
                let msg: ChatMessage = parse(frame.payload)?;
                let record = self
                    .append_and_broadcast(NewRecord::text(&msg.conversation_id, user, msg.text), Event::ChatMessage)
                    .await?;
                Ok(self.envelope(Event::Ack, rid, ack_for(&record)))
            }
            Event::PuppetAction => {
                let action: PuppetAction = parse(frame.payload)?;
                let record = self.puppet_action(user, action).await?;
                Ok(self.envelope(Event::Ack, rid, ack_for(&record)))
            }
            Event::RecommendRequest => {
                let req: RecommendRequest = parse(frame.payload)?;
                let response = self.recommend(user, req).await?;
                Ok(self.envelope(Event::RecommendResponse, rid, response))
            }
            Event::EmnUpdate => {
                let update: EmnUpdate = parse(frame.payload)?;
                self.emn_update(session, update, rid).await
            }
            Event::Auth => Err(GatewayError::Invalid("session is already authenticated".into())),
            other => Err(GatewayError::Schema(format!("{} is a server event", other.as_str()))),
        }
    }

    async fn puppet_action(&self, user: &str, p: PuppetAction) -> Result<ExchangeRecord, GatewayError> {
        if !self.library().contains(&p.action) {
            return Err(GatewayError::NotFound(format!("action {:?}", p.action)));
        }
        let conv = &p.conversation_id;
        let new = match (p.persist, &p.micronarrative, p.paired_with) {
            (false, Some(_), _) => {
                return Err(GatewayError::Schema("an action-only puppet-action carries no micronarrative".into()))
            }
            (false, None, Some(_)) => {
                return Err(GatewayError::Schema("an action-only puppet-action cannot pair".into()))
            }
            (false, None, None) => NewRecord::action_only(conv, user, &p.action),
            (true, caption, Some(partner)) => NewRecord::dyadic(
                conv,
                user,
                &p.action,
                partner,
                caption.as_ref().map(|t| Caption::new(t.clone(), p.edited)),
            ),
            (true, Some(text), None) => NewRecord::action(conv, user, &p.action, Caption::new(text.clone(), p.edited)),
            (true, None, None) => {
                return Err(GatewayError::Schema("a persisted puppet-action needs a micronarrative".into()))
            }
        };
        if let Some(shown) = &p.shown {
            // checked before anything is stored so a bad outcome rejects the frame
            let outcome = Outcome { shown: shown.clone(), chosen: Some(p.action.clone()), hidden: p.hidden.clone() };
            PreferenceStore::new().record_outcome(user, &outcome.shown, outcome.chosen.as_deref(), outcome.hidden.as_deref())?;
        }
        let record = self.append_and_broadcast(new, Event::PuppetAction).await?;
        if let Some(shown) = p.shown {
            self.record_outcome(user, &Outcome { shown, chosen: Some(p.action), hidden: p.hidden })?;
        }
        Ok(record)
    }

    /// Appends under the conversation lock and fans out before releasing it,
    /// so every member sees records in append order.
    async fn append_and_broadcast(&self, new: NewRecord, event: Event) -> Result<ExchangeRecord, GatewayError> {
        let conv = self.store.require_member(&new.conversation_id, &new.sender_id)?;
        let conv_lock = lock_for(&self.conversation_locks, &conv.conversation_id);
        let _guard = conv_lock.lock().await;
        let store = self.store.clone();
        let durable = new.kind.is_durable();
        let record = if durable {
            blocking(move || store.append(new)).await??
        } else {
            store.append(new)?
        };
        let members = [conv.members[0].as_str(), conv.members[1].as_str()];
        self.push_to_users(&members, &self.envelope(event, None, &record), None);
        if record.kind == RecordKind::DyadicExchange {
            if let (Some(paired), Some(action)) = (record.paired_with, &record.action_id) {
                let partner_action = self.store.replay(paired, &record.sender_id)?.action_id;
                let status = ExchangeStatus {
                    conversation_id: record.conversation_id.clone(),
                    record_id: record.record_id,
                    paired_with: paired,
                    actions: [partner_action, action.clone()],
                };
                self.push_to_users(&members, &self.envelope(Event::ExchangeStatus, None, status), None);
            }
        }
        Ok(record)
    }

    async fn emn_update(&self, session: &SessionHandle, update: EmnUpdate, rid: Option<String>) -> Result<Envelope, GatewayError> {
        let user = session.user_id.as_str();
        let mut ack = serde_json::Map::new();
        let mut sync = serde_json::Map::new();
        sync.insert("user_id".into(), Value::from(user));
        match (update.story, update.tags) {
            (None, None) => return Err(GatewayError::Schema("emn-update needs story or tags".into())),
            (Some(_), Some(_)) => return Err(GatewayError::Schema("send story and tags in separate emn-update frames".into())),
            (Some(text), None) => {
                let version = self.update_story(user, &text).await?;
                ack.insert("story_version".into(), Value::from(version));
                sync.insert("story".into(), serde_json::json!({"version": version, "text": text}));
            }
            (None, Some(selection)) => {
                let stored = self.select_tags(user, &selection).await?;
                let value = serde_json::to_value(&stored).unwrap_or_default();
                ack.insert("tags".into(), value.clone());
                sync.insert("tags".into(), value);
            }
        }
        // stories are private: only the owner's other sessions hear about it
        self.push_to_users(&[user], &self.envelope(Event::EmnUpdate, None, Value::Object(sync)), Some(session.id));
        Ok(self.envelope(Event::Ack, rid, Value::Object(ack)))
    }

    /// Validates an `auth` frame and registers the session. Durable records
    /// after each resume point are queued before any live event.
    pub(crate) async fn authenticate_session(
        &self,
        request_id: Option<String>,
        auth: AuthRequest,
        tx: UnboundedSender<Envelope>,
    ) -> Result<SessionHandle, GatewayError> {
        let user = self.authenticate(&auth.token)?;
        for conv in auth.resume.keys() {
            self.store.require_member(conv, &user)?;
        }
        let mut locks: Vec<_> = auth.resume.keys().map(|c| lock_for(&self.conversation_locks, c)).collect();
        let mut guards = Vec::with_capacity(locks.len());
        for l in locks.iter_mut() {
            guards.push(l.lock().await);
        }
        let session = self.register_session(&user, tx.clone());
        let conversations: Vec<String> = self.conversations(&user).into_iter().map(|c| c.conversation_id).collect();
        let _ = tx.send(self.envelope(
            Event::Ack,
            request_id,
            serde_json::json!({"user_id": user, "session_id": session.id, "conversations": conversations}),
        ));
        for (conv, after) in &auth.resume {
            for record in self.store.records_after(conv, &user, Some(*after))? {
                let event = if record.kind == RecordKind::Text { Event::ChatMessage } else { Event::PuppetAction };
                let _ = tx.send(self.envelope(event, None, &record));
            }
        }
        drop(guards);
        Ok(session)
    }
}

fn ack_for(record: &ExchangeRecord) -> Value {
    serde_json::json!({
        "record_id": record.record_id,
        "conversation_id": record.conversation_id,
        "kind": record.kind,
        "timestamp": record.timestamp,
    })
}
