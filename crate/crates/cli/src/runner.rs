//! Executes a parsed [`Script`] against an in-process server over the event
//! stream, the way two clients would.

use std::collections::{BTreeMap, HashMap};
use std::time::{Duration, Instant};

use dyad_gateway::client::{ClientError, Http, Session};
use dyad_gateway::protocol::{Envelope, Event};
use dyad_gateway::{GatewayConfig, RunningServer};
use serde::Serialize;
use serde_json::{json, Value};

use crate::script::{Actor, Script, Step, Target};
use crate::CliError;

const DELIVERY_WAIT: Duration = Duration::from_secs(2);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepReport {
    pub line: usize,
    pub source: String,
    pub ok: bool,
    /// Output of a passing step, or expected-versus-actual for a failure.
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Report {
    pub seed: u64,
    pub steps: Vec<StepReport>,
    /// Steps not run because an earlier action failed.
    pub skipped: usize,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.skipped == 0 && self.steps.iter().all(|s| s.ok)
    }

    pub fn failures(&self) -> impl Iterator<Item = &StepReport> {
        self.steps.iter().filter(|s| !s.ok)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for s in &self.steps {
            let mark = if s.ok { "ok  " } else { "FAIL" };
            out.push_str(&format!("{mark} line {:>3}  {}\n", s.line, s.source));
            if !s.detail.is_empty() {
                for l in s.detail.lines() {
                    out.push_str(&format!("               {l}\n"));
                }
            }
        }
        let failed = self.failures().count();
        out.push_str(&format!(
            "{} steps, {} passed, {} failed, {} skipped\n",
            self.steps.len() + self.skipped,
            self.steps.len() - failed,
            failed,
            self.skipped
        ));
        out
    }
}

#[derive(Debug, Clone)]
struct SentRecord {
    id: u64,
    sender: Actor,
    action: Option<String>,
    kind: String,
}

impl SentRecord {
    fn durable(&self) -> bool {
        self.kind != "action_only_status"
    }

    fn describe(&self) -> String {
        format!("record {} ({}, {})", self.id, self.action.as_deref().unwrap_or("text"), self.kind)
    }
}

enum Outcome {
    Pass(String),
    Fail(String),
    /// An action step that could not run; later steps are skipped.
    Abort(String),
}

struct Runner {
    conv: String,
    seed: u64,
    http: HashMap<Actor, Http>,
    sessions: HashMap<Actor, Session>,
    received: HashMap<Actor, Vec<u64>>,
    labels: HashMap<String, SentRecord>,
    sent: Vec<SentRecord>,
    recommendations: HashMap<Actor, Vec<String>>,
    last_recommendation: Vec<String>,
    caption: Option<String>,
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> T {
    tokio::task::spawn_blocking(f).await.expect("blocking task panicked")
}

fn other(actor: Actor) -> Actor {
    match actor {
        Actor::A => Actor::B,
        Actor::B => Actor::A,
    }
}

/// Starts a fresh offline server, runs the script and stops the server.
pub async fn run(script: &Script, mut config: GatewayConfig) -> Result<Report, CliError> {
    config.listen = "127.0.0.1:0".into();
    config.provider = dyad_core::interpreter::ProviderConfig::offline();
    let server = dyad_gateway::start(config).await.map_err(|e| CliError::Failure(e.to_string()))?;
    let report = run_on(&server, script).await;
    server.stop().await;
    report
}

pub async fn run_on(server: &RunningServer, script: &Script) -> Result<Report, CliError> {
    let mut report = Report { seed: script.seed, ..Report::default() };
    if script.steps.is_empty() {
        return Ok(report);
    }
    let base = server.http_url();
    let (a, b) = blocking(move || -> Result<(Http, Http), ClientError> {
        Ok((Http::login(&base, Actor::A.user_id())?, Http::login(&base, Actor::B.user_id())?))
    })
    .await
    .map_err(|e| CliError::Failure(format!("login: {e}")))?;
    let peer = Actor::B.user_id();
    let a2 = a.clone();
    let conv = blocking(move || a2.post("/conversations", &json!({ "peer_id": peer })))
        .await
        .map_err(|e| CliError::Failure(format!("opening the conversation: {e}")))?["conversation_id"]
        .as_str()
        .unwrap_or_default()
        .to_string();
    let mut sessions = HashMap::new();
    for (actor, http) in [(Actor::A, &a), (Actor::B, &b)] {
        let (s, _) = Session::connect(&server.ws_url(), http.token().unwrap_or_default(), BTreeMap::new())
            .await
            .map_err(|e| CliError::Failure(format!("connecting {actor}: {e}")))?;
        sessions.insert(actor, s);
    }
    let mut runner = Runner {
        conv,
        seed: script.seed,
        http: HashMap::from([(Actor::A, a), (Actor::B, b)]),
        sessions,
        received: HashMap::new(),
        labels: HashMap::new(),
        sent: Vec::new(),
        recommendations: HashMap::new(),
        last_recommendation: Vec::new(),
        caption: None,
    };
    for (i, line) in script.steps.iter().enumerate() {
        let outcome = runner.step(&line.step).await;
        let (ok, detail, abort) = match outcome {
            Outcome::Pass(d) => (true, d, false),
            Outcome::Fail(d) => (false, d, false),
            Outcome::Abort(d) => (false, d, true),
        };
        report.steps.push(StepReport { line: line.line, source: line.source.clone(), ok, detail });
        if abort {
            report.skipped = script.steps.len() - i - 1;
            break;
        }
    }
    for (_, s) in runner.sessions.drain() {
        s.close().await;
    }
    Ok(report)
}

impl Runner {
    async fn get(&self, actor: Actor, path: String) -> Result<Value, ClientError> {
        let http = self.http[&actor].clone();
        blocking(move || http.get(&path)).await
    }

    async fn post(&self, actor: Actor, path: &'static str, body: Value) -> Result<Value, ClientError> {
        let http = self.http[&actor].clone();
        blocking(move || http.post(path, &body)).await
    }

    fn note_pushes(&mut self, actor: Actor, pushes: Vec<Envelope>) {
        let seen = self.received.entry(actor).or_default();
        for p in pushes {
            if matches!(p.event, Event::ChatMessage | Event::PuppetAction) {
                if let Some(id) = p.payload["record_id"].as_u64() {
                    seen.push(id);
                }
            }
        }
    }

    async fn request(&mut self, actor: Actor, event: Event, payload: Value) -> Result<Envelope, ClientError> {
        let session = self.sessions.get_mut(&actor).expect("both actors connected");
        let reply = session.request(event, payload).await;
        let pushes = session.drain(Duration::ZERO).await.unwrap_or_default();
        self.note_pushes(actor, pushes);
        reply
    }

    async fn narrate(&self, actor: Actor, action: &str) -> Result<String, ClientError> {
        let v = self
            .post(actor, "/narrate", json!({"action_id": action, "conversation_id": self.conv}))
            .await?;
        Ok(v["micronarrative"]["text"].as_str().unwrap_or_default().to_string())
    }

    fn partner_record(&self, actor: Actor) -> Option<&SentRecord> {
        self.sent
            .iter()
            .rev()
            .find(|r| r.sender == other(actor) && r.durable() && r.action.is_some())
    }

    #[allow(clippy::too_many_arguments)]
    async fn send_action(
        &mut self,
        actor: Actor,
        action: &str,
        persist: bool,
        caption: Option<String>,
        paired: bool,
        shown: Option<Vec<String>>,
        label: &Option<String>,
    ) -> Outcome {
        let mut payload = json!({"conversation_id": self.conv, "action": action, "persist": persist});
        if persist {
            let text = match caption {
                Some(t) => t,
                None => match self.narrate(actor, action).await {
                    Ok(t) => t,
                    Err(e) => return Outcome::Abort(format!("narrating {action}: {e}")),
                },
            };
            payload["micronarrative"] = json!(text);
        }
        if paired {
            match self.partner_record(actor) {
                Some(r) => payload["paired_with"] = json!(r.id),
                None => return Outcome::Abort(format!("{actor} has no partner action record to pair with")),
            }
        }
        if let Some(shown) = shown {
            payload["shown"] = json!(shown);
        }
        self.record_step(actor, Event::PuppetAction, payload, Some(action.to_string()), label).await
    }

    async fn record_step(
        &mut self,
        actor: Actor,
        event: Event,
        payload: Value,
        action: Option<String>,
        label: &Option<String>,
    ) -> Outcome {
        match self.request(actor, event, payload).await {
            Ok(ack) => {
                let record = SentRecord {
                    id: ack.payload["record_id"].as_u64().unwrap_or_default(),
                    sender: actor,
                    action,
                    kind: ack.payload["kind"].as_str().unwrap_or_default().to_string(),
                };
                let detail = record.describe();
                if let Some(l) = label {
                    self.labels.insert(l.clone(), record.clone());
                }
                self.labels.insert("last".into(), record.clone());
                self.sent.push(record);
                Outcome::Pass(detail)
            }
            Err(e) => Outcome::Abort(format!("server refused the step: {e}")),
        }
    }

    async fn history(&self) -> Result<Vec<Value>, ClientError> {
        let v = self.get(Actor::A, format!("/history/{}?limit=1000000", self.conv)).await?;
        Ok(v["records"].as_array().cloned().unwrap_or_default())
    }

    async fn step(&mut self, step: &Step) -> Outcome {
        match step {
            Step::Send { actor, action, caption, paired, label } => {
                self.send_action(*actor, action, true, caption.clone(), *paired, None, label).await
            }
            Step::ActionOnly { actor, action, label } => {
                self.send_action(*actor, action, false, None, false, None, label).await
            }
            Step::Text { actor, text, label } => {
                let payload = json!({"conversation_id": self.conv, "text": text});
                self.record_step(*actor, Event::ChatMessage, payload, None, label).await
            }
            Step::Recommend { actor, draft } => {
                let payload = json!({"conversation_id": self.conv, "draft_text": draft, "seed": self.seed});
                match self.request(*actor, Event::RecommendRequest, payload).await {
                    Ok(reply) => {
                        let ids: Vec<String> = reply.payload["actions"]
                            .as_array()
                            .map(|a| a.iter().filter_map(|r| r["action_id"].as_str().map(str::to_string)).collect())
                            .unwrap_or_default();
                        self.recommendations.insert(*actor, ids.clone());
                        self.last_recommendation = ids.clone();
                        Outcome::Pass(ids.join(", "))
                    }
                    Err(e) => Outcome::Abort(format!("recommend failed: {e}")),
                }
            }
            Step::Select { actor, action, persist, paired, label } => {
                let shown = self.recommendations.get(actor).cloned().unwrap_or_default();
                let choice = match action {
                    Some(a) if shown.contains(a) => a.clone(),
                    Some(a) => {
                        return Outcome::Abort(format!("expected {a} among the recommendations\nactual: [{}]", shown.join(", ")))
                    }
                    None => match shown.first() {
                        Some(a) => a.clone(),
                        None => return Outcome::Abort("the last recommendation was empty".into()),
                    },
                };
                self.send_action(*actor, &choice, *persist, None, *paired, Some(shown), label).await
            }
            Step::Narrate { actor, action } => match self.narrate(*actor, action).await {
                Ok(text) => {
                    self.caption = Some(text.clone());
                    Outcome::Pass(text)
                }
                Err(e) => Outcome::Abort(format!("narrate failed: {e}")),
            },
            Step::Story { actor, text } => {
                match self.request(*actor, Event::EmnUpdate, json!({ "story": text })).await {
                    Ok(ack) => Outcome::Pass(format!("story version {}", ack.payload["story_version"])),
                    Err(e) => Outcome::Abort(format!("story update failed: {e}")),
                }
            }
            Step::AssertRecommended { action, expected } => {
                let present = self.last_recommendation.contains(action);
                let shown = format!("[{}]", self.last_recommendation.join(", "));
                if present == *expected {
                    Outcome::Pass(shown)
                } else if *expected {
                    Outcome::Fail(format!("expected {action} in the top 4\nactual: {shown}"))
                } else {
                    Outcome::Fail(format!("expected {action} absent from the top 4\nactual: {shown}"))
                }
            }
            Step::AssertHistoryCount(n) => match self.history().await {
                Ok(h) if h.len() == *n => Outcome::Pass(String::new()),
                Ok(h) => Outcome::Fail(format!("expected {n} stored records\nactual: {} [{}]", h.len(), summarize(&h))),
                Err(e) => Outcome::Fail(format!("history request failed: {e}")),
            },
            Step::AssertHistory { target, expected } => {
                let history = match self.history().await {
                    Ok(h) => h,
                    Err(e) => return Outcome::Fail(format!("history request failed: {e}")),
                };
                let (found, what, why_missing) = match target {
                    Target::Record(label) => {
                        let r = &self.labels[label];
                        let found = history.iter().any(|h| h["record_id"].as_u64() == Some(r.id));
                        let why = if r.durable() {
                            String::new()
                        } else {
                            format!("\n{} was sent Action Only, and action-only statuses are never stored", r.describe())
                        };
                        (found, r.describe(), why)
                    }
                    Target::Content(s) => {
                        let found = history.iter().any(|h| {
                            h["action_id"].as_str() == Some(s)
                                || h["text"].as_str() == Some(s)
                                || h["micronarrative"]["text"].as_str() == Some(s)
                        });
                        (found, format!("a record matching {s:?}"), String::new())
                    }
                };
                match (found, *expected) {
                    (true, true) | (false, false) => Outcome::Pass(String::new()),
                    (false, true) => Outcome::Fail(format!(
                        "expected {what} in history\nactual: [{}]{why_missing}",
                        summarize(&history)
                    )),
                    (true, false) => Outcome::Fail(format!("expected {what} absent from history\nactual: [{}]", summarize(&history))),
                }
            }
            Step::AssertReplay { label, ok } => {
                let r = self.labels[label].clone();
                let result = self.get(r.sender, format!("/replay/{}", r.id)).await;
                match (result, *ok) {
                    (Ok(v), true) => Outcome::Pass(format!("replays {}", v["action_id"].as_str().unwrap_or("?"))),
                    (Err(e), false) => Outcome::Pass(e.code().unwrap_or_default()),
                    (Ok(_), false) => Outcome::Fail(format!("expected replay of {} to fail\nactual: it replayed", r.describe())),
                    (Err(e), true) => Outcome::Fail(format!("expected {} to replay\nactual: {e}", r.describe())),
                }
            }
            Step::AssertDelivered { label } => {
                let r = self.labels[label].clone();
                let deadline = Instant::now() + DELIVERY_WAIT;
                let mut missing = Vec::new();
                for actor in [Actor::A, Actor::B] {
                    while !self.received.get(&actor).is_some_and(|ids| ids.contains(&r.id)) {
                        let left = deadline.saturating_duration_since(Instant::now());
                        let session = self.sessions.get_mut(&actor).expect("connected");
                        match session.next_push(left).await {
                            Ok(Some(p)) => self.note_pushes(actor, vec![p]),
                            _ => {
                                missing.push(actor.to_string());
                                break;
                            }
                        }
                    }
                }
                if missing.is_empty() {
                    Outcome::Pass(String::new())
                } else {
                    Outcome::Fail(format!("expected {} delivered to both\nactual: missing at {}", r.describe(), missing.join(", ")))
                }
            }
            Step::AssertCaption { contains } => {
                let caption = self.caption.clone().unwrap_or_default();
                if caption.contains(contains.as_str()) {
                    Outcome::Pass(caption)
                } else {
                    Outcome::Fail(format!("expected the caption to contain {contains:?}\nactual: {caption:?}"))
                }
            }
        }
    }
}

fn summarize(history: &[Value]) -> String {
    history
        .iter()
        .map(|h| {
            let what = h["action_id"].as_str().or(h["text"].as_str()).unwrap_or("?");
            format!("{} {what}", h["record_id"])
        })
        .collect::<Vec<_>>()
        .join(", ")
}
