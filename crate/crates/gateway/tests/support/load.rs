//! Concurrent dyad load: every member streams events while reading, and each
//! arrival is timestamped by a dedicated reader task.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use dyad_gateway::client::Http;
use dyad_gateway::protocol::{Envelope, Event};
use dyad_gateway::RunningServer;
use futures_util::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio_tungstenite::tungstenite::Message;

#[derive(Debug, Clone)]
pub struct LoadReport {
    pub dyads: usize,
    pub events: usize,
    pub samples: usize,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
    /// One line per conversation whose observed orders disagree.
    pub order_violations: Vec<String>,
}

struct Member {
    user: String,
    http: Http,
}

#[derive(Default)]
struct Observed {
    /// (record_id, sender, durable, arrival)
    records: Vec<(u64, String, bool, Instant)>,
    acks: usize,
}

fn frame(conversation: &str, user: &str, k: usize) -> Envelope {
    let rid = format!("{user}-{k}");
    match k % 10 {
        3 => Envelope::request(
            Event::PuppetAction,
            rid,
            json!({"conversation_id": conversation, "action": "wave-hello", "persist": false}),
        ),
        5 | 8 => Envelope::request(
            Event::PuppetAction,
            rid,
            json!({"conversation_id": conversation, "action": "hug", "persist": true, "micronarrative": format!("hug {k}")}),
        ),
        _ => Envelope::request(Event::ChatMessage, rid, json!({"conversation_id": conversation, "text": format!("message {k}")})),
    }
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Runs `dyads` conversations where each member sends `per_member` events
/// spaced `pace` apart, then checks ordering against the durable history.
pub async fn run_load(server: &RunningServer, dyads: usize, per_member: usize, pace: Duration) -> LoadReport {
    let base = server.http_url();
    let mut pairs = Vec::new();
    for d in 0..dyads {
        let b = base.clone();
        let pair = tokio::task::spawn_blocking(move || {
            let a = Member { user: format!("load-a{d}"), http: Http::login(&b, &format!("load-a{d}")).unwrap() };
            let bm = Member { user: format!("load-b{d}"), http: Http::login(&b, &format!("load-b{d}")).unwrap() };
            let conv = a.http.post("/conversations", &json!({"peer_id": bm.user})).unwrap();
            (conv["conversation_id"].as_str().unwrap().to_string(), a, bm)
        })
        .await
        .unwrap();
        pairs.push(pair);
    }

    // every socket is authenticated before anyone sends
    let mut sockets = Vec::new();
    for (conv, a, b) in &pairs {
        for m in [a, b] {
            let (mut ws, _) = tokio_tungstenite::connect_async(server.ws_url()).await.expect("socket connects");
            let auth = Envelope::request(Event::Auth, "auth", json!({"token": m.http.token().unwrap()}));
            ws.send(Message::Text(auth.to_text().into())).await.unwrap();
            let Some(Ok(Message::Text(t))) = ws.next().await else { panic!("socket closed during auth") };
            let env: Envelope = serde_json::from_str(t.as_str()).unwrap();
            assert_eq!(env.event, Event::Ack, "{env:?}");
            sockets.push((conv.clone(), m.user.clone(), ws));
        }
    }

    let sent: Arc<Mutex<HashMap<(String, usize), Instant>>> = Arc::default();
    let mut tasks = Vec::new();
    for (conv, user, ws) in sockets {
        let (mut sink, mut stream) = ws.split();
        let expected_records = 2 * per_member;
        let reader = tokio::spawn(async move {
            let mut seen = Observed::default();
            let deadline = Instant::now() + Duration::from_secs(90);
            while seen.records.len() < expected_records || seen.acks < per_member {
                let left = deadline.saturating_duration_since(Instant::now());
                let Ok(Some(Ok(Message::Text(t)))) = tokio::time::timeout(left, stream.next()).await else {
                    break;
                };
                let now = Instant::now();
                let env: Envelope = serde_json::from_str(t.as_str()).unwrap();
                match env.event {
                    Event::Ack => seen.acks += 1,
                    Event::ChatMessage | Event::PuppetAction => {
                        let p = &env.payload;
                        seen.records.push((
                            p["record_id"].as_u64().unwrap(),
                            p["sender_id"].as_str().unwrap().to_string(),
                            p["kind"] != "action_only_status",
                            now,
                        ));
                    }
                    _ => {}
                }
            }
            seen
        });
        let (u, sent) = (user.clone(), sent.clone());
        let writer = tokio::spawn(async move {
            for k in 0..per_member {
                let text = frame(&conv, &u, k).to_text();
                sent.lock().unwrap().insert((u.clone(), k), Instant::now());
                sink.send(Message::Text(text.into())).await.unwrap();
                tokio::time::sleep(pace).await;
            }
            sink
        });
        tasks.push((user, reader, writer));
    }

    let mut observed: HashMap<String, Observed> = HashMap::new();
    let mut sinks = Vec::new();
    for (user, reader, writer) in tasks {
        sinks.push(writer.await.unwrap());
        observed.insert(user, reader.await.unwrap());
    }

    let sent = sent.lock().unwrap();
    let mut latencies = Vec::new();
    let mut order_violations = Vec::new();
    let mut events = 0;
    for (conv, a, b) in &pairs {
        let (oa, ob) = (&observed[&a.user], &observed[&b.user]);
        let ids = |o: &Observed| o.records.iter().map(|r| r.0).collect::<Vec<_>>();
        if ids(oa) != ids(ob) {
            order_violations.push(format!("{conv}: members saw different orders"));
        }
        let history: Value = {
            let h = a.http.clone();
            let path = format!("/history/{conv}?limit=100000");
            tokio::task::spawn_blocking(move || h.get(&path).unwrap()).await.unwrap()
        };
        let durable: Vec<u64> = history["records"]
            .as_array()
            .unwrap()
            .iter()
            .map(|r| r["record_id"].as_u64().unwrap())
            .collect();
        for (who, o) in [(&a.user, oa), (&b.user, ob)] {
            if o.records.len() != 2 * per_member {
                order_violations.push(format!("{conv}: {who} received {} of {} events", o.records.len(), 2 * per_member));
            }
            let seen_durable: Vec<u64> = o.records.iter().filter(|r| r.2).map(|r| r.0).collect();
            if seen_durable != durable {
                order_violations.push(format!("{conv}: {who} durable order differs from history"));
            }
            // partner's k-th arrival matches their k-th send: each socket is handled in order
            let mut per_sender: HashMap<&str, usize> = HashMap::new();
            for (_, sender, _, at) in &o.records {
                let k = per_sender.entry(sender.as_str()).or_default();
                if sender != who {
                    if let Some(start) = sent.get(&(sender.clone(), *k)) {
                        latencies.push(at.duration_since(*start).as_secs_f64() * 1000.0);
                    }
                }
                *k += 1;
            }
        }
        events += oa.records.len();
    }
    drop(sinks);
    latencies.sort_by(f64::total_cmp);
    LoadReport {
        dyads,
        events,
        samples: latencies.len(),
        p50_ms: percentile(&latencies, 50.0),
        p95_ms: percentile(&latencies, 95.0),
        max_ms: latencies.last().copied().unwrap_or(0.0),
        order_violations,
    }
}
