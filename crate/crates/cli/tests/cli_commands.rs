use std::path::PathBuf;
use std::process::{Command, Output};
use std::sync::Arc;

use dyad_core::clock::ManualClock;
use dyad_core::store::{Caption, ConversationStore, NewRecord};
use serde_json::Value;

fn dyad(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dyad")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn script(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/scripts")
        .join(name)
        .display()
        .to_string()
}

#[test]
fn empty_script_passes_with_zero_steps() {
    let o = dyad(&["run-script", &script("empty.dyad")]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("0 steps"), "{}", stdout(&o));
}

#[test]
fn thrown_heart_is_caught() {
    let o = dyad(&["run-script", &script("throw_catch.dyad")]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("dyadic_exchange"));
}

#[test]
fn ephemeral_record_in_history_fails_with_an_explanation() {
    let o = dyad(&["run-script", &script("ephemeral_in_history.dyad")]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert!(out.contains("FAIL line   2"), "{out}");
    assert!(out.contains("expected record"), "{out}");
    assert!(out.contains("never stored"), "{out}");
}

#[test]
fn passing_scripts() {
    for name in ["persist_semantics.dyad", "story_and_text.dyad"] {
        let o = dyad(&["run-script", &script(name), "--json"]);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", stdout(&o));
        let last: Value = serde_json::from_str(stdout(&o).lines().last().unwrap()).unwrap();
        assert_eq!(last["passed"], true);
    }
}

#[test]
fn parse_errors_are_usage_errors_with_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.dyad");
    std::fs::write(&path, "A send hug\n\nA juggle\n").unwrap();
    let o = dyad(&["run-script", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
    let o = dyad(&["run-script", "/no/such/script.dyad"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(dyad(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(dyad(&["recommend", "--seed", "minus-one"]).status.code(), Some(2));
    assert_eq!(dyad(&["narrate"]).status.code(), Some(2));
}

#[test]
fn library_lint() {
    let o = dyad(&["library", "lint"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("42 actions"));

    let dir = tempfile::tempdir().unwrap();
    let mut doc: Value = serde_json::from_str(dyad_core::library::CANONICAL_LIBRARY_JSON).unwrap();
    let actions = doc["actions"].as_array_mut().unwrap();
    actions[3]["reaction_candidates"] = serde_json::json!(["no-such-move"]);
    let dup = actions[0].clone();
    actions.push(dup);
    let path = dir.path().join("broken.json");
    std::fs::write(&path, doc.to_string()).unwrap();
    let o = dyad(&["library", "lint", path.to_str().unwrap(), "--json"]);
    assert_eq!(o.status.code(), Some(1));
    let named: Vec<String> = stdout(&o)
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["action_id"].as_str().unwrap_or("").to_string())
        .collect();
    assert!(named.contains(&"split-heart".to_string()), "{named:?}");
    assert!(named.contains(&"throw-heart".to_string()), "{named:?}");
}

#[test]
fn recommend_offline() {
    let o = dyad(&["recommend", "--partner-last", "cry", "--no-noise", "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let rows: Vec<Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().any(|r| r["action_id"] == "wipe-others-tears"));
    assert!(rows.iter().all(|r| r["noise"] == 0.0));

    let all = dyad(&["recommend", "--text", "I love you", "--all", "--json"]);
    assert_eq!(stdout(&all).lines().count(), 42);
    let same = dyad(&["recommend", "--text", "I love you", "--all", "--json"]);
    assert_eq!(stdout(&all), stdout(&same));

    let o = dyad(&["recommend", "--text", "I love you"]);
    assert!(stdout(&o).starts_with("rank"));
    assert_eq!(dyad(&["recommend", "--partner-last", "moonwalk"]).status.code(), Some(1));
    assert_eq!(dyad(&["recommend", "--state", "partner-acted-last"]).status.code(), Some(1));
}

#[test]
fn narrate_offline() {
    let o = dyad(&["narrate", "--action", "hug", "--offline"]);
    assert_eq!(stdout(&o).trim(), "I wrap you in a warm hug.");
    let dir = tempfile::tempdir().unwrap();
    let story = dir.path().join("story.txt");
    std::fs::write(&story, "I adore my cat and long walks by the sea\n").unwrap();
    let o = dyad(&["narrate", "--action", "hug", "--offline", "--story-file", story.to_str().unwrap(), "--tags", "cat,sea", "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let m: Value = serde_json::from_str(stdout(&o).lines().next().unwrap()).unwrap();
    assert_eq!(m["tags_used"], serde_json::json!(["cat", "sea"]));
    assert_eq!(m["story_version"], 1);
    let o = dyad(&["narrate", "--action", "hug", "--offline", "--show-tags", "--story", "I love cats"]);
    assert_eq!(stdout(&o).lines().count(), 5);
    assert_eq!(dyad(&["narrate", "--action", "moonwalk", "--offline"]).status.code(), Some(1));
    assert_eq!(dyad(&["narrate", "--action", "hug", "--story", "a", "--story-file", "b"]).status.code(), Some(2));
}

#[test]
fn export_prints_only_durable_records() {
    let dir = tempfile::tempdir().unwrap();
    let conv = {
        let store = ConversationStore::open(dir.path(), Arc::new(ManualClock::new(5_000)), 60_000).unwrap();
        store.ensure_user("ana", None).unwrap();
        store.ensure_user("ben", None).unwrap();
        let conv = store.open_conversation("ana", "ben").unwrap().conversation_id;
        store.append(NewRecord::action(&conv, "ana", "hug", Caption::new("Warm hug.", false))).unwrap();
        store.append(NewRecord::action_only(&conv, "ben", "nod")).unwrap();
        store.append(NewRecord::text(&conv, "ben", "thanks")).unwrap();
        conv
    };
    let o = dyad(&["export", &conv, "--data-dir", dir.path().to_str().unwrap(), "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let rows: Vec<Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["micronarrative"]["text"], "Warm hug.");
    assert_eq!(rows[1]["text"], "thanks");
    let table = dyad(&["export", &conv, "--data-dir", dir.path().to_str().unwrap()]);
    assert_eq!(stdout(&table).lines().count(), 3);
    assert_eq!(dyad(&["export", "conv-9", "--data-dir", dir.path().to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(dyad(&["export", &conv, "--data-dir", "/nonexistent"]).status.code(), Some(2));
}
