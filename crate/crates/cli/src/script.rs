//! Line-based dyad session scripts.
//!
//! ```text
//! # comments and blank lines are ignored
//! seed 7
//! A send throw-heart "Catch my heart!" as throw
//! B recommend
//! assert recommended catch-heart
//! B select catch-heart paired
//! A action_only wave-hello as hello
//! assert history lacks hello
//! assert replay throw ok
//! assert replay hello error
//! ```
//!
//! Actor steps (`A` or `B` first):
//! `send <action> ["caption"] [paired] [as <label>]`,
//! `action_only <action> [as <label>]`, `text "<message>" [as <label>]`,
//! `recommend ["draft"]`, `select [<action>] [action_only] [paired] [as <label>]`,
//! `narrate <action>`, `story "<text>"`.
//!
//! Assertions: `assert recommended <action>`, `assert not_recommended <action>`,
//! `assert history count <n>`, `assert history contains|lacks <label|action|"text">`,
//! `assert replay <label|last> ok|error`, `assert delivered <label|last>`,
//! `assert caption contains "<text>"`.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Actor {
    A,
    B,
}

impl Actor {
    pub fn user_id(self) -> &'static str {
        match self {
            Actor::A => "script-a",
            Actor::B => "script-b",
        }
    }
}

impl fmt::Display for Actor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Actor::A => "A",
            Actor::B => "B",
        })
    }
}

/// What a reference in an assertion points at.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Target {
    /// A record produced by an earlier labelled step, or `last`.
    Record(String),
    /// Any stored record with this action id or exactly this text.
    Content(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Step {
    Send { actor: Actor, action: String, caption: Option<String>, paired: bool, label: Option<String> },
    ActionOnly { actor: Actor, action: String, label: Option<String> },
    Text { actor: Actor, text: String, label: Option<String> },
    Recommend { actor: Actor, draft: Option<String> },
    Select { actor: Actor, action: Option<String>, persist: bool, paired: bool, label: Option<String> },
    Narrate { actor: Actor, action: String },
    Story { actor: Actor, text: String },
    AssertRecommended { action: String, expected: bool },
    AssertHistoryCount(usize),
    AssertHistory { target: Target, expected: bool },
    AssertReplay { label: String, ok: bool },
    AssertDelivered { label: String },
    AssertCaption { contains: String },
}

impl Step {
    pub fn is_assertion(&self) -> bool {
        matches!(
            self,
            Step::AssertRecommended { .. }
                | Step::AssertHistoryCount(_)
                | Step::AssertHistory { .. }
                | Step::AssertReplay { .. }
                | Step::AssertDelivered { .. }
                | Step::AssertCaption { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptLine {
    pub line: usize,
    pub source: String,
    pub step: Step,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Script {
    pub seed: u64,
    pub steps: Vec<ScriptLine>,
}

/// Tracks what earlier steps produced so assertions can be checked for
/// references to things that do not exist yet.
#[derive(Default)]
struct Produced {
    labels: BTreeSet<String>,
    records: bool,
    recommendations: BTreeSet<Actor>,
    caption: bool,
}

fn take_label(words: &mut Vec<String>) -> Result<Option<String>, String> {
    match words.iter().position(|w| w == "as") {
        None => Ok(None),
        Some(i) if i + 2 == words.len() => {
            let label = words.pop().unwrap();
            words.pop();
            if label == "last" {
                return Err("`last` is reserved".into());
            }
            Ok(Some(label))
        }
        Some(_) => Err("`as <label>` must end the line".into()),
    }
}

fn take_flag(words: &mut Vec<String>, flag: &str) -> bool {
    match words.iter().position(|w| w == flag) {
        Some(i) => {
            words.remove(i);
            true
        }
        None => false,
    }
}

fn one(words: &[String], what: &str) -> Result<String, String> {
    match words {
        [w] => Ok(w.clone()),
        [] => Err(format!("missing {what}")),
        _ => Err(format!("expected one {what}, got {}", words.len())),
    }
}

fn at_most_one(words: &[String], what: &str) -> Result<Option<String>, String> {
    match words {
        [] => Ok(None),
        [w] => Ok(Some(w.clone())),
        _ => Err(format!("expected at most one {what}, got {}", words.len())),
    }
}

fn parse_actor_step(actor: Actor, verb: &str, mut rest: Vec<String>, produced: &mut Produced) -> Result<Step, String> {
    let label = take_label(&mut rest)?;
    let labelled = matches!(verb, "send" | "action_only" | "text" | "select");
    if label.is_some() && !labelled {
        return Err(format!("`{verb}` does not produce a record to label"));
    }
    let step = match verb {
        "send" => {
            let paired = take_flag(&mut rest, "paired");
            let mut it = rest.into_iter();
            let action = it.next().ok_or("missing action")?;
            let caption = it.next();
            if it.next().is_some() {
                return Err("send takes an action and an optional caption".into());
            }
            Step::Send { actor, action, caption, paired, label: label.clone() }
        }
        "action_only" => Step::ActionOnly { actor, action: one(&rest, "action")?, label: label.clone() },
        "text" => Step::Text { actor, text: one(&rest, "quoted message")?, label: label.clone() },
        "recommend" => {
            produced.recommendations.insert(actor);
            Step::Recommend { actor, draft: at_most_one(&rest, "draft")? }
        }
        "select" => {
            if !produced.recommendations.contains(&actor) {
                return Err(format!("{actor} has no recommendation to select from yet"));
            }
            let persist = !take_flag(&mut rest, "action_only");
            let paired = take_flag(&mut rest, "paired");
            Step::Select { actor, action: at_most_one(&rest, "action")?, persist, paired, label: label.clone() }
        }
        "narrate" => {
            produced.caption = true;
            Step::Narrate { actor, action: one(&rest, "action")? }
        }
        "story" => Step::Story { actor, text: one(&rest, "quoted story")? },
        other => return Err(format!("unknown step `{other}`")),
    };
    if labelled {
        produced.records = true;
    }
    if let Some(l) = label {
        if !produced.labels.insert(l.clone()) {
            return Err(format!("label `{l}` is already used"));
        }
    }
    Ok(step)
}

fn record_ref(word: &str, produced: &Produced) -> Result<String, String> {
    if word == "last" {
        if !produced.records {
            return Err("`last` used before any record was sent".into());
        }
    } else if !produced.labels.contains(word) {
        return Err(format!("unknown label `{word}`"));
    }
    Ok(word.to_string())
}

fn parse_assert(words: &[String], produced: &Produced) -> Result<Step, String> {
    let strs: Vec<&str> = words.iter().map(String::as_str).collect();
    match strs.as_slice() {
        [kind @ ("recommended" | "not_recommended"), action] => {
            if produced.recommendations.is_empty() {
                return Err("no recommend step before this assertion".into());
            }
            Ok(Step::AssertRecommended { action: action.to_string(), expected: *kind == "recommended" })
        }
        ["history", "count", n] => n
            .parse()
            .map(Step::AssertHistoryCount)
            .map_err(|_| format!("`{n}` is not a count")),
        ["history", mode @ ("contains" | "lacks"), what] => {
            let target = if *what == "last" || produced.labels.contains(*what) {
                Target::Record(record_ref(what, produced)?)
            } else {
                Target::Content(what.to_string())
            };
            Ok(Step::AssertHistory { target, expected: *mode == "contains" })
        }
        ["replay", what, outcome @ ("ok" | "error")] => {
            Ok(Step::AssertReplay { label: record_ref(what, produced)?, ok: *outcome == "ok" })
        }
        ["delivered", what] => Ok(Step::AssertDelivered { label: record_ref(what, produced)? }),
        ["caption", "contains", text] => {
            if !produced.caption {
                return Err("no narrate step before this assertion".into());
            }
            Ok(Step::AssertCaption { contains: text.to_string() })
        }
        _ => Err(format!("unknown assertion `{}`", words.join(" "))),
    }
}

pub fn parse(source: &str) -> Result<Script, ParseError> {
    let mut script = Script::default();
    let mut produced = Produced::default();
    let mut seeded = false;
    for (i, raw) in source.lines().enumerate() {
        let line = i + 1;
        let err = |message: String| ParseError { line, message };
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let words = shlex::split(trimmed).ok_or_else(|| err("unbalanced quotes".into()))?;
        let (head, rest) = words.split_first().ok_or_else(|| err("empty step".into()))?;
        let step = match head.as_str() {
            "seed" => {
                if seeded || !script.steps.is_empty() {
                    return Err(err("`seed` must come once, before any step".into()));
                }
                script.seed = one(rest, "seed")
                    .and_then(|s| s.parse().map_err(|_| format!("`{s}` is not an unsigned integer")))
                    .map_err(err)?;
                seeded = true;
                continue;
            }
            "assert" => parse_assert(rest, &produced),
            "A" | "B" => {
                let actor = if head == "A" { Actor::A } else { Actor::B };
                match rest.split_first() {
                    Some((verb, args)) => parse_actor_step(actor, verb, args.to_vec(), &mut produced),
                    None => Err(format!("{actor} needs a step")),
                }
            }
            other => Err(format!("expected `seed`, `assert`, `A` or `B`, found `{other}`")),
        }
        .map_err(err)?;
        script.steps.push(ScriptLine { line, source: trimmed.to_string(), step });
    }
    Ok(script)
}
