use std::path::{Path, PathBuf};
use std::sync::Arc;

use dyad_core::clock::SystemClock;
use dyad_core::interpreter::{ProviderConfig, TextInterpreter};
use dyad_core::library::{lint, ActionLibrary, CANONICAL_LIBRARY_JSON};
use dyad_core::narrative::{Narrator, PersonalStory, StoryBook};
use dyad_core::preference::PreferenceStore;
use dyad_core::recommend::{ConversationState, RecommendationContext, Recommender, Weights};
use dyad_core::store::ConversationStore;
use dyad_gateway::GatewayConfig;

use crate::{runner, script, CliError};

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn load_library(path: Option<&Path>) -> Result<ActionLibrary, CliError> {
    match path {
        Some(p) => ActionLibrary::from_json(&read(p)?).map_err(|e| CliError::Failure(format!("{}: {e}", p.display()))),
        None => Ok(ActionLibrary::canonical()),
    }
}

fn json_line(v: &impl serde::Serialize) -> String {
    serde_json::to_string(v).expect("plain data serializes")
}

/// Lints a library document (the canonical one without a path).
/// Every problem is listed; any problem fails the command.
pub fn library_lint(path: Option<&Path>, json: bool) -> Result<String, CliError> {
    let text = match path {
        Some(p) => read(p)?,
        None => CANONICAL_LIBRARY_JSON.to_string(),
    };
    let errors = lint(&text);
    let name = path.map_or("canonical library".to_string(), |p| p.display().to_string());
    if errors.is_empty() {
        let n = ActionLibrary::from_json(&text).map(|l| l.len()).unwrap_or(0);
        return Ok(if json {
            json_line(&serde_json::json!({"library": name, "ok": true, "actions": n}))
        } else {
            format!("ok  {name}: {n} actions")
        });
    }
    let lines: Vec<String> = errors
        .iter()
        .map(|e| {
            if json {
                json_line(&serde_json::json!({"library": name, "ok": false, "action_id": e.action_id(), "error": e.to_string()}))
            } else {
                format!("error  {name}: {e}")
            }
        })
        .collect();
    Err(CliError::Failure(lines.join("\n")))
}

pub struct RecommendArgs {
    pub text: Option<String>,
    pub partner_last: Option<String>,
    pub state: Option<ConversationState>,
    pub seed: u64,
    pub no_noise: bool,
    pub all: bool,
    pub library: Option<PathBuf>,
    pub json: bool,
}

/// Offline recommendation with fresh preferences.
pub fn recommend(args: RecommendArgs) -> Result<String, CliError> {
    let library = load_library(args.library.as_deref())?;
    let mut ctx = RecommendationContext::new("cli").with_seed(args.seed);
    if let Some(t) = args.text {
        ctx = ctx.with_text(t);
    }
    if let Some(p) = args.partner_last {
        ctx = ctx.after_partner_action(p);
    }
    if let Some(s) = args.state {
        ctx.conversation_state = s;
    }
    let weights = if args.no_noise { Weights::default().without_noise() } else { Weights::default() };
    let engine = Recommender::new(weights, TextInterpreter::offline(library.embedding_dimension()));
    let store = PreferenceStore::new();
    let rows = if args.all {
        engine.rank_all(&ctx, &library, &store)
    } else {
        engine.recommend(&ctx, &library, &store)
    }
    .map_err(|e| CliError::Failure(e.to_string()))?;
    if args.json {
        return Ok(rows.iter().map(json_line).collect::<Vec<_>>().join("\n"));
    }
    let mut out = format!("{:<4} {:<20} {:>8} {:>7} {:>7} {:>7} {:>7}\n", "rank", "action", "total", "text", "ctx", "pref", "noise");
    for (i, r) in rows.iter().enumerate() {
        out.push_str(&format!(
            "{:<4} {:<20} {:>8.3} {:>7.3} {:>7.3} {:>7.3} {:>7.3}\n",
            i + 1,
            r.action_id,
            r.total,
            r.s_text,
            r.s_ctx,
            r.preference,
            r.noise
        ));
    }
    Ok(out.trim_end().to_string())
}

pub struct NarrateArgs {
    pub action: String,
    pub story: Option<String>,
    pub story_file: Option<PathBuf>,
    pub tags: Vec<String>,
    pub show_tags: bool,
    pub offline: bool,
    pub library: Option<PathBuf>,
    pub json: bool,
}

pub fn narrate(args: NarrateArgs) -> Result<String, CliError> {
    let library = load_library(args.library.as_deref())?;
    let story_text = match (&args.story, &args.story_file) {
        (Some(_), Some(_)) => return Err(CliError::Usage("give --story or --story-file, not both".into())),
        (Some(s), None) => s.clone(),
        (None, Some(p)) => read(p)?,
        (None, None) => String::new(),
    };
    let story = if story_text.trim().is_empty() {
        PersonalStory::empty("cli")
    } else {
        StoryBook::in_memory()
            .update("cli", story_text.trim_end(), 0)
            .map_err(|e| CliError::Failure(e.to_string()))?
    };
    let narrator = if args.offline {
        Narrator::offline()
    } else {
        let config = ProviderConfig::offline()
            .with_env_overrides()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        let provider = config.build_provider().map_err(|e| CliError::Usage(e.to_string()))?;
        Narrator::with_provider(provider)
    };
    let m = narrator
        .generate(&library, &args.action, &story, &[], &args.tags)
        .map_err(|e| CliError::Failure(e.to_string()))?;
    let tags = args.show_tags.then(|| narrator.propose_tags(&story));
    if args.json {
        let mut lines = vec![json_line(&m)];
        if let Some(t) = tags {
            lines.push(json_line(&t));
        }
        return Ok(lines.join("\n"));
    }
    let mut out = m.text.clone();
    if let Some(t) = tags {
        for (name, list) in [
            ("likes/dislikes", &t.likes_dislikes),
            ("habits", &t.habits),
            ("social style", &t.social_style),
            ("emotion", &t.emotion),
        ] {
            out.push_str(&format!("\n{name:<15} {}", list.join(", ")));
        }
    }
    Ok(out)
}

/// Prints the stored records of one conversation from a data directory.
pub fn export(conversation_id: &str, data_dir: &Path, json: bool) -> Result<String, CliError> {
    if !data_dir.join("meta.jsonl").exists() {
        return Err(CliError::Usage(format!("{} is not a data directory", data_dir.display())));
    }
    let store = ConversationStore::open(data_dir, Arc::new(SystemClock), 60_000)
        .map_err(|e| CliError::Failure(e.to_string()))?;
    let records = store.export(conversation_id).map_err(|e| CliError::Failure(e.to_string()))?;
    if json {
        return Ok(records.iter().map(json_line).collect::<Vec<_>>().join("\n"));
    }
    let mut out = format!("{:<8} {:<14} {:<12} {:<22} {:<20} content\n", "id", "timestamp", "sender", "kind", "action");
    for r in &records {
        let content = r
            .micronarrative
            .as_ref()
            .map(|c| c.text.clone())
            .or_else(|| r.text.clone())
            .unwrap_or_default();
        out.push_str(&format!(
            "{:<8} {:<14} {:<12} {:<22} {:<20} {content}\n",
            r.record_id,
            r.timestamp,
            r.sender_id,
            r.kind.as_str(),
            r.action_id.as_deref().unwrap_or("-"),
        ));
    }
    Ok(out.trim_end().to_string())
}

pub async fn run_script(path: &Path, json: bool) -> Result<String, CliError> {
    let source = if path == Path::new("-") {
        std::io::read_to_string(std::io::stdin()).map_err(|e| CliError::Usage(format!("stdin: {e}")))?
    } else {
        read(path)?
    };
    let script = script::parse(&source)?;
    let report = runner::run(&script, GatewayConfig::default()).await?;
    let text = if json {
        report
            .steps
            .iter()
            .map(json_line)
            .chain(std::iter::once(json_line(&serde_json::json!({"passed": report.passed(), "skipped": report.skipped}))))
            .collect::<Vec<_>>()
            .join("\n")
    } else {
        report.render().trim_end().to_string()
    };
    if report.passed() {
        Ok(text)
    } else {
        Err(CliError::Failure(text))
    }
}
