//! Personal stories, tag proposals and micronarrative captions.
//!
//! Captions come from the language provider when it can complete prompts and
//! from a fixed template otherwise:
//!
//! ```text
//! <first-person action phrase>[, with a little <tags> spirit][ \u{2014} <context echo>].
//! ```
//!
//! With no story, no tags and no context the template reduces to the phrase
//! followed by a period.

mod story;
mod tags;

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interpreter::{LanguageProvider, OfflineProvider, ProviderKind};
use crate::library::{Action, ActionLibrary, CANONICAL_PHRASES_JSON};
use crate::store::ExchangeRecord;

pub use story::{PersonalStory, StoryBook, MAX_STORY_CHARS};
pub use tags::{
    normalize_tag, propose_tags_offline, ranked_story_words, TagCategory, TagSelection, TagSet, MAX_TAG_CHARS,
    TAGS_PER_CATEGORY,
};

pub const MAX_CAPTION_CHARS: usize = 200;
pub const CONTEXT_WINDOW: usize = 6;
pub const MAX_TAGS_IN_CAPTION: usize = 3;

pub const MICRONARRATIVE_PROMPT_V1: &str = include_str!("../../prompts/micronarrative.v1.txt");
pub const TAGS_PROMPT_V1: &str = include_str!("../../prompts/tags.v1.txt");

#[derive(Debug, Error)]
pub enum NarrativeError {
    #[error("unknown action {0:?}")]
    UnknownAction(String),
    #[error("story has {0} characters, the limit is 1000")]
    StoryTooLong(usize),
    #[error("caption must not be empty")]
    EmptyCaption,
    #[error("caption has {0} characters, the limit is 200")]
    CaptionTooLong(usize),
    #[error("invalid tag {0:?}")]
    InvalidTag(String),
    #[error("tag {0:?} was neither proposed nor added as a custom tag")]
    UnknownTag(String),
    #[error("story version {given} is older than the version {previous} the caption was built from")]
    StaleStory { given: u64, previous: u64 },
    #[error("phrase table: {0}")]
    Phrases(String),
    #[error("story storage {path}: {message}")]
    Storage { path: PathBuf, message: String },
    #[error("story storage i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratedBy {
    Provider,
    OfflineTemplate,
    UserEdit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Micronarrative {
    pub text: String,
    pub action_id: String,
    pub story_version: u64,
    pub tags_used: Vec<String>,
    pub generated_by: GeneratedBy,
    pub edited: bool,
}

/// Checks a caption is nonempty and within 200 characters, without changing it.
pub fn validate_caption(text: &str) -> Result<(), NarrativeError> {
    if text.trim().is_empty() {
        return Err(NarrativeError::EmptyCaption);
    }
    let n = text.chars().count();
    if n > MAX_CAPTION_CHARS {
        return Err(NarrativeError::CaptionTooLong(n));
    }
    Ok(())
}

/// The user's own text replaces the caption verbatim and marks it edited.
pub fn apply_user_edit(previous: &Micronarrative, text: &str) -> Result<Micronarrative, NarrativeError> {
    validate_caption(text)?;
    Ok(Micronarrative {
        text: text.to_string(),
        generated_by: GeneratedBy::UserEdit,
        edited: true,
        ..previous.clone()
    })
}

fn truncate_chars(s: &str, max: usize) -> String {
    match s.char_indices().nth(max) {
        Some((i, _)) => s[..i].trim_end().to_string(),
        None => s.to_string(),
    }
}

fn join_list(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

/// Tags to weave in: the first three selected, else the story's top keyword.
pub fn caption_tags(story: &PersonalStory, tags: &[String]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for t in tags {
        if let Ok(t) = normalize_tag(t) {
            if !out.contains(&t) && out.len() < MAX_TAGS_IN_CAPTION {
                out.push(t);
            }
        }
    }
    if out.is_empty() && !story.is_empty() {
        out.extend(
            ranked_story_words(&story.text)
                .into_iter()
                .find(|w| TagCategory::classify(w).is_some()),
        );
    }
    out
}

fn context_echo(context: &[ExchangeRecord], library: &ActionLibrary) -> Option<String> {
    let last = context.last()?;
    if let Some(action) = last.action_id.as_deref().and_then(|a| library.get(a)) {
        return Some(format!("answering that {}", action.name.to_lowercase()));
    }
    let text = last.text.as_deref()?;
    ranked_story_words(text).into_iter().next().map(|w| format!("about \"{w}\""))
}

/// The offline caption for `action`. Deterministic in all inputs.
pub fn template_caption(
    phrase: &str,
    story: &PersonalStory,
    tags: &[String],
    context: &[ExchangeRecord],
    library: &ActionLibrary,
) -> (String, Vec<String>) {
    let tags_used = caption_tags(story, tags);
    let window = &context[context.len().saturating_sub(CONTEXT_WINDOW)..];
    let mut text = phrase.to_string();
    if !tags_used.is_empty() {
        text.push_str(&format!(", with a little {} spirit", join_list(&tags_used)));
    }
    if let Some(echo) = context_echo(window, library) {
        text.push_str(" \u{2014} ");
        text.push_str(&echo);
    }
    text.push('.');
    (truncate_chars(&text, MAX_CAPTION_CHARS), tags_used)
}

fn fill(template: &str, slots: &[(&str, String)]) -> String {
    slots
        .iter()
        .fold(template.to_string(), |acc, (k, v)| acc.replace(&format!("{{{{{k}}}}}"), v))
}

/// Produces captions and tag proposals. Uses the provider's completion when
/// it has one and falls back to the offline template on any failure.
#[derive(Clone)]
pub struct Narrator {
    provider: Arc<dyn LanguageProvider>,
    phrases: BTreeMap<String, String>,
}

impl std::fmt::Debug for Narrator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Narrator")
            .field("provider", &self.provider.id())
            .field("phrases", &self.phrases.len())
            .finish()
    }
}

impl Narrator {
    pub fn new(provider: Arc<dyn LanguageProvider>, phrases: BTreeMap<String, String>) -> Self {
        Self { provider, phrases }
    }

    pub fn canonical_phrases() -> BTreeMap<String, String> {
        serde_json::from_str(CANONICAL_PHRASES_JSON).expect("bundled phrase table is valid JSON")
    }

    pub fn parse_phrases(json: &str) -> Result<BTreeMap<String, String>, NarrativeError> {
        serde_json::from_str(json).map_err(|e| NarrativeError::Phrases(e.to_string()))
    }

    pub fn offline() -> Self {
        Self::new(Arc::new(OfflineProvider::new()), Self::canonical_phrases())
    }

    pub fn with_provider(provider: Arc<dyn LanguageProvider>) -> Self {
        Self::new(provider, Self::canonical_phrases())
    }

    pub fn provider_kind(&self) -> ProviderKind {
        self.provider.kind()
    }

    /// First-person phrase for an action; actions outside the table get a
    /// phrase built from their name.
    pub fn phrase(&self, action: &Action) -> String {
        self.phrases
            .get(&action.id)
            .cloned()
            .unwrap_or_else(|| format!("I send you a {}", action.name.to_lowercase()))
    }

    pub fn propose_tags(&self, story: &PersonalStory) -> TagSet {
        self.propose_tags_with_source(story).0
    }

    pub fn propose_tags_with_source(&self, story: &PersonalStory) -> (TagSet, GeneratedBy) {
        if self.provider.kind() == ProviderKind::Remote && !story.is_empty() {
            if let Some(set) = self.remote_tags(story) {
                return (set, GeneratedBy::Provider);
            }
        }
        (propose_tags_offline(&story.text), GeneratedBy::OfflineTemplate)
    }

    fn remote_tags(&self, story: &PersonalStory) -> Option<TagSet> {
        let categories = TagCategory::ALL
            .iter()
            .map(|c| format!("- {}: {}", c.as_str(), c.definition()))
            .collect::<Vec<_>>()
            .join("\n");
        let prompt = fill(TAGS_PROMPT_V1, &[("categories", categories), ("story", story.text.clone())]);
        let reply = self.provider.complete(&prompt).ok()?;
        let start = reply.find('{')?;
        let end = reply.rfind('}')?;
        let parsed: HashMap<String, Vec<String>> = serde_json::from_str(reply.get(start..=end)?).ok()?;
        let mut candidates = HashMap::new();
        for category in TagCategory::ALL {
            let tags = parsed.get(category.as_str())?;
            if tags.is_empty() {
                return None;
            }
            candidates.insert(category, tags.clone());
        }
        Some(TagSet::from_candidates(candidates))
    }

    pub fn generate(
        &self,
        library: &ActionLibrary,
        action_id: &str,
        story: &PersonalStory,
        context: &[ExchangeRecord],
        tags: &[String],
    ) -> Result<Micronarrative, NarrativeError> {
        let action = library
            .get(action_id)
            .ok_or_else(|| NarrativeError::UnknownAction(action_id.to_string()))?;
        let phrase = self.phrase(action);
        let window = &context[context.len().saturating_sub(CONTEXT_WINDOW)..];
        let (template, tags_used) = template_caption(&phrase, story, tags, window, library);
        let (text, generated_by) = match self.remote_caption(action, &phrase, story, window, &tags_used, library) {
            Some(text) => (text, GeneratedBy::Provider),
            None => (template, GeneratedBy::OfflineTemplate),
        };
        Ok(Micronarrative {
            text,
            action_id: action.id.clone(),
            story_version: story.version,
            tags_used,
            generated_by,
            edited: false,
        })
    }

    fn remote_caption(
        &self,
        action: &Action,
        phrase: &str,
        story: &PersonalStory,
        context: &[ExchangeRecord],
        tags: &[String],
        library: &ActionLibrary,
    ) -> Option<String> {
        if self.provider.kind() != ProviderKind::Remote {
            return None;
        }
        let context_lines = context
            .iter()
            .map(|r| {
                let action = r
                    .action_id
                    .as_deref()
                    .map(|a| library.get(a).map_or(a.to_string(), |x| x.name.clone()));
                let said = r.text.clone().or_else(|| r.micronarrative.as_ref().map(|c| c.text.clone()));
                format!(
                    "- {}: {}{}",
                    r.sender_id,
                    action.map(|a| format!("[{a}] ")).unwrap_or_default(),
                    said.unwrap_or_default()
                )
            })
            .collect::<Vec<_>>()
            .join("\n");
        let prompt = fill(
            MICRONARRATIVE_PROMPT_V1,
            &[
                ("action_name", action.name.clone()),
                ("action_description", action.description.clone()),
                ("phrase", phrase.to_string()),
                ("story", if story.is_empty() { "(none)".into() } else { story.text.clone() }),
                ("tags", if tags.is_empty() { "(none)".into() } else { tags.join(", ") }),
                ("context", if context.is_empty() { "(none)".into() } else { context_lines }),
            ],
        );
        let reply = self.provider.complete(&prompt).ok()?;
        let text = reply.trim().trim_matches('"').trim().to_string();
        validate_caption(&text).ok()?;
        Some(text)
    }

    /// A fresh caption from tags and story. The previous caption's text is
    /// never consulted, so an edited caption stays exactly as the user left it.
    pub fn regenerate(
        &self,
        library: &ActionLibrary,
        previous: &Micronarrative,
        new_tags: &[String],
        story: &PersonalStory,
        context: &[ExchangeRecord],
    ) -> Result<Micronarrative, NarrativeError> {
        if story.version < previous.story_version {
            return Err(NarrativeError::StaleStory {
                given: story.version,
                previous: previous.story_version,
            });
        }
        self.generate(library, &previous.action_id, story, context, new_tags)
    }
}
