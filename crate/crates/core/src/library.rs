//! The expressive action library and its reaction-candidate graph.
//!
//! A library is an immutable snapshot. Mutations (`upsert_action`,
//! `remove_action`) validate the would-be result and hand back a new
//! snapshot with `version + 1`, leaving the original untouched.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The document shipped with the crate.
pub const CANONICAL_LIBRARY_JSON: &str = include_str!("../data/actions.json");

/// First-person phrase per action, used by the offline caption template.
pub const CANONICAL_PHRASES_JSON: &str = include_str!("../data/phrases.json");

/// Accepted deviation of a stored embedding's L2 norm from 1.
pub const EMBEDDING_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Emotion {
    Positive,
    Negative,
    Neutral,
}

impl Emotion {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "positive" => Some(Self::Positive),
            "negative" => Some(Self::Negative),
            "neutral" => Some(Self::Neutral),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Positive => "positive",
            Self::Negative => "negative",
            Self::Neutral => "neutral",
        }
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionRole {
    /// Expresses the sender's own state.
    SelfOriented,
    /// Answers something the partner did.
    Responsive,
}

impl InteractionRole {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "self_oriented" => Some(Self::SelfOriented),
            "responsive" => Some(Self::Responsive),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::SelfOriented => "self_oriented",
            Self::Responsive => "responsive",
        }
    }
}

/// One expressive gesture in the library.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub id: String,
    pub name: String,
    pub description: String,
    pub keywords: BTreeSet<String>,
    pub emotion: Emotion,
    pub interaction_role: InteractionRole,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
    #[serde(default)]
    pub reaction_candidates: Vec<String>,
}

impl Action {
    /// Text used to embed the action for fuzzy matching.
    pub fn embedding_text(&self) -> String {
        let mut text = format!("{} {}", self.name, self.description);
        for kw in &self.keywords {
            text.push(' ');
            text.push_str(kw);
        }
        text
    }

    pub fn is_responsive(&self) -> bool {
        self.interaction_role == InteractionRole::Responsive
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LibraryError {
    #[error("library must contain at least one action")]
    Empty,
    #[error("library document is not valid JSON: {0}")]
    Parse(String),
    #[error("embedding_dimension must be positive")]
    ZeroDimension,
    #[error("action {id:?}: id must be a lowercase-kebab token")]
    InvalidId { id: String },
    #[error("action {id:?}: duplicate id")]
    DuplicateId { id: String },
    #[error("action {id:?}: reaction candidate {candidate:?} does not exist")]
    DanglingCandidate { id: String, candidate: String },
    #[error("action {id:?}: lists itself as a reaction candidate")]
    SelfCandidate { id: String },
    #[error("action {id:?}: unknown {field} value {value:?}")]
    UnknownEnumValue {
        id: String,
        field: &'static str,
        value: String,
    },
    #[error("action {id:?}: {field} must not be empty")]
    EmptyField { id: String, field: &'static str },
    #[error("action {id:?}: keyword {keyword:?} must be a non-empty lowercase term")]
    InvalidKeyword { id: String, keyword: String },
    #[error("action {id:?}: embedding has dimension {found}, library declares {expected}")]
    EmbeddingDimension {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("action {id:?}: embedding norm {norm} is not 1")]
    EmbeddingNorm { id: String, norm: f64 },
    #[error("unknown action {id:?}")]
    UnknownAction { id: String },
    #[error("cannot remove {id:?}: still referenced by {referenced_by:?}")]
    StillReferenced { id: String, referenced_by: String },
    #[error("reading library file: {0}")]
    Io(String),
}

impl LibraryError {
    /// The action id the error is about, when there is one.
    pub fn action_id(&self) -> Option<&str> {
        match self {
            Self::InvalidId { id }
            | Self::DuplicateId { id }
            | Self::DanglingCandidate { id, .. }
            | Self::SelfCandidate { id }
            | Self::UnknownEnumValue { id, .. }
            | Self::EmptyField { id, .. }
            | Self::InvalidKeyword { id, .. }
            | Self::EmbeddingDimension { id, .. }
            | Self::EmbeddingNorm { id, .. }
            | Self::UnknownAction { id }
            | Self::StillReferenced { id, .. } => Some(id),
            _ => None,
        }
    }
}

// Enum fields are read as strings so a bad value can be reported against the
// action that carries it instead of as a bare serde error.
#[derive(Debug, Deserialize)]
struct RawAction {
    id: String,
    #[serde(default)]
    name: String,
    #[serde(default)]
    description: String,
    #[serde(default)]
    keywords: Vec<String>,
    emotion: String,
    interaction_role: String,
    #[serde(default)]
    embedding: Option<Vec<f64>>,
    #[serde(default)]
    reaction_candidates: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct RawDocument {
    #[serde(default)]
    version: u64,
    embedding_dimension: usize,
    #[serde(default)]
    embedding_provider: Option<String>,
    #[serde(default)]
    actions: Vec<RawAction>,
}

#[derive(Serialize)]
struct DocumentRef<'a> {
    version: u64,
    embedding_dimension: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    embedding_provider: Option<&'a str>,
    actions: Vec<&'a Action>,
}

/// A validated, immutable library snapshot keyed by action id.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionLibrary {
    actions: BTreeMap<String, Action>,
    embedding_dimension: usize,
    version: u64,
    /// Provider that computed the stored embeddings, if any are stored.
    embedding_provider: Option<String>,
}

impl ActionLibrary {
    /// The library shipped with the crate (42 actions).
    pub fn canonical() -> Self {
        Self::from_json(CANONICAL_LIBRARY_JSON).expect("shipped library is valid")
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, LibraryError> {
        let text =
            std::fs::read_to_string(path.as_ref()).map_err(|e| LibraryError::Io(e.to_string()))?;
        Self::from_json(&text)
    }

    /// Parses and validates a library document, failing on the first problem.
    pub fn from_json(text: &str) -> Result<Self, LibraryError> {
        match parse_and_validate(text) {
            Ok(lib) => Ok(lib),
            Err(mut errors) => Err(errors.remove(0)),
        }
    }

    /// Builds a library from already-typed actions.
    pub fn new(
        actions: Vec<Action>,
        embedding_dimension: usize,
        version: u64,
    ) -> Result<Self, LibraryError> {
        let mut errors = Vec::new();
        let map = index_actions(actions, &mut errors);
        let lib = Self {
            actions: map,
            embedding_dimension,
            version,
            embedding_provider: None,
        };
        lib.check(&mut errors);
        match errors.into_iter().next() {
            Some(e) => Err(e),
            None => Ok(lib),
        }
    }

    pub fn to_json(&self) -> String {
        let doc = DocumentRef {
            version: self.version,
            embedding_dimension: self.embedding_dimension,
            embedding_provider: self.embedding_provider.as_deref(),
            actions: self.actions.values().collect(),
        };
        serde_json::to_string_pretty(&doc).expect("library serializes")
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn embedding_dimension(&self) -> usize {
        self.embedding_dimension
    }

    pub fn embedding_provider(&self) -> Option<&str> {
        self.embedding_provider.as_deref()
    }

    pub fn get(&self, id: &str) -> Option<&Action> {
        self.actions.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.actions.contains_key(id)
    }

    /// Actions in ascending id order.
    pub fn actions(&self) -> impl Iterator<Item = &Action> {
        self.actions.values()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.actions.keys().map(String::as_str)
    }

    /// Resolves the ordered reaction candidates of `id`.
    pub fn reaction_candidates_of(&self, id: &str) -> Result<Vec<&Action>, LibraryError> {
        let action = self.get(id).ok_or_else(|| LibraryError::UnknownAction { id: id.into() })?;
        Ok(action
            .reaction_candidates
            .iter()
            .filter_map(|c| self.actions.get(c))
            .collect())
    }

    /// Inserts or replaces an action, returning the next version.
    pub fn upsert_action(&self, action: Action) -> Result<Self, LibraryError> {
        let mut next = self.clone();
        next.actions.insert(action.id.clone(), action);
        next.version += 1;
        let mut errors = Vec::new();
        next.check(&mut errors);
        match errors.into_iter().next() {
            Some(e) => Err(e),
            None => Ok(next),
        }
    }

    /// Removes an action no other action still points at.
    pub fn remove_action(&self, id: &str) -> Result<Self, LibraryError> {
        if !self.contains(id) {
            return Err(LibraryError::UnknownAction { id: id.into() });
        }
        if let Some(referrer) = self
            .actions
            .values()
            .find(|a| a.id != id && a.reaction_candidates.iter().any(|c| c == id))
        {
            return Err(LibraryError::StillReferenced {
                id: id.into(),
                referenced_by: referrer.id.clone(),
            });
        }
        let mut next = self.clone();
        next.actions.remove(id);
        if next.actions.is_empty() {
            return Err(LibraryError::Empty);
        }
        next.version += 1;
        Ok(next)
    }

    /// Stores embeddings computed by `provider_id`, replacing any previous set.
    pub fn with_embeddings(
        &self,
        provider_id: &str,
        embeddings: &BTreeMap<String, Vec<f64>>,
    ) -> Result<Self, LibraryError> {
        let mut next = self.clone();
        for (id, action) in next.actions.iter_mut() {
            action.embedding = embeddings.get(id).cloned();
        }
        next.embedding_provider = Some(provider_id.to_string());
        let mut errors = Vec::new();
        next.check(&mut errors);
        match errors.into_iter().next() {
            Some(e) => Err(e),
            None => Ok(next),
        }
    }

    fn check(&self, errors: &mut Vec<LibraryError>) {
        if self.actions.is_empty() {
            errors.push(LibraryError::Empty);
        }
        if self.embedding_dimension == 0 {
            errors.push(LibraryError::ZeroDimension);
        }
        for action in self.actions.values() {
            check_action(action, self.embedding_dimension, errors);
            for candidate in &action.reaction_candidates {
                if candidate == &action.id {
                    errors.push(LibraryError::SelfCandidate {
                        id: action.id.clone(),
                    });
                } else if !self.actions.contains_key(candidate) {
                    errors.push(LibraryError::DanglingCandidate {
                        id: action.id.clone(),
                        candidate: candidate.clone(),
                    });
                }
            }
        }
    }
}

/// Validates a library document and reports every problem found.
///
/// An empty vector means the document loads.
pub fn lint(text: &str) -> Vec<LibraryError> {
    match parse_and_validate(text) {
        Ok(_) => Vec::new(),
        Err(errors) => errors,
    }
}

fn parse_and_validate(text: &str) -> Result<ActionLibrary, Vec<LibraryError>> {
    let raw: RawDocument =
        serde_json::from_str(text).map_err(|e| vec![LibraryError::Parse(e.to_string())])?;
    let mut errors = Vec::new();
    let mut actions = Vec::with_capacity(raw.actions.len());
    for ra in raw.actions {
        let emotion = Emotion::parse(&ra.emotion);
        if emotion.is_none() {
            errors.push(LibraryError::UnknownEnumValue {
                id: ra.id.clone(),
                field: "emotion",
                value: ra.emotion.clone(),
            });
        }
        let role = InteractionRole::parse(&ra.interaction_role);
        if role.is_none() {
            errors.push(LibraryError::UnknownEnumValue {
                id: ra.id.clone(),
                field: "interaction_role",
                value: ra.interaction_role.clone(),
            });
        }
        let (Some(emotion), Some(interaction_role)) = (emotion, role) else {
            continue;
        };
        actions.push(Action {
            id: ra.id,
            name: ra.name,
            description: ra.description,
            keywords: ra.keywords.into_iter().collect(),
            emotion,
            interaction_role,
            embedding: ra.embedding,
            reaction_candidates: ra.reaction_candidates,
        });
    }
    let had_enum_errors = !errors.is_empty();
    let map = index_actions(actions, &mut errors);
    let lib = ActionLibrary {
        actions: map,
        embedding_dimension: raw.embedding_dimension,
        version: raw.version,
        embedding_provider: raw.embedding_provider,
    };
    // Skipped actions would show up as dangling references; keep the report
    // focused on the real cause.
    let mut graph_errors = Vec::new();
    lib.check(&mut graph_errors);
    if had_enum_errors {
        graph_errors.retain(|e| !matches!(e, LibraryError::DanglingCandidate { .. } | LibraryError::Empty));
    }
    errors.extend(graph_errors);
    if errors.is_empty() {
        Ok(lib)
    } else {
        Err(errors)
    }
}

fn index_actions(actions: Vec<Action>, errors: &mut Vec<LibraryError>) -> BTreeMap<String, Action> {
    let mut seen = HashSet::new();
    let mut map = BTreeMap::new();
    for action in actions {
        if !seen.insert(action.id.clone()) {
            errors.push(LibraryError::DuplicateId {
                id: action.id.clone(),
            });
            continue;
        }
        map.insert(action.id.clone(), action);
    }
    map
}

fn check_action(action: &Action, dimension: usize, errors: &mut Vec<LibraryError>) {
    if !is_kebab_token(&action.id) {
        errors.push(LibraryError::InvalidId {
            id: action.id.clone(),
        });
    }
    if action.name.trim().is_empty() {
        errors.push(LibraryError::EmptyField {
            id: action.id.clone(),
            field: "name",
        });
    }
    if action.description.trim().is_empty() {
        errors.push(LibraryError::EmptyField {
            id: action.id.clone(),
            field: "description",
        });
    }
    for kw in &action.keywords {
        if kw.is_empty() || kw.trim() != kw || kw.to_lowercase() != *kw {
            errors.push(LibraryError::InvalidKeyword {
                id: action.id.clone(),
                keyword: kw.clone(),
            });
        }
    }
    if let Some(embedding) = &action.embedding {
        if embedding.len() != dimension {
            errors.push(LibraryError::EmbeddingDimension {
                id: action.id.clone(),
                expected: dimension,
                found: embedding.len(),
            });
        } else {
            let norm = embedding.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > EMBEDDING_NORM_TOLERANCE {
                errors.push(LibraryError::EmbeddingNorm {
                    id: action.id.clone(),
                    norm,
                });
            }
        }
    }
}

fn is_kebab_token(id: &str) -> bool {
    !id.is_empty()
        && !id.starts_with('-')
        && !id.ends_with('-')
        && !id.contains("--")
        && id
            .chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-')
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(cry_candidates: &str) -> String {
        format!(
            r#"{{"version":1,"embedding_dimension":4,"actions":[
              {{"id":"cry","name":"Cry","description":"Sheds tears.","keywords":["sad"],
                "emotion":"negative","interaction_role":"self_oriented",
                "reaction_candidates":{cry_candidates}}},
              {{"id":"wipe-others-tears","name":"Wipe","description":"Wipes tears.","keywords":["tears"],
                "emotion":"positive","interaction_role":"responsive","reaction_candidates":["hug"]}},
              {{"id":"hug","name":"Hug","description":"Hugs.","keywords":["hug"],
                "emotion":"positive","interaction_role":"responsive","reaction_candidates":[]}}
            ]}}"#
        )
    }

    #[test]
    fn three_action_fixture_loads() {
        let lib = ActionLibrary::from_json(&fixture(r#"["wipe-others-tears"]"#)).unwrap();
        assert_eq!(lib.len(), 3);
        let c: Vec<_> = lib.reaction_candidates_of("cry").unwrap().iter().map(|a| a.id.as_str()).collect();
        assert_eq!(c, ["wipe-others-tears"]);
    }

    #[test]
    fn dangling_candidate_names_the_referrer() {
        let err = ActionLibrary::from_json(&fixture(r#"["wipe-others-tearz"]"#)).unwrap_err();
        assert_eq!(err.action_id(), Some("cry"));
        assert!(matches!(err, LibraryError::DanglingCandidate { .. }));
        assert!(err.to_string().contains("cry"));
    }

    #[test]
    fn self_candidate_rejected() {
        let err = ActionLibrary::from_json(&fixture(r#"["cry"]"#)).unwrap_err();
        assert_eq!(err, LibraryError::SelfCandidate { id: "cry".into() });
    }

    #[test]
    fn empty_document() {
        let err = ActionLibrary::from_json(r#"{"version":1,"embedding_dimension":8,"actions":[]}"#)
            .unwrap_err();
        assert_eq!(err.to_string(), "library must contain at least one action");
    }

    #[test]
    fn bad_enum_is_reported_with_id() {
        let doc = fixture("[]").replace(r#""emotion":"positive","interaction_role":"responsive","reaction_candidates":["hug"]"#,
            r#""emotion":"joyful","interaction_role":"responsive","reaction_candidates":["hug"]"#);
        let errors = lint(&doc);
        assert_eq!(errors.len(), 1, "{errors:?}");
        assert_eq!(errors[0].action_id(), Some("wipe-others-tears"));
    }

    #[test]
    fn embedding_dimension_and_norm_checked() {
        let doc = fixture("[]").replace(r#""keywords":["hug"],"#, r#""keywords":["hug"],"embedding":[1.0,0.0],"#);
        assert!(matches!(
            ActionLibrary::from_json(&doc).unwrap_err(),
            LibraryError::EmbeddingDimension { ref id, expected: 4, found: 2 } if id == "hug"
        ));
        let doc = fixture("[]").replace(r#""keywords":["hug"],"#, r#""keywords":["hug"],"embedding":[1.0,1.0,0.0,0.0],"#);
        assert!(matches!(ActionLibrary::from_json(&doc).unwrap_err(), LibraryError::EmbeddingNorm { .. }));
    }

    #[test]
    fn invalid_ids_and_keywords() {
        assert!(is_kebab_token("wipe-others-tears"));
        assert!(!is_kebab_token("Wipe"));
        assert!(!is_kebab_token("a--b"));
        assert!(!is_kebab_token("-a"));
        let doc = fixture("[]").replace(r#""keywords":["hug"]"#, r#""keywords":["Hug"]"#);
        assert!(matches!(ActionLibrary::from_json(&doc).unwrap_err(), LibraryError::InvalidKeyword { .. }));
    }

    #[test]
    fn reaction_candidates_of_unknown_and_empty() {
        let lib = ActionLibrary::from_json(&fixture("[]")).unwrap();
        assert!(lib.reaction_candidates_of("hug").unwrap().is_empty());
        assert!(matches!(
            lib.reaction_candidates_of("nope"),
            Err(LibraryError::UnknownAction { .. })
        ));
    }

    #[test]
    fn upsert_and_remove_bump_version() {
        let lib = ActionLibrary::canonical();
        let mut new_action = lib.get("hug").unwrap().clone();
        new_action.id = "group-hug".into();
        new_action.reaction_candidates = vec!["hug".into()];
        let bigger = lib.upsert_action(new_action).unwrap();
        assert_eq!(bigger.len(), 43);
        assert_eq!(bigger.version(), lib.version() + 1);
        assert_eq!(lib.len(), 42, "original snapshot untouched");

        let mut changed = lib.get("nod").unwrap().clone();
        changed.emotion = Emotion::Positive;
        let same = lib.upsert_action(changed).unwrap();
        assert_eq!(same.len(), 42);
        assert_eq!(same.version(), lib.version() + 1);
        assert_eq!(same.get("nod").unwrap().emotion, Emotion::Positive);

        let err = lib.remove_action("agony").unwrap_err();
        assert!(matches!(err, LibraryError::StillReferenced { ref referenced_by, .. } if referenced_by == "hit-with-object"));

        let smaller = bigger.remove_action("group-hug").unwrap();
        assert_eq!(smaller.len(), 42);
        assert_eq!(smaller.version(), lib.version() + 2);
    }

    #[test]
    fn upsert_rejects_dangling_reference() {
        let lib = ActionLibrary::canonical();
        let mut bad = lib.get("hug").unwrap().clone();
        bad.reaction_candidates.push("missing".into());
        assert!(matches!(lib.upsert_action(bad), Err(LibraryError::DanglingCandidate { .. })));
    }

    #[test]
    fn json_round_trip() {
        let lib = ActionLibrary::canonical();
        let again = ActionLibrary::from_json(&lib.to_json()).unwrap();
        assert_eq!(lib, again);
    }
}
