//! Text understanding behind a provider abstraction.
//!
//! A [`LanguageProvider`] extracts keywords, detects negation, classifies
//! valence, embeds text and completes prompts. [`OfflineProvider`] does all of
//! this deterministically with no network; [`RemoteProvider`] forwards to an
//! HTTP service. [`TextInterpreter`] wraps either one with the embedding cache.

mod cache;
mod offline;
mod remote;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::{CacheKey, EmbeddingCache};
pub use offline::{content_words, tokenize, OfflineProvider, Token};
pub use remote::RemoteProvider;

use crate::library::{ActionLibrary, Emotion};

/// Valence of an utterance shares the action emotion scale.
pub type Valence = Emotion;

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("provider unreachable: {0}")]
    Unreachable(String),
    #[error("provider returned an invalid response: {0}")]
    InvalidResponse(String),
    #[error("embedding dimension mismatch: library expects {expected}, provider returned {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("provider configuration: {0}")]
    Config(String),
    #[error("the offline provider cannot complete free-form prompts")]
    CompletionUnsupported,
    #[error("embedding cache: {0}")]
    Cache(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Offline,
    Remote,
}

/// Keyword, negation and valence output of a provider (no embedding).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interpretation {
    pub keywords: BTreeSet<String>,
    pub negated_keywords: BTreeSet<String>,
    /// Whole-utterance valence with negated terms flipped.
    pub valence: Valence,
    /// Polarity of the emotional terms as written, before negation flips.
    /// Negation is penalized through keyword matching, so alignment with an
    /// action's emotion reads this value.
    pub affect: Valence,
}

impl Interpretation {
    pub fn neutral() -> Self {
        Self {
            keywords: BTreeSet::new(),
            negated_keywords: BTreeSet::new(),
            valence: Valence::Neutral,
            affect: Valence::Neutral,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextAnalysis {
    pub keywords: BTreeSet<String>,
    pub negated_keywords: BTreeSet<String>,
    pub valence: Valence,
    pub affect: Valence,
    pub embedding: Vec<f64>,
}

impl TextAnalysis {
    /// Non-negated keywords.
    pub fn affirmed_keywords(&self) -> impl Iterator<Item = &String> {
        self.keywords
            .iter()
            .filter(|k| !self.negated_keywords.contains(*k))
    }
}

pub trait LanguageProvider: Send + Sync {
    /// Stable identifier; part of every cache key.
    fn id(&self) -> &str;
    fn kind(&self) -> ProviderKind;
    fn interpret(&self, text: &str) -> Result<Interpretation, ProviderError>;
    fn embed(&self, text: &str, dimension: usize) -> Result<Vec<f64>, ProviderError>;
    fn complete(&self, prompt: &str) -> Result<String, ProviderError>;
}

/// Selects and configures a provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub provider_kind: ProviderKind,
    #[serde(default)]
    pub endpoint: Option<String>,
    /// Bearer credential for the remote provider. Only read from the
    /// environment, never persisted.
    #[serde(skip)]
    pub credentials: Option<String>,
    #[serde(default)]
    pub cache_path: Option<PathBuf>,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self::offline()
    }
}

impl ProviderConfig {
    pub fn offline() -> Self {
        Self {
            provider_kind: ProviderKind::Offline,
            endpoint: None,
            credentials: None,
            cache_path: None,
        }
    }

    /// Applies `DYAD_PROVIDER`, `DYAD_PROVIDER_ENDPOINT`, `DYAD_PROVIDER_TOKEN`
    /// and `DYAD_EMBEDDING_CACHE` on top of `self`.
    pub fn with_env_overrides(mut self) -> Result<Self, ProviderError> {
        if let Ok(kind) = std::env::var("DYAD_PROVIDER") {
            self.provider_kind = match kind.trim() {
                "offline" => ProviderKind::Offline,
                "remote" => ProviderKind::Remote,
                other => return Err(ProviderError::Config(format!("unknown provider kind {other:?}"))),
            };
        }
        if let Ok(endpoint) = std::env::var("DYAD_PROVIDER_ENDPOINT") {
            self.endpoint = Some(endpoint);
        }
        if let Ok(token) = std::env::var("DYAD_PROVIDER_TOKEN") {
            self.credentials = Some(token);
        }
        if let Ok(path) = std::env::var("DYAD_EMBEDDING_CACHE") {
            self.cache_path = Some(path.into());
        }
        Ok(self)
    }

    pub fn build_provider(&self) -> Result<Arc<dyn LanguageProvider>, ProviderError> {
        match self.provider_kind {
            ProviderKind::Offline => Ok(Arc::new(OfflineProvider::new())),
            ProviderKind::Remote => {
                let endpoint = self
                    .endpoint
                    .as_deref()
                    .ok_or_else(|| ProviderError::Config("remote provider needs an endpoint".into()))?;
                Ok(Arc::new(RemoteProvider::new(endpoint, self.credentials.clone())))
            }
        }
    }
}

pub fn content_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Cosine similarity; zero when either vector is zero.
pub fn cosine(u: &[f64], v: &[f64]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    (dot / (nu * nv)).clamp(-1.0, 1.0)
}

pub fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
    v
}

/// A provider bound to one embedding dimension plus its caches.
#[derive(Clone)]
pub struct TextInterpreter {
    provider: Arc<dyn LanguageProvider>,
    dimension: usize,
    embeddings: Arc<EmbeddingCache>,
    interpretations: Arc<RwLock<HashMap<String, Interpretation>>>,
}

impl std::fmt::Debug for TextInterpreter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TextInterpreter")
            .field("provider", &self.provider.id())
            .field("dimension", &self.dimension)
            .finish()
    }
}

impl TextInterpreter {
    pub fn new(provider: Arc<dyn LanguageProvider>, dimension: usize, cache: Arc<EmbeddingCache>) -> Self {
        Self {
            provider,
            dimension,
            embeddings: cache,
            interpretations: Arc::default(),
        }
    }

    /// Offline provider with an in-memory cache.
    pub fn offline(dimension: usize) -> Self {
        Self::new(Arc::new(OfflineProvider::new()), dimension, Arc::new(EmbeddingCache::in_memory()))
    }

    pub fn from_config(config: &ProviderConfig, dimension: usize) -> Result<Self, ProviderError> {
        let cache = match &config.cache_path {
            Some(path) => EmbeddingCache::open(path)?,
            None => EmbeddingCache::in_memory(),
        };
        Ok(Self::new(config.build_provider()?, dimension, Arc::new(cache)))
    }

    pub fn provider(&self) -> &Arc<dyn LanguageProvider> {
        &self.provider
    }

    pub fn provider_id(&self) -> &str {
        self.provider.id()
    }

    pub fn kind(&self) -> ProviderKind {
        self.provider.kind()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Same provider kind semantics, offline, sharing this cache.
    pub fn offline_fallback(&self) -> Self {
        Self::new(Arc::new(OfflineProvider::new()), self.dimension, self.embeddings.clone())
    }

    pub fn analyze(&self, text: &str) -> Result<TextAnalysis, ProviderError> {
        let interpretation = self.interpret(text)?;
        let embedding = self.embed(text)?;
        Ok(TextAnalysis {
            keywords: interpretation.keywords,
            negated_keywords: interpretation.negated_keywords,
            valence: interpretation.valence,
            affect: interpretation.affect,
            embedding,
        })
    }

    fn interpret(&self, text: &str) -> Result<Interpretation, ProviderError> {
        if self.provider.kind() == ProviderKind::Offline {
            return self.provider.interpret(text);
        }
        let key = format!("{}|{}", self.provider.id(), content_hash(text));
        if let Some(hit) = self.interpretations.read().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let mut fresh = self.provider.interpret(text)?;
        fresh.negated_keywords.retain(|k| fresh.keywords.contains(k));
        self.interpretations.write().unwrap().insert(key, fresh.clone());
        Ok(fresh)
    }

    /// Unit-norm embedding at the configured dimension; zero for empty text.
    pub fn embed(&self, text: &str) -> Result<Vec<f64>, ProviderError> {
        let key = CacheKey::new(self.provider.id(), self.dimension, text);
        if let Some(hit) = self.embeddings.get(&key) {
            return Ok(hit);
        }
        let raw = self.provider.embed(text, self.dimension)?;
        if raw.len() != self.dimension {
            return Err(ProviderError::DimensionMismatch {
                expected: self.dimension,
                found: raw.len(),
            });
        }
        let vector = normalize(raw);
        self.embeddings.insert(key, vector.clone())?;
        Ok(vector)
    }

    /// Embeddings for every action, reusing ones stored in the library when
    /// they came from this provider at this dimension.
    pub fn action_embeddings(&self, library: &ActionLibrary) -> Result<BTreeMap<String, Vec<f64>>, ProviderError> {
        if library.embedding_dimension() != self.dimension {
            return Err(ProviderError::DimensionMismatch {
                expected: library.embedding_dimension(),
                found: self.dimension,
            });
        }
        let stored_usable = library.embedding_provider() == Some(self.provider.id());
        let mut out = BTreeMap::new();
        for action in library.actions() {
            let vector = match (&action.embedding, stored_usable) {
                (Some(v), true) => v.clone(),
                _ => self.embed(&action.embedding_text())?,
            };
            out.insert(action.id.clone(), vector);
        }
        Ok(out)
    }
}
