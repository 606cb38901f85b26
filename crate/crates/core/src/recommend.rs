//! Contextual action recommendation.
//!
//! Every action `a` gets a global score
//!
//! ```text
//! total(a) = w_text·s_text(a) + w_ctx·s_ctx(a) + w_pref·preference(a) + noise(a)
//! ```
//!
//! and the four highest totals are recommended. `s_text` interprets the draft
//! text in three layers (keyword match with negation, valence alignment, and
//! an embedding fallback when the first two are neutral). `s_ctx` rewards
//! complementary reactions to the partner's last action and responsive
//! actions when the partner moved last.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interpreter::{cosine, ProviderError, TextAnalysis, TextInterpreter, Valence};
use crate::library::{Action, ActionLibrary};
use crate::preference::PreferenceStore;

pub const TOP_K: usize = 4;

pub const KEYWORD_MATCH: f64 = 3.0;
pub const POLAR_ALIGNMENT: f64 = 2.0;
pub const NEUTRAL_ALIGNMENT: f64 = 1.0;
pub const EMBEDDING_SCALE: f64 = 2.0;
pub const REACTION_BONUS: f64 = 5.0;
pub const RESPONSIVE_BONUS: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Weights {
    pub w_text: f64,
    pub w_ctx: f64,
    pub w_pref: f64,
    pub noise_amplitude: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            w_text: 1.0,
            w_ctx: 1.0,
            w_pref: 0.5,
            noise_amplitude: 0.05,
        }
    }
}

impl Weights {
    pub fn without_noise(self) -> Self {
        Self {
            noise_amplitude: 0.0,
            ..self
        }
    }

    pub fn validate(&self) -> Result<(), RecommendError> {
        let all_finite = [self.w_text, self.w_ctx, self.w_pref, self.noise_amplitude]
            .iter()
            .all(|w| w.is_finite());
        if !all_finite || self.noise_amplitude < 0.0 {
            return Err(RecommendError::InvalidWeights(*self));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConversationState {
    Opening,
    PartnerActedLast,
    SelfActedLast,
    Idle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationContext {
    pub user_id: String,
    /// `None` is the "without input" mode; the text channel then scores 0.
    pub draft_text: Option<String>,
    pub partner_last_action: Option<String>,
    pub conversation_state: ConversationState,
    pub seed: u64,
}

impl RecommendationContext {
    pub fn new(user_id: impl Into<String>) -> Self {
        Self {
            user_id: user_id.into(),
            draft_text: None,
            partner_last_action: None,
            conversation_state: ConversationState::Opening,
            seed: 0,
        }
    }

    pub fn with_text(mut self, text: impl Into<String>) -> Self {
        self.draft_text = Some(text.into());
        self
    }

    /// The partner's action is the most recent move in the conversation.
    pub fn after_partner_action(mut self, action_id: impl Into<String>) -> Self {
        self.partner_last_action = Some(action_id.into());
        self.conversation_state = ConversationState::PartnerActedLast;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self, library: &ActionLibrary) -> Result<(), RecommendError> {
        if let Some(partner) = &self.partner_last_action {
            if !library.contains(partner) {
                return Err(RecommendError::UnknownAction(partner.clone()));
            }
        }
        if self.conversation_state == ConversationState::PartnerActedLast && self.partner_last_action.is_none() {
            return Err(RecommendError::InvalidContext(
                "partner_acted_last requires partner_last_action".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub action_id: String,
    pub s_text: f64,
    pub s_ctx: f64,
    pub preference: f64,
    pub noise: f64,
    pub total: f64,
}

impl ScoreBreakdown {
    /// Re-derives the total from the stored terms.
    pub fn recompose(&self, weights: &Weights) -> f64 {
        weights.w_text * self.s_text + weights.w_ctx * self.s_ctx + weights.w_pref * self.preference + self.noise
    }
}

#[derive(Debug, Error)]
pub enum RecommendError {
    #[error("the action library is empty")]
    EmptyLibrary,
    #[error("unknown action {0:?}")]
    UnknownAction(String),
    #[error("invalid recommendation context: {0}")]
    InvalidContext(String),
    #[error("weights must be finite with a nonnegative noise amplitude: {0:?}")]
    InvalidWeights(Weights),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// Keyword layer: +3 on an affirmed match, −3 when only negated terms match.
pub fn keyword_term(analysis: &TextAnalysis, action: &Action) -> f64 {
    if analysis.affirmed_keywords().any(|k| action.keywords.contains(k)) {
        KEYWORD_MATCH
    } else if analysis.negated_keywords.iter().any(|k| action.keywords.contains(k)) {
        -KEYWORD_MATCH
    } else {
        0.0
    }
}

/// Valence layer: +2 when a polar input agrees with the action's emotion,
/// +1 for neutral input, 0 on disagreement.
pub fn valence_term(analysis: &TextAnalysis, action: &Action) -> f64 {
    match analysis.affect {
        Valence::Neutral => NEUTRAL_ALIGNMENT,
        polar if polar == action.emotion => POLAR_ALIGNMENT,
        _ => 0.0,
    }
}

/// Whether the embedding layer applies: both earlier layers are neutral.
pub fn embedding_applies(analysis: &TextAnalysis, action: &Action) -> bool {
    keyword_term(analysis, action) == 0.0 && analysis.affect == Valence::Neutral
}

/// `s_text = K + V + E`, with `E = 2·max(0, cos)` only when [`embedding_applies`].
pub fn score_text(analysis: &TextAnalysis, action: &Action, action_embedding: &[f64]) -> f64 {
    let k = keyword_term(analysis, action);
    let v = valence_term(analysis, action);
    let e = if embedding_applies(analysis, action) {
        EMBEDDING_SCALE * cosine(&analysis.embedding, action_embedding).max(0.0)
    } else {
        0.0
    };
    k + v + e
}

/// `s_ctx = B + R`: +5 for a reaction candidate of the partner's last action,
/// +1 for a responsive action when the partner moved last.
pub fn score_context(ctx: &RecommendationContext, action: &Action, library: &ActionLibrary) -> f64 {
    let bonus = ctx
        .partner_last_action
        .as_deref()
        .and_then(|p| library.get(p))
        .filter(|partner| partner.reaction_candidates.iter().any(|c| c == &action.id))
        .map_or(0.0, |_| REACTION_BONUS);
    let role = if ctx.conversation_state == ConversationState::PartnerActedLast && action.is_responsive() {
        RESPONSIVE_BONUS
    } else {
        0.0
    };
    bonus + role
}

/// Orders by total descending, then action id ascending.
pub fn rank_order(a: &ScoreBreakdown, b: &ScoreBreakdown) -> Ordering {
    b.total
        .total_cmp(&a.total)
        .then_with(|| a.action_id.cmp(&b.action_id))
}

#[derive(Debug, Clone)]
pub struct Recommender {
    pub weights: Weights,
    interpreter: TextInterpreter,
}

impl Recommender {
    pub fn new(weights: Weights, interpreter: TextInterpreter) -> Self {
        Self { weights, interpreter }
    }

    pub fn interpreter(&self) -> &TextInterpreter {
        &self.interpreter
    }

    fn action_embedding(&self, library: &ActionLibrary, action: &Action) -> Result<Vec<f64>, ProviderError> {
        match &action.embedding {
            Some(v) if library.embedding_provider() == Some(self.interpreter.provider_id()) => Ok(v.clone()),
            _ => self.interpreter.embed(&action.embedding_text()),
        }
    }

    /// Scores every action in the library, best first.
    pub fn rank_all(
        &self,
        ctx: &RecommendationContext,
        library: &ActionLibrary,
        store: &PreferenceStore,
    ) -> Result<Vec<ScoreBreakdown>, RecommendError> {
        self.weights.validate()?;
        if library.is_empty() {
            return Err(RecommendError::EmptyLibrary);
        }
        ctx.validate(library)?;
        let analysis = match &ctx.draft_text {
            Some(text) => Some(self.interpreter.analyze(text)?),
            None => None,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
        let mut scored = Vec::with_capacity(library.len());
        for action in library.actions() {
            let noise = rng.gen::<f64>() * self.weights.noise_amplitude;
            let s_text = match &analysis {
                Some(a) if embedding_applies(a, action) => {
                    score_text(a, action, &self.action_embedding(library, action)?)
                }
                Some(a) => score_text(a, action, &[]),
                None => 0.0,
            };
            let s_ctx = score_context(ctx, action, library);
            let preference = store.preference_value(&ctx.user_id, &action.id);
            let mut breakdown = ScoreBreakdown {
                action_id: action.id.clone(),
                s_text,
                s_ctx,
                preference,
                noise,
                total: 0.0,
            };
            breakdown.total = breakdown.recompose(&self.weights);
            scored.push(breakdown);
        }
        scored.sort_by(rank_order);
        Ok(scored)
    }

    /// The top four actions (or all of them, if the library is smaller).
    pub fn recommend(
        &self,
        ctx: &RecommendationContext,
        library: &ActionLibrary,
        store: &PreferenceStore,
    ) -> Result<Vec<ScoreBreakdown>, RecommendError> {
        let mut ranked = self.rank_all(ctx, library, store)?;
        ranked.truncate(TOP_K);
        Ok(ranked)
    }
}
