//! Brute-force reference scorer written straight from the scoring rules,
//! sharing nothing with the engine beyond the data types and the text analysis.

#![allow(dead_code)]

use dyad_core::interpreter::{TextAnalysis, TextInterpreter};
use dyad_core::library::{Action, ActionLibrary, Emotion, InteractionRole};
use dyad_core::preference::PreferenceStore;
use dyad_core::recommend::{ConversationState, RecommendationContext, Weights};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub id: String,
    pub s_text: f64,
    pub s_ctx: f64,
    pub preference: f64,
    pub noise: f64,
    pub total: f64,
}

fn dot_cosine(u: &[f64], v: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut uu = 0.0;
    let mut vv = 0.0;
    for i in 0..u.len().min(v.len()) {
        dot += u[i] * v[i];
        uu += u[i] * u[i];
        vv += v[i] * v[i];
    }
    if uu == 0.0 || vv == 0.0 {
        0.0
    } else {
        dot / (uu.sqrt() * vv.sqrt())
    }
}

pub fn oracle_text(analysis: &TextAnalysis, action: &Action, embedding: impl FnOnce() -> Vec<f64>) -> f64 {
    let mut affirmed_hit = false;
    let mut negated_hit = false;
    for k in &action.keywords {
        if analysis.keywords.contains(k) {
            if analysis.negated_keywords.contains(k) {
                negated_hit = true;
            } else {
                affirmed_hit = true;
            }
        }
    }
    let k = if affirmed_hit {
        3.0
    } else if negated_hit {
        -3.0
    } else {
        0.0
    };
    let v = if analysis.affect == Emotion::Neutral {
        1.0
    } else if analysis.affect == action.emotion {
        2.0
    } else {
        0.0
    };
    let e = if k == 0.0 && analysis.affect == Emotion::Neutral {
        let c = dot_cosine(&analysis.embedding, &embedding());
        2.0 * if c > 0.0 { c.min(1.0) } else { 0.0 }
    } else {
        0.0
    };
    k + v + e
}

pub fn oracle_ctx(ctx: &RecommendationContext, action: &Action, library: &ActionLibrary) -> f64 {
    let mut s = 0.0;
    if let Some(partner) = ctx.partner_last_action.as_ref().and_then(|p| library.get(p)) {
        if partner.reaction_candidates.contains(&action.id) {
            s += 5.0;
        }
    }
    if ctx.conversation_state == ConversationState::PartnerActedLast
        && action.interaction_role == InteractionRole::Responsive
    {
        s += 1.0;
    }
    s
}

pub fn oracle_preference(store: &PreferenceStore, user: &str, action: &str) -> f64 {
    let c = store.counts(user, action);
    let raw = 0.1 * c.selected as f64 - 0.05 * c.ignored as f64 - 0.2 * c.hidden as f64;
    raw.max(-1.0).min(1.0)
}

/// Scores every action and sorts: total descending, id ascending.
pub fn oracle_rank(
    library: &ActionLibrary,
    interpreter: &TextInterpreter,
    ctx: &RecommendationContext,
    weights: &Weights,
    store: &PreferenceStore,
) -> Vec<OracleRow> {
    let analysis = ctx.draft_text.as_ref().map(|t| interpreter.analyze(t).unwrap());
    let mut ids: Vec<String> = library.ids().map(String::from).collect();
    ids.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let mut rows = Vec::new();
    for id in ids {
        let action = library.get(&id).unwrap();
        let noise = weights.noise_amplitude * rng.gen::<f64>();
        let s_text = match &analysis {
            None => 0.0,
            Some(a) => oracle_text(a, action, || match &action.embedding {
                Some(v) if library.embedding_provider() == Some(interpreter.provider_id()) => v.clone(),
                _ => interpreter.embed(&action.embedding_text()).unwrap(),
            }),
        };
        let s_ctx = oracle_ctx(ctx, action, library);
        let preference = oracle_preference(store, &ctx.user_id, &id);
        let total = weights.w_text * s_text + weights.w_ctx * s_ctx + weights.w_pref * preference + noise;
        rows.push(OracleRow { id, s_text, s_ctx, preference, noise, total });
    }
    rows.sort_by(|a, b| {
        if a.total > b.total {
            std::cmp::Ordering::Less
        } else if a.total < b.total {
            std::cmp::Ordering::Greater
        } else {
            a.id.cmp(&b.id)
        }
    });
    rows
}
