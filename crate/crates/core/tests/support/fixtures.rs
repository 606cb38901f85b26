//! Random libraries, contexts and preference histories for property tests.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use dyad_core::interpreter::{normalize, TextInterpreter};
use dyad_core::library::{Action, ActionLibrary, Emotion, InteractionRole};
use dyad_core::preference::PreferenceStore;
use dyad_core::recommend::{ConversationState, RecommendationContext, Weights};
use proptest::prelude::*;

pub const VOCAB: &[&str] = &[
    "love", "heart", "cry", "tears", "hug", "apple", "pizza", "dance", "sleep", "hello", "sad", "happy",
    "gift", "photo", "angry", "tea", "fruit", "kiss",
];
const FILLER: &[&str] = &["not", "don't", "never", ",", ".", "I", "you", "so", "my"];
pub const DIM: usize = 16;
pub const USER: &str = "user";

#[derive(Debug, Clone)]
pub struct Fixture {
    pub library: ActionLibrary,
    pub ctx: RecommendationContext,
    pub store: PreferenceStore,
    pub weights: Weights,
}

impl Fixture {
    pub fn interpreter(&self) -> TextInterpreter {
        TextInterpreter::offline(DIM)
    }
}

#[derive(Debug, Clone)]
struct RawAction {
    keywords: BTreeSet<usize>,
    emotion: u8,
    responsive: bool,
    candidates: BTreeSet<usize>,
    embedding: Vec<f64>,
    counts: (u64, u64, u64),
}

fn raw_action() -> impl Strategy<Value = RawAction> {
    (
        prop::collection::btree_set(0..VOCAB.len(), 1..4),
        0u8..3,
        any::<bool>(),
        prop::collection::btree_set(0usize..50, 0..5),
        prop::collection::vec(-1.0f64..1.0, DIM),
        (0u64..15, 0u64..25, 0u64..6),
    )
        .prop_map(|(keywords, emotion, responsive, candidates, embedding, counts)| RawAction {
            keywords,
            emotion,
            responsive,
            candidates,
            embedding,
            counts,
        })
}

pub fn action_id(i: usize) -> String {
    format!("act-{i:02}")
}

fn build_library(raws: &[RawAction], stored_embeddings: bool) -> ActionLibrary {
    let n = raws.len();
    let actions: Vec<Action> = raws
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let keywords: BTreeSet<String> = r.keywords.iter().map(|k| VOCAB[*k].to_string()).collect();
            Action {
                id: action_id(i),
                name: format!("Act {i}"),
                description: keywords.iter().cloned().collect::<Vec<_>>().join(" "),
                keywords,
                emotion: [Emotion::Positive, Emotion::Negative, Emotion::Neutral][r.emotion as usize],
                interaction_role: if r.responsive { InteractionRole::Responsive } else { InteractionRole::SelfOriented },
                embedding: None,
                reaction_candidates: r
                    .candidates
                    .iter()
                    .map(|c| c % n)
                    .filter(|c| *c != i)
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .map(action_id)
                    .collect(),
            }
        })
        .collect();
    let library = ActionLibrary::new(actions, DIM, 1).unwrap();
    if !stored_embeddings {
        return library;
    }
    let map: BTreeMap<String, Vec<f64>> = raws
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut v = normalize(r.embedding.clone());
            if v.iter().all(|x| *x == 0.0) {
                v[0] = 1.0;
            }
            (action_id(i), v)
        })
        .collect();
    let provider = TextInterpreter::offline(DIM).provider_id().to_string();
    library.with_embeddings(&provider, &map).unwrap()
}

fn draft() -> impl Strategy<Value = Option<String>> {
    let word = prop_oneof![
        3 => prop::sample::select(VOCAB.to_vec()),
        2 => prop::sample::select(FILLER.to_vec()),
    ];
    prop::option::weighted(0.8, prop::collection::vec(word, 0..7).prop_map(|w| w.join(" ")))
}

pub fn weights() -> impl Strategy<Value = Weights> {
    prop_oneof![
        Just(Weights::default()),
        (0.0f64..3.0, 0.0f64..3.0, 0.0f64..3.0, 0.0f64..0.2).prop_map(|(w_text, w_ctx, w_pref, noise_amplitude)| {
            Weights { w_text, w_ctx, w_pref, noise_amplitude }
        }),
    ]
}

/// A random library of 1..=50 actions with a consistent context.
pub fn fixture() -> impl Strategy<Value = Fixture> {
    (
        prop::collection::vec(raw_action(), 1..=50),
        any::<bool>(),
        draft(),
        prop::option::of(0usize..50),
        0u8..4,
        any::<u64>(),
        weights(),
    )
        .prop_map(|(raws, stored, draft_text, partner, state, seed, weights)| {
            let library = build_library(&raws, stored);
            let partner_last_action = partner.map(|p| action_id(p % raws.len()));
            let conversation_state = match (state, &partner_last_action) {
                (_, None) if state == 1 => ConversationState::Opening,
                (0, _) => ConversationState::Opening,
                (1, Some(_)) => ConversationState::PartnerActedLast,
                (2, _) => ConversationState::SelfActedLast,
                _ => ConversationState::Idle,
            };
            let mut store = PreferenceStore::new();
            for (i, r) in raws.iter().enumerate() {
                let c = store.counts_mut(USER, &action_id(i));
                (c.selected, c.ignored, c.hidden) = r.counts;
            }
            Fixture {
                library,
                ctx: RecommendationContext {
                    user_id: USER.into(),
                    draft_text,
                    partner_last_action,
                    conversation_state,
                    seed,
                },
                store,
                weights,
            }
        })
}
