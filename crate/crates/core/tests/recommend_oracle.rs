mod support;

use dyad_core::interpreter::TextInterpreter;
use dyad_core::library::ActionLibrary;
use dyad_core::preference::PreferenceStore;
use dyad_core::recommend::{RecommendationContext, Recommender, ScoreBreakdown, Weights};
use proptest::prelude::*;
use support::fixtures::{fixture, Fixture};
use support::oracle::{oracle_rank, OracleRow};

fn engine(f: &Fixture, weights: Weights) -> Vec<ScoreBreakdown> {
    Recommender::new(weights, f.interpreter())
        .rank_all(&f.ctx, &f.library, &f.store)
        .unwrap()
}

fn ids_of(rows: &[ScoreBreakdown]) -> Vec<&str> {
    rows.iter().map(|r| r.action_id.as_str()).collect()
}

fn oracle_ids(rows: &[OracleRow]) -> Vec<&str> {
    rows.iter().map(|r| r.id.as_str()).collect()
}

fn rank_of(rows: &[ScoreBreakdown], id: &str) -> usize {
    rows.iter().position(|r| r.action_id == id).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn breakdowns_decompose_and_match_oracle(f in fixture()) {
        let w = f.weights;
        let rows = engine(&f, w);
        let oracle = oracle_rank(&f.library, &f.interpreter(), &f.ctx, &w, &f.store);
        prop_assert_eq!(rows.len(), f.library.len());
        for (row, o) in rows.iter().zip(&oracle) {
            let composed = w.w_text * row.s_text + w.w_ctx * row.s_ctx + w.w_pref * row.preference + row.noise;
            prop_assert!((row.total - composed).abs() <= 1e-9, "{row:?}");
            prop_assert!((0.0..=w.noise_amplitude).contains(&row.noise));
            prop_assert!((-1.0..=1.0).contains(&row.preference));
            prop_assert_eq!(&row.action_id, &o.id);
            prop_assert!((row.total - o.total).abs() <= 1e-9);
        }

        let quiet = w.without_noise();
        let rows = engine(&f, quiet);
        let oracle = oracle_rank(&f.library, &f.interpreter(), &f.ctx, &quiet, &f.store);
        prop_assert_eq!(ids_of(&rows), oracle_ids(&oracle));

        let top: std::collections::BTreeSet<_> = Recommender::new(quiet, f.interpreter())
            .recommend(&f.ctx, &f.library, &f.store)
            .unwrap()
            .into_iter()
            .map(|r| r.action_id)
            .collect();
        let expected: std::collections::BTreeSet<_> = oracle.iter().take(4).map(|r| r.id.clone()).collect();
        prop_assert_eq!(top.len(), f.library.len().min(4));
        prop_assert_eq!(top, expected);
    }

    #[test]
    fn selection_never_lowers_rank(f in fixture(), pick in any::<prop::sample::Index>(), extra in 1u64..6) {
        let w = Weights { w_pref: f.weights.w_pref.max(0.0), ..f.weights }.without_noise();
        let before = engine(&f, w);
        let target = before[pick.index(before.len())].action_id.clone();
        let mut bumped = f.clone();
        bumped.store.counts_mut(&f.ctx.user_id, &target).selected += extra;
        let after = engine(&bumped, w);
        prop_assert!(rank_of(&after, &target) <= rank_of(&before, &target));
    }

    #[test]
    fn scaling_weights_keeps_ranking(f in fixture(), exp in -3i32..4) {
        let c = 2f64.powi(exp);
        let w = f.weights.without_noise();
        let scaled = Weights { w_text: c * w.w_text, w_ctx: c * w.w_ctx, w_pref: c * w.w_pref, ..w };
        let (base, other) = (engine(&f, w), engine(&f, scaled));
        prop_assert_eq!(ids_of(&base), ids_of(&other));
    }

    #[test]
    fn reaction_bonus_dominates(f in fixture()) {
        let w = Weights::default().without_noise();
        let rows = engine(&f, w);
        let Some(partner) = f.ctx.partner_last_action.as_deref() else { return Ok(()) };
        let candidates = &f.library.get(partner).unwrap().reaction_candidates;
        for (i, cand) in rows.iter().enumerate() {
            if !candidates.contains(&cand.action_id) {
                continue;
            }
            // floor of the candidate's other terms: 5 - 3 - 0.5 ties 1 + 0.5
            if cand.s_text == -3.0 && cand.preference == -1.0 {
                continue;
            }
            for other in &rows[..i] {
                let dominated = other.s_text <= 1.0 && other.s_ctx == 0.0 && other.preference <= 1.0;
                prop_assert!(!dominated, "{other:?} outranks candidate {cand:?}");
            }
        }
    }
}

#[test]
fn reaction_bonus_floor_is_a_tie() {
    // A candidate with a negated keyword, mismatched valence and fully
    // demoted preference reaches 5 - 3 + 0.5·(-1) = 1.5, which only ties an
    // unrelated action at 1 + 0.5·1.
    let lib = ActionLibrary::canonical();
    let interp = TextInterpreter::offline(lib.embedding_dimension());
    let mut store = PreferenceStore::new();
    store.counts_mut("u", "catch-heart").hidden = 5;
    store.counts_mut("u", "yawn").selected = 10;
    let mut ctx = RecommendationContext::new("u").after_partner_action("throw-heart").with_text("I don't want to catch that, so sad");
    ctx.conversation_state = dyad_core::recommend::ConversationState::SelfActedLast;
    let rows = Recommender::new(Weights::default().without_noise(), interp).rank_all(&ctx, &lib, &store).unwrap();
    let catch = rows.iter().find(|r| r.action_id == "catch-heart").unwrap();
    assert_eq!(catch.total, 1.5, "{catch:?}");
}

#[test]
fn love_draft_puts_love_actions_above_low_scorers() {
    let lib = ActionLibrary::canonical();
    let interp = TextInterpreter::offline(lib.embedding_dimension());
    let ctx = RecommendationContext::new("u").with_text("I love you");
    let store = PreferenceStore::new();
    let w = Weights::default().without_noise();
    let rows = Recommender::new(w, interp.clone()).rank_all(&ctx, &lib, &store).unwrap();
    let oracle = oracle_rank(&lib, &interp, &ctx, &w, &store);
    assert_eq!(ids_of(&rows), oracle_ids(&oracle));
    let love: Vec<usize> = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| {
            let a = lib.get(&r.action_id).unwrap();
            a.keywords.contains("love") && a.emotion == dyad_core::Emotion::Positive
        })
        .map(|(i, _)| i)
        .collect();
    assert!(!love.is_empty());
    let low = rows.iter().position(|r| r.s_text <= 1.0).unwrap();
    assert!(love.iter().all(|i| *i < low));
    assert!(rows.iter().take(4).any(|r| r.action_id.contains("heart")));
}

#[test]
fn paper_pairings_hold_on_canonical_library() {
    let lib = ActionLibrary::canonical();
    let interp = TextInterpreter::offline(lib.embedding_dimension());
    let w = Weights::default().without_noise();
    let store = PreferenceStore::new();
    for (partner, expected) in [
        ("throw-heart", &["catch-heart", "carry-heart"][..]),
        ("hit-with-object", &["agony"][..]),
        ("cry", &["wipe-others-tears"][..]),
    ] {
        let ctx = RecommendationContext::new("u").after_partner_action(partner);
        let top = Recommender::new(w, interp.clone()).recommend(&ctx, &lib, &store).unwrap();
        assert!(expected.iter().any(|e| top.iter().any(|r| r.action_id == *e)), "{partner}: {top:?}");
        let oracle: Vec<_> = oracle_rank(&lib, &interp, &ctx, &w, &store).into_iter().take(4).map(|r| r.id).collect();
        let mut got: Vec<_> = top.into_iter().map(|r| r.action_id).collect();
        let mut want = oracle;
        got.sort();
        want.sort();
        assert_eq!(got, want, "{partner}");
    }
}
