//! Per-user selection history and the derived preference term.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SELECT_STEP: f64 = 0.1;
pub const IGNORE_STEP: f64 = 0.05;
pub const HIDE_STEP: f64 = 0.2;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceCounts {
    pub selected: u64,
    pub ignored: u64,
    pub hidden: u64,
}

impl PreferenceCounts {
    /// `clamp(0.1·selected − 0.05·ignored − 0.2·hidden, −1, 1)`
    pub fn value(&self) -> f64 {
        let raw = SELECT_STEP * self.selected as f64
            - IGNORE_STEP * self.ignored as f64
            - HIDE_STEP * self.hidden as f64;
        raw.clamp(-1.0, 1.0)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PreferenceError {
    #[error("chosen action {0:?} was not among the shown actions")]
    ChosenNotShown(String),
    #[error("hidden action {0:?} was not among the shown actions")]
    HiddenNotShown(String),
    #[error("action {0:?} cannot be both chosen and hidden")]
    ChosenAndHidden(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PreferenceStore {
    #[serde(with = "entries")]
    counts: HashMap<(String, String), PreferenceCounts>,
}

impl PreferenceStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn counts(&self, user_id: &str, action_id: &str) -> PreferenceCounts {
        self.counts
            .get(&(user_id.to_string(), action_id.to_string()))
            .copied()
            .unwrap_or_default()
    }

    pub fn preference_value(&self, user_id: &str, action_id: &str) -> f64 {
        self.counts(user_id, action_id).value()
    }

    pub fn counts_mut(&mut self, user_id: &str, action_id: &str) -> &mut PreferenceCounts {
        self.counts
            .entry((user_id.to_string(), action_id.to_string()))
            .or_default()
    }

    /// Applies one recommendation outcome. Every shown action other than the
    /// chosen one counts as ignored; `hidden` additionally counts as hidden.
    pub fn record_outcome(
        &mut self,
        user_id: &str,
        shown: &[String],
        chosen: Option<&str>,
        hidden: Option<&str>,
    ) -> Result<(), PreferenceError> {
        if let Some(c) = chosen {
            if !shown.iter().any(|s| s == c) {
                return Err(PreferenceError::ChosenNotShown(c.into()));
            }
        }
        if let Some(h) = hidden {
            if !shown.iter().any(|s| s == h) {
                return Err(PreferenceError::HiddenNotShown(h.into()));
            }
            if chosen == Some(h) {
                return Err(PreferenceError::ChosenAndHidden(h.into()));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for action in shown {
            if !seen.insert(action.as_str()) {
                continue;
            }
            let counts = self.counts_mut(user_id, action);
            if Some(action.as_str()) == chosen {
                counts.selected += 1;
            } else {
                counts.ignored += 1;
            }
            if Some(action.as_str()) == hidden {
                counts.hidden += 1;
            }
        }
        Ok(())
    }
}

mod entries {
    use super::PreferenceCounts;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::collections::HashMap;

    #[derive(Serialize, Deserialize)]
    struct Entry {
        user_id: String,
        action_id: String,
        #[serde(flatten)]
        counts: PreferenceCounts,
    }

    pub fn serialize<S: Serializer>(map: &HashMap<(String, String), PreferenceCounts>, s: S) -> Result<S::Ok, S::Error> {
        let mut entries: Vec<Entry> = map
            .iter()
            .map(|((u, a), c)| Entry {
                user_id: u.clone(),
                action_id: a.clone(),
                counts: *c,
            })
            .collect();
        entries.sort_by(|x, y| (&x.user_id, &x.action_id).cmp(&(&y.user_id, &y.action_id)));
        entries.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<HashMap<(String, String), PreferenceCounts>, D::Error> {
        let entries = Vec::<Entry>::deserialize(d)?;
        Ok(entries
            .into_iter()
            .map(|e| ((e.user_id, e.action_id), e.counts))
            .collect())
    }
}
