use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::NarrativeError;
use crate::interpreter::content_words;
use crate::lexicon;

pub const TAGS_PER_CATEGORY: usize = 5;
pub const MAX_TAG_CHARS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TagCategory {
    LikesDislikes,
    Habits,
    SocialStyle,
    Emotion,
}

impl TagCategory {
    pub const ALL: [TagCategory; 4] = [
        TagCategory::LikesDislikes,
        TagCategory::Habits,
        TagCategory::SocialStyle,
        TagCategory::Emotion,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TagCategory::LikesDislikes => "likes_dislikes",
            TagCategory::Habits => "habits",
            TagCategory::SocialStyle => "social_style",
            TagCategory::Emotion => "emotion",
        }
    }

    pub fn definition(self) -> &'static str {
        match self {
            TagCategory::LikesDislikes => "things, people, places or activities the writer likes or dislikes",
            TagCategory::Habits => "routines and recurring activities",
            TagCategory::SocialStyle => "how the writer tends to interact with others",
            TagCategory::Emotion => "the writer's typical moods and feelings",
        }
    }

    fn generic(self) -> &'static [&'static str] {
        match self {
            TagCategory::LikesDislikes => lexicon::GENERIC_LIKES,
            TagCategory::Habits => lexicon::GENERIC_HABITS,
            TagCategory::SocialStyle => lexicon::GENERIC_SOCIAL,
            TagCategory::Emotion => lexicon::GENERIC_EMOTION,
        }
    }

    /// Offline classification of a story word.
    pub fn classify(word: &str) -> Option<Self> {
        if lexicon::EMOTION_WORDS.contains(&word) {
            Some(TagCategory::Emotion)
        } else if lexicon::SOCIAL_WORDS.contains(&word) {
            Some(TagCategory::SocialStyle)
        } else if lexicon::HABIT_WORDS.contains(&word) || (word.len() > 4 && word.ends_with("ing")) {
            Some(TagCategory::Habits)
        } else if lexicon::polarity(word) != 0 || word.chars().all(|c| c.is_ascii_digit()) {
            // sentiment words and bare numbers say little about the writer
            None
        } else {
            Some(TagCategory::LikesDislikes)
        }
    }
}

/// A user's chosen tags and their own additions.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagSelection {
    pub selected: Vec<String>,
    #[serde(default)]
    pub custom: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagSet {
    pub likes_dislikes: Vec<String>,
    pub habits: Vec<String>,
    pub social_style: Vec<String>,
    pub emotion: Vec<String>,
    #[serde(default)]
    pub selected: Vec<String>,
    #[serde(default)]
    pub custom: Vec<String>,
}

/// Lowercases and trims a tag, rejecting empty or over-long ones.
pub fn normalize_tag(tag: &str) -> Result<String, NarrativeError> {
    let t = tag.trim().to_lowercase();
    if t.is_empty() || t.chars().count() > MAX_TAG_CHARS {
        return Err(NarrativeError::InvalidTag(tag.to_string()));
    }
    Ok(t)
}

impl TagSet {
    pub fn category(&self, category: TagCategory) -> &[String] {
        match category {
            TagCategory::LikesDislikes => &self.likes_dislikes,
            TagCategory::Habits => &self.habits,
            TagCategory::SocialStyle => &self.social_style,
            TagCategory::Emotion => &self.emotion,
        }
    }

    fn category_mut(&mut self, category: TagCategory) -> &mut Vec<String> {
        match category {
            TagCategory::LikesDislikes => &mut self.likes_dislikes,
            TagCategory::Habits => &mut self.habits,
            TagCategory::SocialStyle => &mut self.social_style,
            TagCategory::Emotion => &mut self.emotion,
        }
    }

    pub fn proposed(&self) -> impl Iterator<Item = &String> {
        TagCategory::ALL.into_iter().flat_map(move |c| self.category(c).iter())
    }

    pub fn is_well_formed(&self) -> bool {
        TagCategory::ALL.iter().all(|c| self.category(*c).len() == TAGS_PER_CATEGORY)
    }

    fn knows(&self, tag: &str) -> bool {
        self.proposed().any(|t| t == tag) || self.custom.iter().any(|t| t == tag)
    }

    pub fn add_custom(&mut self, tag: &str) -> Result<String, NarrativeError> {
        let tag = normalize_tag(tag)?;
        if !self.custom.contains(&tag) {
            self.custom.push(tag.clone());
        }
        Ok(tag)
    }

    /// Replaces the selection; every tag must be proposed or custom.
    pub fn select<S: AsRef<str>>(&mut self, tags: &[S]) -> Result<(), NarrativeError> {
        let mut selected = Vec::new();
        for tag in tags {
            let t = normalize_tag(tag.as_ref())?;
            if !self.knows(&t) {
                return Err(NarrativeError::UnknownTag(t));
            }
            if !selected.contains(&t) {
                selected.push(t);
            }
        }
        self.selected = selected;
        Ok(())
    }

    /// Adds the custom tags of `selection`, then selects its tags.
    pub fn apply_selection(&mut self, selection: &TagSelection) -> Result<(), NarrativeError> {
        let mut next = self.clone();
        for tag in &selection.custom {
            next.add_custom(tag)?;
        }
        next.select(&selection.selected)?;
        *self = next;
        Ok(())
    }

    pub fn selection(&self) -> TagSelection {
        TagSelection {
            selected: self.selected.clone(),
            custom: self.custom.clone(),
        }
    }

    /// Builds a set from up to five candidates per category, padding from the
    /// generic tables.
    pub fn from_candidates(mut candidates: HashMap<TagCategory, Vec<String>>) -> Self {
        let mut set = TagSet {
            likes_dislikes: Vec::new(),
            habits: Vec::new(),
            social_style: Vec::new(),
            emotion: Vec::new(),
            selected: Vec::new(),
            custom: Vec::new(),
        };
        for category in TagCategory::ALL {
            let list = set.category_mut(category);
            let padding = category.generic().iter().map(|g| g.to_string());
            for tag in candidates.remove(&category).unwrap_or_default().into_iter().chain(padding) {
                if list.len() == TAGS_PER_CATEGORY {
                    break;
                }
                if let Ok(tag) = normalize_tag(&tag) {
                    if !list.contains(&tag) {
                        list.push(tag);
                    }
                }
            }
        }
        set
    }
}

/// Story words ranked by frequency, ties broken by first appearance.
pub fn ranked_story_words(story: &str) -> Vec<String> {
    let words = content_words(story);
    let mut counts: HashMap<&str, (usize, usize)> = HashMap::new();
    for (i, w) in words.iter().enumerate() {
        counts.entry(w).or_insert((0, i)).0 += 1;
    }
    let mut ranked: Vec<(&str, usize, usize)> = counts.into_iter().map(|(w, (n, first))| (w, n, first)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    ranked.into_iter().map(|(w, _, _)| w.to_string()).collect()
}

/// Keyword-frequency extraction padded with generic tags.
pub fn propose_tags_offline(story: &str) -> TagSet {
    let mut candidates: HashMap<TagCategory, Vec<String>> = HashMap::new();
    for word in ranked_story_words(story) {
        if let Some(category) = TagCategory::classify(&word) {
            let list = candidates.entry(category).or_default();
            if list.len() < TAGS_PER_CATEGORY {
                list.push(word);
            }
        }
    }
    TagSet::from_candidates(candidates)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cat_lands_in_likes() {
        let set = propose_tags_offline("I love my cat. Every morning I go running with my dog.");
        assert!(set.likes_dislikes.contains(&"cat".to_string()));
        assert!(set.habits.contains(&"running".to_string()));
        assert!(set.is_well_formed());
    }

    #[test]
    fn empty_story_is_all_generic() {
        let set = propose_tags_offline("");
        assert_eq!(set.likes_dislikes, lexicon::GENERIC_LIKES);
        assert_eq!(set.habits, lexicon::GENERIC_HABITS);
        assert_eq!(set.social_style, lexicon::GENERIC_SOCIAL);
        assert_eq!(set.emotion, lexicon::GENERIC_EMOTION);
    }

    #[test]
    fn frequency_order() {
        let set = propose_tags_offline("tea, cat, cat, cat, pizza, pizza");
        assert_eq!(&set.likes_dislikes[..2], &["cat".to_string(), "pizza".to_string()]);
    }

    #[test]
    fn classification() {
        assert_eq!(TagCategory::classify("marathon"), Some(TagCategory::Habits));
        assert_eq!(TagCategory::classify("introvert"), Some(TagCategory::SocialStyle));
        assert_eq!(TagCategory::classify("nostalgic"), Some(TagCategory::Emotion));
        assert_eq!(TagCategory::classify("sushi"), Some(TagCategory::LikesDislikes));
        assert_eq!(TagCategory::classify("love"), None);
        assert_eq!(TagCategory::classify("26"), None);
    }

    #[test]
    fn selection_must_be_known() {
        let mut set = propose_tags_offline("my cat");
        set.select(&["cat", "music"]).unwrap();
        assert_eq!(set.selected, vec!["cat", "music"]);
        assert!(matches!(set.select(&["dragons"]), Err(NarrativeError::UnknownTag(_))));
        assert_eq!(set.selected, vec!["cat", "music"], "a failed selection keeps the old one");
        set.add_custom("Dragons ").unwrap();
        set.select(&["dragons"]).unwrap();
        assert_eq!(set.selected, vec!["dragons"]);
        assert!(set.add_custom("   ").is_err());
    }

    #[test]
    fn apply_selection_is_atomic() {
        let mut set = propose_tags_offline("");
        let before = set.clone();
        let bad = TagSelection { selected: vec!["zzz".into()], custom: vec!["yyy".into()] };
        assert!(set.apply_selection(&bad).is_err());
        assert_eq!(set, before);
    }
}
