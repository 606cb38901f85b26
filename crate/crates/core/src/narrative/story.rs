use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::tags::TagSelection;
use super::NarrativeError;
use crate::clock::Millis;

pub const MAX_STORY_CHARS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonalStory {
    pub user_id: String,
    pub text: String,
    pub version: u64,
    pub created_at: Millis,
}

impl PersonalStory {
    /// Version 0 stands for "no story yet".
    pub fn empty(user_id: &str) -> Self {
        Self {
            user_id: user_id.to_string(),
            text: String::new(),
            version: 0,
            created_at: 0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.text.trim().is_empty()
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "entry", rename_all = "snake_case")]
enum BookEntry {
    Story(PersonalStory),
    Tags { user_id: String, selection: TagSelection },
}

/// Every story version of every user, plus each user's last tag selection.
/// Callers serialize access per user (the book is not internally locked).
#[derive(Debug, Default)]
pub struct StoryBook {
    stories: HashMap<String, Vec<PersonalStory>>,
    selections: BTreeMap<String, TagSelection>,
    file: Option<File>,
    path: Option<PathBuf>,
}

impl StoryBook {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self, NarrativeError> {
        let path = path.as_ref().to_path_buf();
        let mut book = Self::default();
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: BookEntry = serde_json::from_str(&line).map_err(|e| NarrativeError::Storage {
                    path: path.clone(),
                    message: format!("line {}: {e}", i + 1),
                })?;
                book.apply(entry);
            }
        }
        book.file = Some(OpenOptions::new().create(true).append(true).open(&path)?);
        book.path = Some(path);
        Ok(book)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    fn apply(&mut self, entry: BookEntry) {
        match entry {
            BookEntry::Story(s) => self.stories.entry(s.user_id.clone()).or_default().push(s),
            BookEntry::Tags { user_id, selection } => {
                self.selections.insert(user_id, selection);
            }
        }
    }

    fn write(&mut self, entry: BookEntry) -> Result<(), NarrativeError> {
        if let Some(file) = &mut self.file {
            let mut line = serde_json::to_string(&entry).map_err(std::io::Error::other)?;
            line.push('\n');
            file.write_all(line.as_bytes())?;
            file.sync_data()?;
        }
        self.apply(entry);
        Ok(())
    }

    /// The newest story, or the empty version-0 story.
    pub fn latest(&self, user_id: &str) -> PersonalStory {
        self.stories
            .get(user_id)
            .and_then(|v| v.last())
            .cloned()
            .unwrap_or_else(|| PersonalStory::empty(user_id))
    }

    pub fn history(&self, user_id: &str) -> &[PersonalStory] {
        self.stories.get(user_id).map(Vec::as_slice).unwrap_or_default()
    }

    /// Stores a new version. Empty text is allowed.
    pub fn update(&mut self, user_id: &str, text: &str, now: Millis) -> Result<PersonalStory, NarrativeError> {
        let chars = text.chars().count();
        if chars > MAX_STORY_CHARS {
            return Err(NarrativeError::StoryTooLong(chars));
        }
        let story = PersonalStory {
            user_id: user_id.to_string(),
            text: text.to_string(),
            version: self.latest(user_id).version + 1,
            created_at: now,
        };
        self.write(BookEntry::Story(story.clone()))?;
        Ok(story)
    }

    pub fn selection(&self, user_id: &str) -> Option<&TagSelection> {
        self.selections.get(user_id)
    }

    pub fn set_selection(&mut self, user_id: &str, selection: TagSelection) -> Result<(), NarrativeError> {
        self.write(BookEntry::Tags {
            user_id: user_id.to_string(),
            selection,
        })
    }
}
