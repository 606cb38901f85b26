//! Word lists shared by the offline interpreter and the tag proposer.

pub const NEGATION_CUES: &[&str] = &[
    "not", "don't", "never", "no", "without", "dont", "cant", "wont", "nothing", "nobody",
];

/// Words a negation cue reaches past itself.
pub const NEGATION_WINDOW: usize = 3;

pub fn is_negation_cue(word: &str) -> bool {
    NEGATION_CUES.contains(&word) || word.ends_with("n't")
}

pub const STOPWORDS: &[&str] = &[
    "a", "about", "after", "again", "all", "am", "an", "and", "any", "are", "as", "at", "be",
    "because", "been", "before", "being", "both", "but", "by", "can", "could", "did", "do",
    "does", "doing", "for", "from", "had", "has", "have", "having", "he", "her", "here", "hers",
    "him", "his", "how", "i", "i'm", "i'll", "i've", "i'd", "if", "in", "into", "is", "it",
    "it's", "its", "just", "let", "me", "more", "most", "my", "myself", "of", "off", "on",
    "once", "only", "or", "other", "our", "ours", "out", "over", "own", "really", "same", "she",
    "should", "so", "some", "such", "than", "that", "that's", "the", "their", "them", "then",
    "there", "these", "they", "this", "those", "through", "to", "too", "under", "until", "up",
    "very", "was", "we", "we're", "were", "what", "when", "where", "which", "while", "who",
    "whom", "why", "will", "with", "would", "you", "you're", "your", "yours", "yourself", "u",
    "ur", "im", "also", "much", "many", "lot", "lots", "like", "get", "gets", "go", "goes",
    "going", "one", "every", "always", "often", "usually", "sometimes", "am", "pm", "today",
    "day", "days", "time", "things", "thing", "something", "anything", "everything", "people",
    "person", "way", "make", "makes", "made", "want", "wants", "need", "needs", "still",
];

pub fn is_stopword(word: &str) -> bool {
    STOPWORDS.contains(&word)
}

pub const POSITIVE_WORDS: &[&str] = &[
    "love", "loves", "loved", "adore", "happy", "glad", "great", "good", "awesome", "amazing",
    "wonderful", "beautiful", "nice", "cool", "best", "fun", "funny", "yay", "congrats",
    "congratulations", "proud", "sweet", "cute", "thanks", "thank", "excited", "cheers",
    "delicious", "yum", "celebrate", "win", "won", "haha", "lol", "kiss", "hug", "enjoy",
    "fantastic", "lovely", "brilliant", "perfect", "grateful", "relaxed", "calm", "cheerful",
];

pub const NEGATIVE_WORDS: &[&str] = &[
    "sad", "cry", "crying", "hate", "angry", "mad", "upset", "hurt", "pain", "ouch", "gross",
    "sick", "lonely", "scared", "afraid", "sorry", "bad", "terrible", "awful", "ugh",
    "annoyed", "furious", "jealous", "anxious", "nervous", "disgusting", "yuck", "tired",
    "miserable", "depressed", "worried", "stressed", "boring", "bored", "horrible", "missing",
];

/// Lexicon polarity of a single word: +1, -1 or 0.
pub fn polarity(word: &str) -> i32 {
    if POSITIVE_WORDS.contains(&word) {
        1
    } else if NEGATIVE_WORDS.contains(&word) {
        -1
    } else {
        0
    }
}

/// Story words that suggest a routine rather than a preference.
pub const HABIT_WORDS: &[&str] = &[
    "marathon", "run", "running", "jog", "jogging", "gym", "yoga", "coffee", "tea", "cooking",
    "cook", "reading", "read", "gaming", "games", "walk", "walking", "hiking", "swim",
    "swimming", "cycling", "bike", "morning", "night", "late", "early", "sleep", "nap",
    "study", "studying", "work", "working", "practice", "training", "meditate", "journaling",
    "baking", "bake", "painting", "drawing", "guitar", "piano", "singing", "dance", "dancing",
];

pub const SOCIAL_WORDS: &[&str] = &[
    "introvert", "introverted", "extrovert", "extroverted", "shy", "chatty", "talkative",
    "quiet", "loud", "teasing", "tease", "playful", "sarcastic", "caring", "clingy",
    "independent", "friendly", "outgoing", "reserved", "honest", "direct", "gentle", "joker",
    "listener", "supportive", "affectionate", "polite", "awkward", "social", "loyal",
];

pub const EMOTION_WORDS: &[&str] = &[
    "happy", "sad", "anxious", "calm", "cheerful", "moody", "sensitive", "excited", "nervous",
    "lonely", "grateful", "relaxed", "stressed", "hopeful", "nostalgic", "emotional", "angry",
    "content", "romantic", "dramatic", "worried", "joyful", "melancholy", "sentimental",
];

/// Generic tags used when a story yields fewer than five per category.
pub const GENERIC_LIKES: &[&str] = &["music", "food", "movies", "travel", "nature"];
pub const GENERIC_HABITS: &[&str] = &["coffee", "walking", "reading", "cooking", "late-nights"];
pub const GENERIC_SOCIAL: &[&str] = &["friendly", "playful", "caring", "supportive", "honest"];
pub const GENERIC_EMOTION: &[&str] = &["happy", "calm", "excited", "grateful", "nostalgic"];

/// Coarse concept per word. The offline embedding adds the concept as a
/// feature so related words ("apple", "fruit") share a dimension.
pub const CONCEPTS: &[(&str, &[&str])] = &[
    ("fruit", &["fruit", "fruits", "apple", "apples", "banana", "orange", "grape", "grapes", "strawberry", "peach", "cherry", "mango", "pear", "lemon"]),
    ("food", &["food", "snack", "snacks", "cookie", "cookies", "cake", "pizza", "bread", "candy", "chocolate", "treat", "meal", "dinner", "lunch", "breakfast", "eat", "hungry", "tasty", "delicious", "yum"]),
    ("drink", &["drink", "drinks", "water", "tea", "coffee", "juice", "beer", "wine", "soda", "thirsty", "glass", "toast", "cheers"]),
    ("affection", &["love", "heart", "hearts", "adore", "affection", "crush", "sweetheart", "darling", "cherish"]),
    ("kiss", &["kiss", "kisses", "muah", "smooch", "xoxo"]),
    ("embrace", &["hug", "hugs", "embrace", "cuddle", "hold", "squeeze"]),
    ("sadness", &["sad", "cry", "crying", "tears", "tear", "sob", "weep", "upset", "lonely", "down"]),
    ("pain", &["hurt", "ouch", "pain", "agony", "injured", "sore"]),
    ("fear", &["scared", "afraid", "nervous", "fear", "anxious", "worried", "tremble"]),
    ("anger", &["angry", "mad", "furious", "annoyed", "hate", "stomp"]),
    ("disgust", &["gross", "disgusting", "yuck", "eww", "sick", "vomit"]),
    ("joy", &["happy", "yay", "party", "celebrate", "congrats", "win", "won", "dance", "success"]),
    ("humor", &["haha", "lol", "funny", "joke", "laugh", "hilarious"]),
    ("sleep", &["sleep", "sleepy", "bed", "night", "tired", "yawn", "dream", "goodnight", "nap"]),
    ("greeting", &["hello", "hi", "hey", "greet", "morning", "wave"]),
    ("gift", &["gift", "present", "give", "offer", "share"]),
    ("photo", &["photo", "picture", "camera", "selfie", "pose"]),
    ("heat", &["hot", "heat", "sweat", "flustered", "fan", "summer"]),
    ("vehicle", &["bicycle", "bike", "car", "bus", "train", "cycling"]),
    ("thinking", &["think", "hmm", "wonder", "idea", "ponder", "maybe"]),
    ("apology", &["sorry", "apologize", "apology", "forgive"]),
];

pub fn concept_of(word: &str) -> Option<&'static str> {
    CONCEPTS
        .iter()
        .find(|(_, words)| words.contains(&word))
        .map(|(concept, _)| *concept)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cues() {
        assert!(is_negation_cue("don't"));
        assert!(is_negation_cue("isn't"));
        assert!(is_negation_cue("never"));
        assert!(!is_negation_cue("know"));
    }

    #[test]
    fn generic_tables_have_five_entries() {
        for table in [GENERIC_LIKES, GENERIC_HABITS, GENERIC_SOCIAL, GENERIC_EMOTION] {
            assert_eq!(table.len(), 5);
        }
    }

    #[test]
    fn concept_words_are_unique() {
        let mut seen = std::collections::HashSet::new();
        for (_, words) in CONCEPTS {
            for w in *words {
                assert!(seen.insert(*w), "{w} listed twice");
            }
        }
    }

    #[test]
    fn lexicons_do_not_overlap() {
        for w in POSITIVE_WORDS {
            assert!(!NEGATIVE_WORDS.contains(w), "{w}");
        }
    }
}
