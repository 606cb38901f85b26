use std::collections::{BTreeMap, BTreeSet};

use super::{Interpretation, LanguageProvider, ProviderError, ProviderKind, Valence};
use crate::lexicon;

pub const OFFLINE_PROVIDER_ID: &str = "offline-hash-v1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Token {
    Word(String),
    /// Clause punctuation; negation scope stops here.
    Boundary,
}

/// Lowercased words and clause boundaries. Curly apostrophes are folded to `'`.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    let flush = |word: &mut String, tokens: &mut Vec<Token>| {
        let trimmed = word.trim_matches('\'');
        if !trimmed.is_empty() {
            tokens.push(Token::Word(trimmed.to_string()));
        }
        word.clear();
    };
    for c in text.chars() {
        let c = if c == '\u{2019}' || c == '\u{2018}' { '\'' } else { c };
        if c.is_alphanumeric() || c == '\'' {
            word.extend(c.to_lowercase());
        } else {
            flush(&mut word, &mut tokens);
            if matches!(c, '.' | ',' | ';' | ':' | '!' | '?' | '\n') {
                tokens.push(Token::Boundary);
            }
        }
    }
    flush(&mut word, &mut tokens);
    tokens
}

/// Content words of `text` with stopwords and negation cues removed,
/// in first-occurrence order with duplicates kept.
pub fn content_words(text: &str) -> Vec<String> {
    tokenize(text)
        .into_iter()
        .filter_map(|t| match t {
            Token::Word(w) if !lexicon::is_stopword(&w) && !lexicon::is_negation_cue(&w) && w.chars().count() > 1 => Some(w),
            _ => None,
        })
        .collect()
}

fn sign_to_valence(sum: i32) -> Valence {
    match sum.signum() {
        1 => Valence::Positive,
        -1 => Valence::Negative,
        _ => Valence::Neutral,
    }
}

/// Deterministic, dependency-free provider.
///
/// * Keywords: content words (stopwords and negation cues dropped).
/// * Negation: a cue negates the next three words within its clause. A
///   keyword counts as negated only when every occurrence is in scope.
/// * Valence: signed lexicon sum with in-scope terms flipped; zero is neutral.
/// * Embedding: hashed character trigrams of each padded word, plus one
///   feature for the word itself and one for its concept (see
///   [`lexicon::CONCEPTS`]), L2-normalized.
#[derive(Debug, Clone, Default)]
pub struct OfflineProvider;

impl OfflineProvider {
    pub fn new() -> Self {
        Self
    }

    pub fn interpret_text(text: &str) -> Interpretation {
        let mut occurrences: BTreeMap<String, (usize, usize)> = BTreeMap::new();
        let mut surface = 0i32;
        let mut flipped = 0i32;
        let mut scope = 0usize;
        for token in tokenize(text) {
            let word = match token {
                Token::Boundary => {
                    scope = 0;
                    continue;
                }
                Token::Word(w) => w,
            };
            if lexicon::is_negation_cue(&word) {
                scope = lexicon::NEGATION_WINDOW;
                continue;
            }
            let negated = scope > 0;
            scope = scope.saturating_sub(1);

            let p = lexicon::polarity(&word);
            surface += p;
            flipped += if negated { -p } else { p };

            if lexicon::is_stopword(&word) || word.chars().count() < 2 {
                continue;
            }
            let entry = occurrences.entry(word).or_default();
            entry.0 += 1;
            if negated {
                entry.1 += 1;
            }
        }
        let keywords: BTreeSet<String> = occurrences.keys().cloned().collect();
        let negated_keywords = occurrences
            .iter()
            .filter(|(_, (total, negated))| total == negated)
            .map(|(w, _)| w.clone())
            .collect();
        Interpretation {
            keywords,
            negated_keywords,
            valence: sign_to_valence(flipped),
            affect: sign_to_valence(surface),
        }
    }

    pub fn embed_text(text: &str, dimension: usize) -> Vec<f64> {
        let mut v = vec![0.0; dimension];
        if dimension == 0 {
            return v;
        }
        let mut add = |feature: &str, weight: f64| {
            let h = fnv1a(feature.as_bytes());
            v[(h % dimension as u64) as usize] += weight;
        };
        for token in tokenize(text) {
            let Token::Word(word) = token else { continue };
            let padded: Vec<char> = format!("#{word}#").chars().collect();
            for tri in padded.windows(3) {
                add(&tri.iter().collect::<String>(), TRIGRAM_WEIGHT);
            }
            add(&format!("w:{word}"), WORD_WEIGHT);
            if let Some(concept) = lexicon::concept_of(&word) {
                add(&format!("c:{concept}"), CONCEPT_WEIGHT);
            }
        }
        super::normalize(v)
    }
}

const TRIGRAM_WEIGHT: f64 = 1.0;
const WORD_WEIGHT: f64 = 1.0;
const CONCEPT_WEIGHT: f64 = 2.0;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

impl LanguageProvider for OfflineProvider {
    fn id(&self) -> &str {
        OFFLINE_PROVIDER_ID
    }

    fn kind(&self) -> ProviderKind {
        ProviderKind::Offline
    }

    fn interpret(&self, text: &str) -> Result<Interpretation, ProviderError> {
        Ok(Self::interpret_text(text))
    }

    fn embed(&self, text: &str, dimension: usize) -> Result<Vec<f64>, ProviderError> {
        Ok(Self::embed_text(text, dimension))
    }

    fn complete(&self, _prompt: &str) -> Result<String, ProviderError> {
        Err(ProviderError::CompletionUnsupported)
    }
}
