use std::collections::HashMap;
use std::path::Path;

use super::{normalize_words, DataError, RawSample};

pub type TokenId = u32;

pub const PAD: TokenId = 0;
pub const UNK: TokenId = 1;
pub const CLS: TokenId = 2;
pub const SEP: TokenId = 3;
pub const MASK: TokenId = 4;
/// Separator between absent keyphrases in the target sequence.
pub const DELIM: TokenId = 5;

pub const SPECIALS: [&str; 6] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", ";"];

const CONTINUATION: &str = "##";
const MAX_WORD_CHARS: usize = 100;

/// Token ↔ id bijection with the six specials pinned at ids 0–5.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocabulary {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, DataError> {
        for (i, s) in SPECIALS.iter().enumerate() {
            if tokens.get(i).map(String::as_str) != Some(*s) {
                return Err(DataError::BadVocab(format!("id {i} must be {s}")));
            }
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.contains(char::is_whitespace) {
                return Err(DataError::BadVocab(format!("invalid token {t:?} at line {}", i + 1)));
            }
            if index.insert(t.clone(), i as TokenId).is_some() {
                return Err(DataError::BadVocab(format!("duplicate token {t:?}")));
            }
        }
        Ok(Self { tokens, index })
    }

    /// Specials, then whole words and `##` suffix fragments ranked by
    /// frequency (ties broken lexicographically), truncated to `max_size`.
    /// Words are counted over documents and keyphrases.
    pub fn build<'a>(corpus: impl IntoIterator<Item = &'a RawSample>, max_size: usize) -> Result<Self, DataError> {
        if max_size < SPECIALS.len() {
            return Err(DataError::VocabTooSmall(max_size));
        }
        let mut counts: HashMap<String, u64> = HashMap::new();
        let mut seen = false;
        for s in corpus {
            seen = true;
            let words = normalize_words(&s.document)
                .into_iter()
                .chain(s.keyphrases.iter().flat_map(|k| normalize_words(k)));
            for w in words {
                for (k, _) in w.char_indices().skip(1) {
                    *counts.entry(format!("{CONTINUATION}{}", &w[k..])).or_default() += 1;
                }
                *counts.entry(w).or_default() += 1;
            }
        }
        if !seen {
            return Err(DataError::EmptyCorpus);
        }
        let mut ranked: Vec<(String, u64)> = counts
            .into_iter()
            .filter(|(t, _)| !SPECIALS.contains(&t.as_str()))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let tokens = SPECIALS
            .iter()
            .map(|s| s.to_string())
            .chain(ranked.into_iter().map(|(t, _)| t))
            .take(max_size)
            .collect();
        Self::from_tokens(tokens)
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_tokens(text.lines().map(str::to_string).collect())
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        let mut text = self.tokens.join("\n");
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> &str {
        self.tokens.get(id as usize).map_or("[UNK]", String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Whether the token is a `##` word continuation.
    pub fn is_continuation(&self, id: TokenId) -> bool {
        self.token(id).starts_with(CONTINUATION)
    }

    pub fn is_special(id: TokenId) -> bool {
        (id as usize) < SPECIALS.len()
    }

    /// Greedy longest-match-first segmentation of one lowercase word.
    /// Pieces after the first carry `##`. A word with any unmatchable
    /// remainder becomes a single `[UNK]`.
    pub fn tokenize_word(&self, word: &str) -> Vec<TokenId> {
        if word.is_empty() {
            return Vec::new();
        }
        if word.chars().count() > MAX_WORD_CHARS {
            return vec![UNK];
        }
        let mut pieces = Vec::new();
        let mut start = 0;
        let mut key = String::new();
        while start < word.len() {
            let mut end = word.len();
            let mut found = None;
            while end > start {
                key.clear();
                if start > 0 {
                    key.push_str(CONTINUATION);
                }
                key.push_str(&word[start..end]);
                if let Some(id) = self.id(&key) {
                    found = Some(id);
                    break;
                }
                end = word[..end].char_indices().next_back().map_or(start, |(i, _)| i);
            }
            match found {
                Some(id) => pieces.push(id),
                None => return vec![UNK],
            }
            start = end;
        }
        pieces
    }

    /// Normalizes and tokenizes free text.
    pub fn tokenize(&self, text: &str) -> Vec<TokenId> {
        normalize_words(text)
            .iter()
            .flat_map(|w| self.tokenize_word(w))
            .collect()
    }

    /// Regroups token ids into surface words, merging `##` pieces.
    pub fn words(&self, ids: &[TokenId]) -> Vec<String> {
        let mut words: Vec<String> = Vec::new();
        for &id in ids {
            let tok = self.token(id);
            match tok.strip_prefix(CONTINUATION) {
                Some(rest) if !words.is_empty() => words.last_mut().unwrap().push_str(rest),
                Some(rest) => words.push(rest.to_string()),
                None => words.push(tok.to_string()),
            }
        }
        words
    }

    pub fn detokenize(&self, ids: &[TokenId]) -> String {
        self.words(ids).join(" ")
    }
}
