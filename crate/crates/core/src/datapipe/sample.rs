use serde::{Deserialize, Serialize};

use super::{DataError, TokenId, Vocabulary};

/// One corpus line: `{"id": ..., "document": ..., "keyphrases": [...]}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSample {
    pub id: String,
    pub document: String,
    pub keyphrases: Vec<String>,
}

/// A tokenized document with its gold keyphrases split into present and
/// absent sets.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub document: Vec<TokenId>,
    pub keyphrases: Vec<Vec<TokenId>>,
    pub present: Vec<Vec<TokenId>>,
    pub absent: Vec<Vec<TokenId>>,
}

/// Start offsets where `phrase` occurs contiguously in `doc`, aligned to
/// word boundaries: the match may neither start nor be followed by a
/// continuation piece.
pub fn find_matches<T: PartialEq>(doc: &[T], phrase: &[T], is_continuation: impl Fn(&T) -> bool) -> Vec<usize> {
    if phrase.is_empty() || phrase.len() > doc.len() {
        return Vec::new();
    }
    (0..=doc.len() - phrase.len())
        .filter(|&i| {
            doc[i..i + phrase.len()] == *phrase
                && !is_continuation(&doc[i])
                && doc.get(i + phrase.len()).is_none_or(|t| !is_continuation(t))
        })
        .collect()
}

/// Present iff the phrase occurs as a contiguous run of whole words.
pub fn is_present<T: PartialEq>(doc: &[T], phrase: &[T], is_continuation: impl Fn(&T) -> bool) -> bool {
    !find_matches(doc, phrase, is_continuation).is_empty()
}

/// Tokenizes a raw sample and partitions its keyphrases. Empty keyphrases
/// (nothing left after normalization) are dropped.
pub fn partition_keyphrases(raw: &RawSample, vocab: &Vocabulary) -> Result<Sample, DataError> {
    let document = vocab.tokenize(&raw.document);
    let keyphrases: Vec<Vec<TokenId>> = raw
        .keyphrases
        .iter()
        .map(|k| vocab.tokenize(k))
        .filter(|k| !k.is_empty())
        .collect();
    let (present, absent) = keyphrases
        .iter()
        .cloned()
        .partition(|k| is_present(&document, k, |&t| vocab.is_continuation(t)));
    Ok(Sample {
        id: raw.id.clone(),
        document,
        keyphrases,
        present,
        absent,
    })
}
