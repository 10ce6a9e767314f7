use serde::{Deserialize, Serialize};

use super::{find_matches, DataError, TokenId, Vocabulary};

/// Tag alphabet for present-keyphrase extraction. The discriminant is the
/// class index used by the tagging head.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    /// First token of the first word of a keyphrase.
    B = 0,
    /// First token of a later word inside a keyphrase.
    I = 1,
    /// `##` continuation inside a keyphrase.
    X = 2,
    O = 3,
}

impl Label {
    pub const ALL: [Label; 4] = [Label::B, Label::I, Label::X, Label::O];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Label {
        Self::ALL[i]
    }

    pub fn is_keyphrase(self) -> bool {
        self != Label::O
    }

    pub fn as_char(self) -> char {
        match self {
            Label::B => 'B',
            Label::I => 'I',
            Label::X => 'X',
            Label::O => 'O',
        }
    }
}

/// BIXO labels for `doc`. Occurrences of present phrases are taken
/// leftmost-longest without overlap; every phrase must occur at least once.
pub fn label_bixo(doc: &[TokenId], present: &[Vec<TokenId>], vocab: &Vocabulary) -> Result<Vec<Label>, DataError> {
    let is_cont = |t: &TokenId| vocab.is_continuation(*t);
    let mut starts: Vec<Vec<usize>> = Vec::with_capacity(present.len());
    for p in present {
        let m = find_matches(doc, p, is_cont);
        if m.is_empty() {
            return Err(DataError::UnmatchedPhrase(vocab.detokenize(p)));
        }
        starts.push(m);
    }
    let mut labels = vec![Label::O; doc.len()];
    let mut i = 0;
    while i < doc.len() {
        let longest = present
            .iter()
            .zip(&starts)
            .filter(|(_, s)| s.binary_search(&i).is_ok())
            .map(|(p, _)| p.len())
            .max();
        match longest {
            Some(len) => {
                for (k, &tok) in doc[i..i + len].iter().enumerate() {
                    labels[i + k] = if vocab.is_continuation(tok) {
                        Label::X
                    } else if k == 0 {
                        Label::B
                    } else {
                        Label::I
                    };
                }
                i += len;
            }
            None => i += 1,
        }
    }
    Ok(labels)
}
