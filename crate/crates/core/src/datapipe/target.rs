use rand::Rng;

use super::{DataError, TokenId, DELIM, MASK, SEP};

/// The absent-keyphrase segment after masking.
///
/// `ids` holds the delimiter-joined absent phrases followed by the closing
/// `[SEP]` slot; that slot is maskable too, so the model learns where the
/// sequence ends. An empty absent set yields empty `ids`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskedTarget {
    pub ids: Vec<TokenId>,
    /// Offsets into `ids` that were replaced by `[MASK]`, ascending.
    pub positions: Vec<usize>,
    /// Original token at each masked offset.
    pub gold: Vec<TokenId>,
}

impl MaskedTarget {
    /// Number of target tokens, not counting the closing `[SEP]` slot.
    pub fn len(&self) -> usize {
        self.ids.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Joins the absent phrases with `;`, appends the closing `[SEP]`, and masks
/// each slot independently with probability `mask_prob` (at least one).
pub fn build_target<R: Rng + ?Sized>(
    absent: &[Vec<TokenId>],
    mask_prob: f64,
    rng: &mut R,
) -> Result<MaskedTarget, DataError> {
    if !(mask_prob > 0.0 && mask_prob <= 1.0) {
        return Err(DataError::BadMaskProb(mask_prob));
    }
    let mut ids: Vec<TokenId> = Vec::new();
    for phrase in absent.iter().filter(|p| !p.is_empty()) {
        if !ids.is_empty() {
            ids.push(DELIM);
        }
        ids.extend_from_slice(phrase);
    }
    if ids.is_empty() {
        return Ok(MaskedTarget {
            ids,
            positions: Vec::new(),
            gold: Vec::new(),
        });
    }
    ids.push(SEP);
    let mut positions: Vec<usize> = (0..ids.len()).filter(|_| rng.gen_bool(mask_prob)).collect();
    if positions.is_empty() {
        positions.push(rng.gen_range(0..ids.len()));
    }
    let gold = positions.iter().map(|&p| ids[p]).collect();
    for &p in &positions {
        ids[p] = MASK;
    }
    Ok(MaskedTarget { ids, positions, gold })
}
