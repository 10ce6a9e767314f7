use rand::Rng;

use super::{build_target, label_bixo, DataError, Label, Sample, TokenId, Vocabulary, CLS, MASK, PAD, SEP};
use crate::numerics::{Real, Tensor};

/// Additive logit for disallowed attention pairs.
pub const MASKED_LOGIT: f64 = -1e9;

/// Query/key permission matrix for the joint sequence. The first `source`
/// positions (`[CLS] X [SEP]`) see each other bidirectionally; target
/// positions see the whole source plus target positions up to themselves.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttentionMask {
    size: usize,
    source: usize,
    allowed: Vec<bool>,
}

impl AttentionMask {
    pub fn seq2seq(size: usize, source: usize) -> Self {
        let source = source.min(size);
        let mut allowed = vec![false; size * size];
        for q in 0..size {
            for k in 0..size {
                allowed[q * size + k] = k < source || (q >= source && k <= q);
            }
        }
        Self { size, source, allowed }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn source_len(&self) -> usize {
        self.source
    }

    pub fn allows(&self, query: usize, key: usize) -> bool {
        self.allowed[query * self.size + key]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.allowed
    }

    /// `0` where allowed, [`MASKED_LOGIT`] elsewhere.
    pub fn additive<T: Real>(&self) -> Tensor<T> {
        let data = self
            .allowed
            .iter()
            .map(|&a| if a { T::zero() } else { T::from_f64(MASKED_LOGIT) })
            .collect();
        Tensor::matrix(self.size, self.size, data).expect("mask is square and nonempty")
    }
}

/// Model input `[CLS] X [SEP] K_a^m [SEP]` with labels and mask targets.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedInput {
    pub ids: Vec<TokenId>,
    /// 0 for the source segment, 1 for the target segment.
    pub segments: Vec<usize>,
    /// One BIXO label per document token.
    pub labels: Vec<Label>,
    /// Number of document tokens `m`.
    pub source_len: usize,
    /// Number of target tokens `n`, excluding the closing slot.
    pub target_len: usize,
    /// Absolute positions holding `[MASK]`.
    pub mask_positions: Vec<usize>,
    pub mask_gold: Vec<TokenId>,
    pub attention: AttentionMask,
}

impl EncodedInput {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Document tokens (positions `1..=m`).
    pub fn document(&self) -> &[TokenId] {
        &self.ids[1..=self.source_len]
    }

    /// Positions read by the tagging head.
    pub fn document_positions(&self) -> Vec<usize> {
        (1..=self.source_len).collect()
    }

    fn from_parts(
        document: &[TokenId],
        labels: Vec<Label>,
        target: &[TokenId],
        mask_positions_rel: &[usize],
        mask_gold: Vec<TokenId>,
    ) -> Self {
        let m = document.len();
        let mut ids = Vec::with_capacity(m + target.len() + 3);
        ids.push(CLS);
        ids.extend_from_slice(document);
        ids.push(SEP);
        let source = ids.len();
        if target.is_empty() {
            ids.push(SEP);
        } else {
            ids.extend_from_slice(target);
        }
        let segments = (0..ids.len()).map(|i| usize::from(i >= source)).collect();
        let attention = AttentionMask::seq2seq(ids.len(), source);
        Self {
            target_len: ids.len() - source - 1,
            ids,
            segments,
            labels,
            source_len: m,
            mask_positions: mask_positions_rel.iter().map(|p| p + source).collect(),
            mask_gold,
            attention,
        }
    }
}

/// Builds the training input for one sample. Over-long documents are cut
/// from the end; the target is never truncated.
pub fn assemble<R: Rng + ?Sized>(
    sample: &Sample,
    vocab: &Vocabulary,
    mask_prob: f64,
    max_len: usize,
    rng: &mut R,
) -> Result<EncodedInput, DataError> {
    let target = build_target(&sample.absent, mask_prob, rng)?;
    let n = target.len();
    if n + 3 > max_len {
        return Err(DataError::TargetTooLong {
            id: sample.id.clone(),
            len: n + 3,
            max_len,
        });
    }
    let mut labels = label_bixo(&sample.document, &sample.present, vocab)?;
    let keep = sample.document.len().min(max_len - n - 3);
    if keep == 0 {
        return Err(DataError::EmptyDocument);
    }
    labels.truncate(keep);
    Ok(EncodedInput::from_parts(
        &sample.document[..keep],
        labels,
        &target.ids,
        &target.positions,
        target.gold,
    ))
}

/// Decoding input `[CLS] X [SEP] prefix [MASK]`: the prediction for the next
/// target token is read at the final position.
pub fn assemble_decode(document: &[TokenId], prefix: &[TokenId], max_len: usize) -> Result<EncodedInput, DataError> {
    if document.is_empty() {
        return Err(DataError::EmptyDocument);
    }
    if prefix.len() + 3 > max_len {
        return Err(DataError::TargetTooLong {
            id: String::from("<decode>"),
            len: prefix.len() + 3,
            max_len,
        });
    }
    let keep = document.len().min(max_len - prefix.len() - 3);
    let mut target = prefix.to_vec();
    target.push(MASK);
    Ok(EncodedInput::from_parts(
        &document[..keep],
        vec![Label::O; keep],
        &target,
        &[prefix.len()],
        vec![PAD],
    ))
}
