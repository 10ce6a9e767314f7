//! Decoding: tag-span extraction for present phrases and mask-predict beam
//! search for the absent sequence.

mod beam;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

pub use beam::{beam_search, exhaustive_best, sequence_log_prob, BeamConfig, BeamState, NextTokenScorer};

use crate::datapipe::{assemble_decode, DataError, Label, TokenId, Vocabulary, DELIM};
use crate::evaluation::stem_key;
use crate::model::{ModelError, UniKeyphrase};
use crate::numerics::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum InferenceError {
    #[error("beam_size and max_target_len must be at least 1")]
    BadBeamConfig,
    #[error("document is empty")]
    EmptyDocument,
    #[error("max_len {max_len} leaves no room for a document with max_target_len {max_target_len}")]
    NoRoom { max_len: usize, max_target_len: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Present,
    Absent,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredPhrase {
    pub tokens: Vec<TokenId>,
    pub surface: String,
    /// Mean tag probability for present phrases, sequence log-probability
    /// for absent ones.
    pub score: f64,
    pub origin: Origin,
    pub rank: usize,
    /// Document offset of the first token (present phrases only).
    pub start: Option<usize>,
}

/// Greedy tag decoding without deduplication, in document order. A phrase
/// opens at B, or at I/X with no open phrase; it closes at O or the next B.
pub fn present_spans(pke_probs: &Tensor<f32>, doc: &[TokenId]) -> Vec<(usize, Vec<TokenId>, f64)> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, Vec<TokenId>, Vec<f64>)> = None;
    let close = |open: &mut Option<(usize, Vec<TokenId>, Vec<f64>)>, spans: &mut Vec<_>| {
        if let Some((start, toks, probs)) = open.take() {
            let score = probs.iter().sum::<f64>() / probs.len() as f64;
            spans.push((start, toks, score));
        }
    };
    for (i, &tok) in doc.iter().enumerate() {
        let row = pke_probs.row(i);
        let (best, p) = row
            .iter()
            .enumerate()
            .fold((0, f32::NEG_INFINITY), |acc, (j, &v)| if v > acc.1 { (j, v) } else { acc });
        match Label::from_index(best) {
            Label::O => close(&mut open, &mut spans),
            Label::B => {
                close(&mut open, &mut spans);
                open = Some((i, vec![tok], vec![f64::from(p)]));
            }
            Label::I | Label::X => match open.as_mut() {
                Some((_, toks, probs)) => {
                    toks.push(tok);
                    probs.push(f64::from(p));
                }
                None => open = Some((i, vec![tok], vec![f64::from(p)])),
            },
        }
    }
    close(&mut open, &mut spans);
    spans
}

/// Present phrases ranked by mean label probability (ties: earlier first),
/// deduplicated by stem keeping the best-scored copy.
pub fn extract_present(pke_probs: &Tensor<f32>, doc: &[TokenId], vocab: &Vocabulary) -> Vec<ScoredPhrase> {
    let mut spans = present_spans(pke_probs, doc);
    spans.sort_by(|a, b| b.2.total_cmp(&a.2));
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (start, tokens, score) in spans {
        let surface = vocab.detokenize(&tokens);
        if !seen.insert(stem_key(&surface)) {
            continue;
        }
        out.push(ScoredPhrase {
            rank: out.len(),
            tokens,
            surface,
            score,
            origin: Origin::Present,
            start: Some(start),
        });
    }
    out
}

/// Splits a decoded target on `;` into phrases in sequence order, dropping
/// empties and stem duplicates. Every phrase carries the sequence `score`.
pub fn split_absent(seq: &[TokenId], vocab: &Vocabulary, score: f64) -> Vec<ScoredPhrase> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for part in seq.split(|&t| t == DELIM) {
        let tokens: Vec<TokenId> = part.iter().copied().filter(|&t| !Vocabulary::is_special(t)).collect();
        if tokens.is_empty() {
            continue;
        }
        let surface = vocab.detokenize(&tokens);
        let key = stem_key(&surface);
        if key.is_empty() || !seen.insert(key) {
            continue;
        }
        out.push(ScoredPhrase {
            rank: out.len(),
            tokens,
            surface,
            score,
            origin: Origin::Absent,
            start: None,
        });
    }
    out
}

/// Next-token distributions from a trained model for one document.
pub struct ModelScorer<'a> {
    model: &'a UniKeyphrase,
    doc: &'a [TokenId],
}

impl<'a> ModelScorer<'a> {
    pub fn new(model: &'a UniKeyphrase, doc: &'a [TokenId]) -> Self {
        Self { model, doc }
    }
}

impl NextTokenScorer for ModelScorer<'_> {
    type Error = InferenceError;

    fn vocab_size(&self) -> usize {
        self.model.config.vocab_size
    }

    fn log_probs(&self, prefix: &[TokenId]) -> Result<Vec<f64>, InferenceError> {
        let input = assemble_decode(self.doc, prefix, self.model.config.max_len)?;
        let mut g = crate::numerics::Graph::<f32>::new();
        let f = self.model.forward(&mut g, &input, None)?;
        let logits = g.value(f.akg_logits.expect("decode input has one mask"));
        let row: Vec<f64> = logits.row(0).iter().map(|&v| f64::from(v)).collect();
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
        Ok(row.into_iter().map(|v| v - lse).collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionSet {
    pub present: Vec<ScoredPhrase>,
    pub absent: Vec<ScoredPhrase>,
    /// Raw decoded target sequence.
    pub sequence: Vec<TokenId>,
}

impl PredictionSet {
    pub fn present_top(&self, k: usize) -> &[ScoredPhrase] {
        &self.present[..k.min(self.present.len())]
    }

    pub fn absent_top(&self, k: usize) -> &[ScoredPhrase] {
        &self.absent[..k.min(self.absent.len())]
    }

    pub fn record(&self, id: &str) -> PredictionRecord {
        PredictionRecord {
            id: id.to_string(),
            present: self
                .present
                .iter()
                .map(|p| PresentOut {
                    phrase: p.surface.clone(),
                    score: p.score,
                })
                .collect(),
            absent: self.absent.iter().map(|p| p.surface.clone()).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PresentOut {
    pub phrase: String,
    pub score: f64,
}

/// One line of prediction output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub present: Vec<PresentOut>,
    pub absent: Vec<String>,
}

impl PredictionRecord {
    pub fn present_phrases(&self) -> Vec<String> {
        self.present.iter().map(|p| p.phrase.clone()).collect()
    }
}

/// Tokenizes, tags and decodes one raw document.
pub fn predict(model: &UniKeyphrase, vocab: &Vocabulary, document: &str, beam: &BeamConfig) -> Result<PredictionSet, InferenceError> {
    beam.validate()?;
    let mut doc = vocab.tokenize(document);
    if doc.is_empty() {
        return Err(InferenceError::EmptyDocument);
    }
    let max_len = model.config.max_len;
    // room for [CLS] doc [SEP] and a prefix of max_target_len - 1 plus [MASK]
    let budget = max_len.checked_sub(beam.max_target_len + 2).filter(|&b| b > 0).ok_or(InferenceError::NoRoom {
        max_len,
        max_target_len: beam.max_target_len,
    })?;
    doc.truncate(budget);

    let first = model.infer(&assemble_decode(&doc, &[], max_len)?)?;
    let present = extract_present(&first.pke_probs, &doc, vocab);
    let best = beam_search(&ModelScorer::new(model, &doc), beam)?;
    let absent = split_absent(&best.tokens, vocab, best.log_prob);
    Ok(PredictionSet {
        present,
        absent,
        sequence: best.tokens,
    })
}
