use crate::datapipe::{TokenId, CLS, MASK, PAD, SEP, UNK};

use super::InferenceError;

/// Source of next-token log-probabilities given a target prefix.
pub trait NextTokenScorer {
    type Error: From<InferenceError>;

    fn vocab_size(&self) -> usize;
    fn log_probs(&self, prefix: &[TokenId]) -> Result<Vec<f64>, Self::Error>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BeamConfig {
    pub beam_size: usize,
    /// Maximum target length, counting the closing `[SEP]`.
    pub max_target_len: usize,
}

impl Default for BeamConfig {
    fn default() -> Self {
        Self {
            beam_size: 5,
            max_target_len: 12,
        }
    }
}

impl BeamConfig {
    pub fn validate(&self) -> Result<(), InferenceError> {
        if self.beam_size == 0 || self.max_target_len == 0 {
            return Err(InferenceError::BadBeamConfig);
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BeamState {
    pub tokens: Vec<TokenId>,
    pub log_prob: f64,
    pub finished: bool,
}

/// Tokens that may never be generated.
fn emittable(t: TokenId) -> bool {
    !matches!(t, PAD | UNK | CLS | MASK)
}

fn better(a: &BeamState, b: &BeamState) -> std::cmp::Ordering {
    b.log_prob.total_cmp(&a.log_prob).then_with(|| a.tokens.cmp(&b.tokens))
}

/// Mask-predict beam search. Each step expands every live beam with its
/// `beam_size` best tokens and keeps the global best `beam_size`
/// candidates; those ending in `[SEP]` or reaching `max_target_len` are set
/// aside as finished. Stops once no live beam can beat the best finished
/// one. Returns the best finished beam, or the best live beam if none
/// finished.
pub fn beam_search<S: NextTokenScorer>(scorer: &S, cfg: &BeamConfig) -> Result<BeamState, S::Error> {
    cfg.validate()?;
    let mut live = vec![BeamState {
        tokens: Vec::new(),
        log_prob: 0.0,
        finished: false,
    }];
    let mut finished: Vec<BeamState> = Vec::new();
    for step in 1..=cfg.max_target_len {
        let mut candidates = Vec::new();
        for beam in &live {
            let lp = scorer.log_probs(&beam.tokens)?;
            let mut order: Vec<usize> = (0..lp.len()).filter(|&t| emittable(t as TokenId)).collect();
            order.sort_by(|&a, &b| lp[b].total_cmp(&lp[a]).then(a.cmp(&b)));
            for &t in order.iter().take(cfg.beam_size) {
                let mut tokens = beam.tokens.clone();
                tokens.push(t as TokenId);
                candidates.push(BeamState {
                    finished: t as TokenId == SEP || step == cfg.max_target_len,
                    tokens,
                    log_prob: beam.log_prob + lp[t],
                });
            }
        }
        candidates.sort_by(better);
        candidates.truncate(cfg.beam_size);
        let (done, rest): (Vec<_>, Vec<_>) = candidates.into_iter().partition(|c| c.finished);
        finished.extend(done);
        finished.sort_by(better);
        live = rest;
        match (finished.first(), live.first()) {
            (_, None) => break,
            (Some(f), Some(l)) if f.log_prob >= l.log_prob => break,
            _ => {}
        }
    }
    Ok(finished.into_iter().next().or_else(|| live.into_iter().next()).expect("at least one beam"))
}

/// Sum of next-token log-probabilities along `tokens`.
pub fn sequence_log_prob<S: NextTokenScorer>(scorer: &S, tokens: &[TokenId]) -> Result<f64, S::Error> {
    let mut total = 0.0;
    for i in 0..tokens.len() {
        total += scorer.log_probs(&tokens[..i])?[tokens[i] as usize];
    }
    Ok(total)
}

/// Best complete sequence by brute force over every emittable token
/// sequence that ends in `[SEP]` or has length `max_target_len`.
pub fn exhaustive_best<S: NextTokenScorer>(scorer: &S, max_target_len: usize) -> Result<BeamState, S::Error> {
    fn walk<S: NextTokenScorer>(
        scorer: &S,
        prefix: &mut Vec<TokenId>,
        lp: f64,
        max: usize,
        best: &mut Option<BeamState>,
    ) -> Result<(), S::Error> {
        let next = scorer.log_probs(prefix)?;
        for t in 0..next.len() {
            let tok = t as TokenId;
            if !emittable(tok) {
                continue;
            }
            let score = lp + next[t];
            prefix.push(tok);
            if tok == SEP || prefix.len() == max {
                let cand = BeamState {
                    tokens: prefix.clone(),
                    log_prob: score,
                    finished: true,
                };
                if best.as_ref().is_none_or(|b| better(&cand, b).is_lt()) {
                    *best = Some(cand);
                }
            } else {
                walk(scorer, prefix, score, max, best)?;
            }
            prefix.pop();
        }
        Ok(())
    }
    let mut best = None;
    walk(scorer, &mut Vec::new(), 0.0, max_target_len.max(1), &mut best)?;
    Ok(best.expect("vocabulary has an emittable token"))
}
