//! Tagging and generation losses, the bag-of-words constraint and its
//! weight schedule.

use std::collections::BTreeMap;

use rand::RngCore;

use crate::datapipe::{EncodedInput, Label, TokenId, SPECIALS};
use crate::model::{forward, Forward, Layout, ModelConfig, ModelError};
use crate::numerics::{Graph, NumericsError, ParameterStore, Real, Tensor, Var};

#[derive(Debug, thiserror::Error)]
pub enum ObjectiveError {
    #[error("schedule needs w_m > 0 and t_total >= 1 (got {w_m}, {t_total})")]
    BadSchedule { w_m: f64, t_total: usize },
    #[error("step {t} is past the end of the schedule ({t_total})")]
    StepOutOfRange { t: usize, t_total: usize },
    #[error("positive-label weight must be > 0, got {0}")]
    BadClassWeight(f64),
    #[error("{what}: expected {expected} entries, got {got}")]
    Length {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Logarithmic ramp for the bag-of-words weight.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Schedule {
    w_m: f64,
    t_total: usize,
}

impl Schedule {
    pub fn new(w_m: f64, t_total: usize) -> Result<Self, ObjectiveError> {
        if !(w_m > 0.0 && w_m.is_finite()) || t_total == 0 {
            return Err(ObjectiveError::BadSchedule { w_m, t_total });
        }
        Ok(Self { w_m, t_total })
    }

    pub fn w_m(&self) -> f64 {
        self.w_m
    }

    pub fn t_total(&self) -> usize {
        self.t_total
    }
}

/// `ln((e^{w_m} - 1)/t_total · t + 1)`: zero at the start, `w_m` at the end.
pub fn bwc_weight(t: usize, s: &Schedule) -> Result<f64, ObjectiveError> {
    if t > s.t_total {
        return Err(ObjectiveError::StepOutOfRange { t, t_total: s.t_total });
    }
    let frac = t as f64 / s.t_total as f64;
    Ok((s.w_m.exp_m1() * frac).ln_1p())
}

/// Scalar form of the combined objective.
pub fn total_loss(l_pke: f64, l_akg: f64, l_bow: f64, t: usize, s: &Schedule) -> Result<f64, ObjectiveError> {
    Ok(l_pke + l_akg + bwc_weight(t, s)? * l_bow)
}

/// Word-id → count map over a per-sample support.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BagOfWords {
    counts: BTreeMap<TokenId, f64>,
}

impl BagOfWords {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, w: TokenId, c: f64) {
        *self.counts.entry(w).or_insert(0.0) += c;
    }

    pub fn get(&self, w: TokenId) -> f64 {
        self.counts.get(&w).copied().unwrap_or(0.0)
    }

    pub fn contains(&self, w: TokenId) -> bool {
        self.counts.contains_key(&w)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (TokenId, f64)> + '_ {
        self.counts.iter().map(|(&w, &c)| (w, c))
    }

    /// Values over `support`, zero where absent.
    pub fn dense(&self, support: &[TokenId]) -> Vec<f64> {
        support.iter().map(|&w| self.get(w)).collect()
    }
}

fn counts_toward_bow(w: TokenId) -> bool {
    (w as usize) >= SPECIALS.len()
}

/// Gold bag: each labeled keyphrase position of the document plus the gold
/// token at each masked target position. Specials and delimiters are left
/// out.
pub fn gold_bow(input: &EncodedInput) -> BagOfWords {
    let mut bag = BagOfWords::new();
    for (&w, l) in input.document().iter().zip(&input.labels) {
        if l.is_keyphrase() && counts_toward_bow(w) {
            bag.add(w, 1.0);
        }
    }
    for &w in &input.mask_gold {
        if counts_toward_bow(w) {
            bag.add(w, 1.0);
        }
    }
    bag
}

fn argmax(row: &[impl Real]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Tokens the model currently predicts as keyphrase material: document
/// tokens whose argmax tag is B/I/X and the argmax token at each mask.
pub fn predicted_tokens<T: Real>(pke_probs: &Tensor<T>, akg_probs: Option<&Tensor<T>>, doc: &[TokenId]) -> Vec<TokenId> {
    let mut out = Vec::new();
    for (i, &w) in doc.iter().enumerate() {
        if Label::from_index(argmax(pke_probs.row(i))).is_keyphrase() {
            out.push(w);
        }
    }
    if let Some(a) = akg_probs {
        for r in 0..a.rows() {
            out.push(argmax(a.row(r)) as TokenId);
        }
    }
    out.retain(|&w| counts_toward_bow(w));
    out
}

/// Sorted support: gold words, plus predicted words when `dynamic`.
pub fn bow_support(gold: &BagOfWords, predicted: &[TokenId], dynamic: bool) -> Vec<TokenId> {
    let mut s: Vec<TokenId> = gold.iter().map(|(w, _)| w).collect();
    if dynamic {
        s.extend(predicted.iter().copied().filter(|&w| counts_toward_bow(w)));
    }
    s.sort_unstable();
    s.dedup();
    s
}

/// Sum of the winning tag probability over positions of each support word,
/// counting only positions whose winning tag is B, I or X. `None` when no
/// such position exists.
pub fn predicted_present_bow<T: Real>(
    g: &mut Graph<T>,
    pke_probs: Var,
    doc: &[TokenId],
    support: &[TokenId],
) -> Result<Option<Var>, ObjectiveError> {
    let probs = g.value(pke_probs);
    if probs.rows() != doc.len() {
        return Err(ObjectiveError::Length {
            what: "document",
            expected: probs.rows(),
            got: doc.len(),
        });
    }
    let mut at = Vec::new();
    let mut groups = Vec::new();
    for (i, w) in doc.iter().enumerate() {
        let best = argmax(probs.row(i));
        if !Label::from_index(best).is_keyphrase() {
            continue;
        }
        if let Ok(slot) = support.binary_search(w) {
            at.push((i, best));
            groups.push(slot);
        }
    }
    if at.is_empty() {
        return Ok(None);
    }
    let picked = g.pick(pke_probs, &at)?;
    Ok(Some(g.segment_sum(picked, &groups, support.len())?))
}

/// Column sums of the masked-position distributions over the support.
pub fn predicted_absent_bow<T: Real>(g: &mut Graph<T>, akg_probs: Var, support: &[TokenId]) -> Result<Var, ObjectiveError> {
    let cols: Vec<usize> = support.iter().map(|&w| w as usize).collect();
    Ok(g.column_sums(akg_probs, &cols)?)
}

/// Mean squared error between `V^p + V^a` and the gold bag over the
/// support. An empty support gives a constant zero.
pub fn bow_loss<T: Real>(
    g: &mut Graph<T>,
    present: Option<Var>,
    absent: Option<Var>,
    gold: &BagOfWords,
    support: &[TokenId],
) -> Result<Var, ObjectiveError> {
    if support.is_empty() {
        return Ok(g.constant(Tensor::scalar(T::zero()))?);
    }
    let target: Vec<T> = gold.dense(support).into_iter().map(T::from_f64).collect();
    let v = match (present, absent) {
        (Some(p), Some(a)) => g.add(p, a)?,
        (Some(v), None) | (None, Some(v)) => v,
        (None, None) => g.constant(Tensor::vector(vec![T::zero(); support.len()])?)?,
    };
    Ok(g.mse(v, &target)?)
}

/// Weighted tagging cross-entropy, summed over document positions.
pub fn pke_loss<T: Real>(g: &mut Graph<T>, logits: Var, labels: &[Label], w_c: f64) -> Result<Var, ObjectiveError> {
    if !(w_c > 0.0) {
        return Err(ObjectiveError::BadClassWeight(w_c));
    }
    let targets: Vec<usize> = labels.iter().map(|l| l.index()).collect();
    let weights: Vec<T> = labels
        .iter()
        .map(|l| T::from_f64(if l.is_keyphrase() { w_c } else { 1.0 }))
        .collect();
    Ok(g.cross_entropy(logits, &targets, &weights)?)
}

/// Masked-token cross-entropy summed over masked positions; `None` when
/// nothing was masked.
pub fn akg_loss<T: Real>(g: &mut Graph<T>, logits: Option<Var>, gold: &[TokenId]) -> Result<Option<Var>, ObjectiveError> {
    let Some(logits) = logits else {
        return Ok(None);
    };
    let targets: Vec<usize> = gold.iter().map(|&w| w as usize).collect();
    let weights = vec![T::one(); targets.len()];
    Ok(Some(g.cross_entropy(logits, &targets, &weights)?))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    /// Weight on the B/I/X classes in the tagging loss.
    pub w_c: f64,
    /// Grow the bag support with predicted tokens every step.
    pub dynamic_vocab: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            w_c: 5.0,
            dynamic_vocab: true,
        }
    }
}

/// The three per-sample loss nodes. `akg` is `None` when nothing was masked.
#[derive(Clone, Copy, Debug)]
pub struct SampleLosses {
    pub pke: Var,
    pub akg: Option<Var>,
    pub bow: Var,
}

pub fn sample_losses<T: Real>(
    g: &mut Graph<T>,
    fwd: &Forward,
    input: &EncodedInput,
    cfg: &LossConfig,
) -> Result<SampleLosses, ObjectiveError> {
    let pke = pke_loss(g, fwd.pke_logits, &input.labels, cfg.w_c)?;
    let akg = akg_loss(g, fwd.akg_logits, &input.mask_gold)?;

    let pke_probs = g.row_softmax(fwd.pke_logits)?;
    let akg_probs = fwd.akg_logits.map(|v| g.row_softmax(v)).transpose()?;
    let gold = gold_bow(input);
    let predicted = predicted_tokens(g.value(pke_probs), akg_probs.map(|v| g.value(v)), input.document());
    let support = bow_support(&gold, &predicted, cfg.dynamic_vocab);
    let vp = predicted_present_bow(g, pke_probs, input.document(), &support)?;
    let va = match akg_probs {
        Some(p) if !support.is_empty() => Some(predicted_absent_bow(g, p, &support)?),
        _ => None,
    };
    let bow = bow_loss(g, vp, va, &gold, &support)?;
    Ok(SampleLosses { pke, akg, bow })
}

/// Batch-mean component values, for logging.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossValues {
    pub pke: f64,
    pub akg: f64,
    pub bow: f64,
    pub total: f64,
}

/// Builds `mean_i(L_PKE + L_AKG + w_bow·L_BoW)` over a batch. Dropout is
/// active iff `train_rng` is given.
#[allow(clippy::too_many_arguments)]
pub fn batch_loss<T: Real>(
    g: &mut Graph<T>,
    model_cfg: &ModelConfig,
    layout: &Layout,
    store: &ParameterStore<T>,
    batch: &[EncodedInput],
    loss_cfg: &LossConfig,
    w_bow: f64,
    mut train_rng: Option<&mut dyn RngCore>,
) -> Result<(Var, LossValues), ObjectiveError> {
    let mut terms = Vec::new();
    let mut values = LossValues::default();
    let inv = 1.0 / batch.len().max(1) as f64;
    for input in batch {
        let rng = train_rng.as_mut().map(|r| &mut **r as &mut dyn RngCore);
        let fwd = forward(model_cfg, layout, store, g, input, rng)?;
        let l = sample_losses(g, &fwd, input, loss_cfg)?;
        values.pke += g.value(l.pke).item().as_f64() * inv;
        if let Some(a) = l.akg {
            values.akg += g.value(a).item().as_f64() * inv;
        }
        values.bow += g.value(l.bow).item().as_f64() * inv;
        terms.push(l.pke);
        terms.extend(l.akg);
        if w_bow != 0.0 {
            terms.push(g.scale(l.bow, T::from_f64(w_bow))?);
        }
    }
    let mut total = *terms.first().ok_or(NumericsError::BadShape(vec![0]))?;
    for &t in &terms[1..] {
        total = g.add(total, t)?;
    }
    let total = g.scale(total, T::from_f64(inv))?;
    values.total = g.value(total).item().as_f64();
    Ok((total, values))
}
